"""Data model and bit-exact file formats.

Feature tensors travel as FTEN files: magic ``FTEN``, u32 LE version (=1),
u32 LE ndims, ``ndims`` u32 LE dims, then float32 LE payload in C order.
Saliency maps are written as binary PGM (P5, maxval 255) with an optional
FTEN sidecar carrying the unquantized values. Dataset manifests are CSV.
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    BadVersion,
    DimMismatch,
    DuplicateId,
    IoError,
    NegativeFeature,
    ParseError,
)

FTEN_MAGIC = b"FTEN"
FTEN_VERSION = 1
DEFAULT_SEED = 42

MANIFEST_FIELDS = ("id", "image_path", "features_path", "bu_maps", "labels")


@dataclass(frozen=True)
class FeatureMap:
    """Dense grid of per-location feature vectors, (height, width, depth)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise DimMismatch(f"feature map must be 3-d, got shape {arr.shape}")
        if arr.size and arr.min() < 0.0:
            raise NegativeFeature("feature map contains negative values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def depth(self) -> int:
        return self.data.shape[2]

    @property
    def n_features(self) -> int:
        return self.height * self.width

    def feature(self, m: int) -> np.ndarray:
        """The d-vector at flat row-major grid index ``m``."""
        return self.data.reshape(-1, self.depth)[m]


@dataclass(frozen=True)
class SaliencyMap:
    """Single-channel map with values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimMismatch(f"saliency map must be 2-d and non-empty, got {arr.shape}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise DimMismatch("saliency values must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LinearModel:
    """Weight vector and bias of a binary margin classifier."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise DimMismatch("weights must be a vector")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise DimMismatch("model parameters must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image_path: Path | None
    features_path: Path
    bu_map_paths: tuple[Path, ...]
    labels: frozenset[str]
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def categories(self) -> tuple[str, ...]:
        """Union of entry labels in first-appearance order."""
        seen: dict[str, None] = {}
        for e in self.entries:
            for lbl in sorted(e.labels):
                seen.setdefault(lbl, None)
        return tuple(seen)

    def label_vector(self, category: str) -> np.ndarray:
        """+1/-1 per entry for one category (presence in labels)."""
        return np.array([1 if category in e.labels else -1 for e in self.entries])


# --- FTEN tensors ---

def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DimMismatch(f"truncated file while reading {what}")
    return buf


def load_raw_tensor(path) -> np.ndarray:
    """Decode an FTEN file to a float64 C-order array (any ndims)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FTEN_MAGIC:
            raise BadMagic(f"{path}: expected FTEN magic, got {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FTEN_VERSION:
            raise BadVersion(f"{path}: unsupported FTEN version {version}")
        (ndims,) = struct.unpack("<I", _read_exact(fh, 4, "ndims"))
        dims = struct.unpack(f"<{ndims}I", _read_exact(fh, 4 * ndims, "dims"))
        payload = fh.read()
    expected = int(np.prod(dims, dtype=np.int64)) * 4
    if len(payload) != expected:
        raise DimMismatch(
            f"{path}: payload is {len(payload)} bytes, dims {dims} require {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    return flat.astype(np.float64).reshape(dims)


def load_tensor(path) -> FeatureMap:
    """Load a 3-d FTEN feature tensor; rejects negative values."""
    arr = load_raw_tensor(path)
    if arr.ndim != 3:
        raise DimMismatch(f"{path}: feature tensor must have 3 dims, got {arr.ndim}")
    return FeatureMap(arr)


def save_raw_tensor(arr: np.ndarray, path) -> None:
    """Write any array as FTEN (float32 LE payload), atomically."""
    arr = np.ascontiguousarray(arr)
    header = FTEN_MAGIC + struct.pack("<II", FTEN_VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.astype("<f4").tobytes(order="C")
    atomic_write_bytes(path, header + payload)


def save_tensor(fmap: FeatureMap, path) -> None:
    save_raw_tensor(fmap.data, path)


# --- PGM / PPM ---

def quantize_unit(values: np.ndarray) -> np.ndarray:
    """Map [0,1] reals to u8 by round-half-up of v*255."""
    return np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5).astype(np.uint8)


def save_map(smap: SaliencyMap, path, emit_ften: bool = False) -> None:
    """Write a saliency map as binary PGM; optional FTEN sidecar with raw reals."""
    pixels = quantize_unit(smap.values)
    header = f"P5\n{smap.width} {smap.height}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + pixels.tobytes(order="C"))
    if emit_ften:
        save_raw_tensor(smap.values, Path(path).with_suffix(".ften"))


def save_gray(values: np.ndarray, path) -> None:
    """Write raw u8 grayscale values (e.g. label indices) as binary PGM."""
    arr = np.ascontiguousarray(values, dtype=np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + arr.tobytes(order="C"))


def _parse_netpbm_header(data: bytes, magic: bytes, path) -> tuple[int, int, int, int]:
    """Return (width, height, maxval, payload offset)."""
    if not data.startswith(magic):
        raise BadMagic(f"{path}: expected {magic.decode()} header")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DimMismatch(f"{path}: truncated header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise BadVersion(f"{path}: only maxval 255 supported, got {maxval}")
    return w, h, maxval, pos


def load_pgm(path) -> np.ndarray:
    """Read a binary PGM into a u8 (h, w) array."""
    data = Path(path).read_bytes()
    w, h, _, pos = _parse_netpbm_header(data, b"P5", path)
    payload = data[pos : pos + w * h]
    if len(payload) != w * h:
        raise DimMismatch(f"{path}: PGM payload short ({len(payload)} of {w * h})")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def load_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6) into a u8 (h, w, 3) array."""
    data = Path(path).read_bytes()
    w, h, _, pos = _parse_netpbm_header(data, b"P6", path)
    payload = data[pos : pos + w * h * 3]
    if len(payload) != w * h * 3:
        raise DimMismatch(f"{path}: PPM payload short")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


def save_ppm(pixels: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(pixels, dtype=np.uint8)
    header = f"P6\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + arr.tobytes(order="C"))


def load_map(path) -> SaliencyMap:
    """Read a saliency map from PGM (scaled by 1/255) or FTEN."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == FTEN_MAGIC:
        arr = load_raw_tensor(path)
        if arr.ndim != 2:
            raise DimMismatch(f"{path}: saliency FTEN must be 2-d")
        return SaliencyMap(arr)
    return SaliencyMap(load_pgm(path) / 255.0)


# --- manifest ---

def _split_list(cell: str) -> list[str]:
    return [part for part in cell.split(";") if part] if cell else []


def load_manifest(path, categories: tuple[str, ...] | None = None,
                  check_files: bool = True) -> DatasetManifest:
    """Parse the dataset CSV; paths are resolved relative to the manifest."""
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "empty manifest") from None
        if tuple(header[: len(MANIFEST_FIELDS)]) != MANIFEST_FIELDS:
            raise ParseError(1, f"header must start with {','.join(MANIFEST_FIELDS)}")
        extra_cols = header[len(MANIFEST_FIELDS):]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < len(MANIFEST_FIELDS):
                raise ParseError(lineno, f"expected ≥{len(MANIFEST_FIELDS)} columns, got {len(row)}")
            entry_id, image_cell, feat_cell, bu_cell, label_cell = row[:5]
            if not entry_id:
                raise ParseError(lineno, "empty id")
            if entry_id in seen:
                raise DuplicateId(f"line {lineno}: duplicate id {entry_id!r}")
            seen.add(entry_id)
            if not feat_cell:
                raise ParseError(lineno, "empty features_path")
            features_path = base / feat_cell
            if check_files and not features_path.exists():
                raise ParseError(lineno, f"features file not found: {features_path}")
            labels = frozenset(_split_list(label_cell))
            if categories is not None:
                unknown = labels - set(categories)
                if unknown:
                    raise ParseError(lineno, f"labels not in declared categories: {sorted(unknown)}")
            extras = {name: row[len(MANIFEST_FIELDS) + k].strip()
                      for k, name in enumerate(extra_cols)
                      if len(MANIFEST_FIELDS) + k < len(row)}
            entries.append(ManifestEntry(
                id=entry_id,
                image_path=(base / image_cell) if image_cell else None,
                features_path=features_path,
                bu_map_paths=tuple(base / p for p in _split_list(bu_cell)),
                labels=labels,
                extras=extras,
            ))
    return DatasetManifest(tuple(entries))


def save_manifest(rows: list[dict], path, extra_cols: tuple[str, ...] = ()) -> None:
    """Write manifest rows; each dict holds the five core fields plus extras."""
    fields = MANIFEST_FIELDS + extra_cols
    lines = [",".join(fields)]
    for row in rows:
        lines.append(",".join(str(row.get(f, "")) for f in fields))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


# --- misc ---

def atomic_write_bytes(path, data: bytes) -> None:
    """Write via temp file + rename so readers never observe partial files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic child generator for (seed, stream indices)."""
    return np.random.default_rng([int(seed), *[int(s) for s in stream]])
