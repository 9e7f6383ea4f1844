"""Command-line interface: train, saliency, select-bu, segment, localize,
detect and eval over a dataset manifest.

Configuration comes from ``key = value`` files (# comments) overridden by
flags. Exit codes: 0 ok, 2 config error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import inference, metrics, refine, tasks
from .bu import BuCandidateSet, select, to_cell_resolution
from .errors import (
    ConfigError,
    DataError,
    MissingGroundTruth,
    TdsalError,
    UnknownCategory,
)
from .estimator import TopDownSaliency
from .io import (
    DEFAULT_SEED,
    atomic_write_bytes,
    load_manifest,
    load_map,
    load_pgm,
    load_ppm,
    load_tensor,
    save_gray,
    save_map,
)
from .pooling import DEFAULT_LEVELS


@dataclass
class RunConfig:
    manifest: str = ""
    bundle: str = ""
    out: str = ""
    categories: tuple[str, ...] = ()
    levels: tuple[int, ...] = DEFAULT_LEVELS
    lam: float = 0.01
    seed: int = DEFAULT_SEED
    neg_per_image: int = 50
    scales: tuple[int, ...] = refine.DEFAULT_SCALES
    no_superpixel: bool = False
    emit_ften: bool = False
    workers: int = 0  # 0 = logical cores
    mode: str = ""


_INT_TUPLES = {"levels", "scales"}
_BOOLS = {"no_superpixel", "emit_ften"}


def _coerce(name: str, raw: str):
    if name in _INT_TUPLES:
        return tuple(int(p) for p in raw.replace(";", ",").split(",") if p)
    if name == "categories":
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    if name in _BOOLS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if name == "lam":
        return float(raw)
    if name in ("seed", "neg_per_image", "workers"):
        return int(raw)
    return raw


def load_config_file(path) -> dict:
    known = {f.name for f in fields(RunConfig)} | {"lambda"}
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        key = key.replace("-", "_")
        if key == "lambda":
            key = "lam"
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return values


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = replace(cfg, **load_config_file(args.config))
    overrides = {}
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            overrides[f.name] = val
    cfg = replace(cfg, **overrides)
    if cfg.workers < 0:
        raise ConfigError("workers must be >= 0")
    if cfg.lam <= 0:
        raise ConfigError("lambda must be > 0")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0")
    if cfg.neg_per_image < 0:
        raise ConfigError("neg_per_image must be >= 0")
    if not cfg.levels or any(g < 1 for g in cfg.levels):
        raise ConfigError("levels must be positive grid sizes")
    if not cfg.scales or any(k < 1 for k in cfg.scales):
        raise ConfigError("scales must be positive superpixel counts")
    return cfg


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdsal",
                                description="Weakly supervised top-down saliency")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, bundle=True):
        sp.add_argument("--config")
        sp.add_argument("--manifest")
        if bundle:
            sp.add_argument("--bundle")
        sp.add_argument("--out")
        sp.add_argument("--categories", type=lambda s: _coerce("categories", s))
        sp.add_argument("--levels", type=lambda s: _coerce("levels", s))
        sp.add_argument("--scales", type=lambda s: _coerce("scales", s))
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--neg-per-image", dest="neg_per_image", type=int)
        sp.add_argument("--no-superpixel", dest="no_superpixel",
                        action="store_const", const=True)
        sp.add_argument("--emit-ften", dest="emit_ften",
                        action="store_const", const=True)
        sp.add_argument("--workers", type=int)

    common(sub.add_parser("train", help="train per-category models"))
    sal = sub.add_parser("saliency", help="emit per-category and independent maps")
    common(sal)
    sal.add_argument("ids", nargs="*", help="manifest ids (default: all)")
    common(sub.add_parser("select-bu", help="report selected bottom-up maps"))
    common(sub.add_parser("segment", help="emit object masks and label maps"))
    common(sub.add_parser("localize", help="emit peak locations"))
    common(sub.add_parser("detect", help="emit detection boxes"))
    ev = sub.add_parser("eval", help="evaluate predictions against ground truth")
    common(ev)
    ev.add_argument("--task", dest="mode", required=True,
                    choices=["saliency", "segmentation", "localization", "detection"])
    return p


# --- shared helpers ---

def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if not getattr(cfg, name):
            raise ConfigError(f"--{name} is required for this command")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_inputs(entry):
    fmap = load_tensor(entry.features_path)
    image = None
    if entry.image_path is not None and entry.image_path.exists():
        image = load_ppm(entry.image_path)
    bu_maps = [(p.name, load_map(p)) for p in entry.bu_map_paths]
    return fmap, image, bu_maps


def _pool_map(cfg: RunConfig):
    workers = cfg.workers or os.cpu_count() or 1
    def run(fn, items):
        if workers == 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return run


def _estimator(cfg: RunConfig) -> TopDownSaliency:
    bundle = inference.load_bundle(cfg.bundle)
    unknown = set(cfg.categories) - set(bundle.names())
    if unknown:
        raise UnknownCategory(f"not in bundle: {sorted(unknown)}")
    return TopDownSaliency.from_bundle(
        bundle, lam=cfg.lam, neg_per_image=cfg.neg_per_image, scales=cfg.scales,
        superpixel=not cfg.no_superpixel, seed=cfg.seed)


def _write_csv(path, header: str, rows: list[str]) -> None:
    atomic_write_bytes(path, ("\n".join([header] + rows) + "\n").encode("utf-8"))


def _fmt(v: float) -> str:
    return f"{v:.6f}"


# --- commands ---

def cmd_train(cfg: RunConfig) -> int:
    _require(cfg, "manifest", "bundle")
    manifest = load_manifest(cfg.manifest, cfg.categories or None)
    est = TopDownSaliency(levels=cfg.levels, lam=cfg.lam,
                          neg_per_image=cfg.neg_per_image, scales=cfg.scales,
                          superpixel=not cfg.no_superpixel, seed=cfg.seed)
    est.fit(manifest, cfg.categories or None)
    Path(cfg.bundle).parent.mkdir(parents=True, exist_ok=True)
    inference.save_bundle(est.bundle_, cfg.bundle)
    for name in est.bundle_.names():
        print(f"trained {name}: objective {_fmt(est.training_objectives_[name])}")
    print(f"bundle written to {cfg.bundle}")
    return 0


def cmd_saliency(cfg: RunConfig, ids: list[str]) -> int:
    _require(cfg, "manifest", "bundle", "out")
    est = _estimator(cfg)
    manifest = load_manifest(cfg.manifest)
    out = _out_dir(cfg)
    wanted = set(ids)
    entries = [e for e in manifest if not wanted or e.id in wanted]
    missing = wanted - {e.id for e in entries}
    if missing:
        raise DataError(f"ids not in manifest: {sorted(missing)}")

    emit = cfg.categories or est.bundle_.names()

    def process(entry):
        fmap, image, bu_maps = _load_inputs(entry)
        conf = est.predict_confidence(fmap)
        for name in emit:
            if conf[name] == 0.0:
                continue
            cmap = est.predict_category_map(fmap, name, image, bu_maps)
            save_map(cmap, out / f"{entry.id}.{name}.pgm", emit_ften=cfg.emit_ften)
        ind = est.predict_independent_map(fmap, image, bu_maps)
        save_map(ind, out / f"{entry.id}.independent.pgm", emit_ften=cfg.emit_ften)
        return entry.id

    for entry_id in _pool_map(cfg)(process, entries):
        print(f"saliency written for {entry_id}")
    return 0


def cmd_select_bu(cfg: RunConfig) -> int:
    _require(cfg, "manifest", "bundle", "out")
    est = _estimator(cfg)
    bundle = est.bundle_
    manifest = load_manifest(cfg.manifest)
    out = _out_dir(cfg)

    def process(entry):
        fmap, image, bu_maps = _load_inputs(entry)
        rows = []
        for cat in bundle.categories:
            if cat.name not in entry.labels:
                continue
            named = [(n, to_cell_resolution(m, fmap.height, fmap.width))
                     for n, m in bu_maps]
            if not named:
                continue
            name, _, sel = select(fmap, BuCandidateSet.build(named),
                                  cat.image_model,
                                  inference.layout(fmap.height, fmap.width, bundle.levels))
            rows.append(f"{entry.id},{cat.name},{name},{_fmt(sel.b_hat)},"
                        f"{_fmt(sel.b_tilde)},{_fmt(sel.mean_mu)},{_fmt(sel.objective)}")
        return rows

    all_rows = [r for rows in _pool_map(cfg)(process, list(manifest)) for r in rows]
    _write_csv(out / "bu_selection.csv",
               "id,category,selected,b_hat,b_tilde,mean_mu,objective", all_rows)
    print(f"wrote {out / 'bu_selection.csv'}")
    return 0


def cmd_segment(cfg: RunConfig) -> int:
    _require(cfg, "manifest", "bundle", "out")
    est = _estimator(cfg)
    manifest = load_manifest(cfg.manifest)
    out = _out_dir(cfg)
    names = est.bundle_.names()

    def process(entry):
        fmap, image, bu_maps = _load_inputs(entry)
        cat_maps = []
        for name in names:
            cmap = est.predict_category_map(fmap, name, image, bu_maps)
            cat_maps.append(cmap)
            mask = tasks.segment_object(cmap)
            save_gray(mask.astype(np.uint8) * 255, out / f"{entry.id}.{name}.mask.pgm")
        labels = tasks.semantic_labels(cat_maps)
        save_gray(labels.astype(np.uint8), out / f"{entry.id}.labels.pgm")
        return entry.id

    for entry_id in _pool_map(cfg)(process, list(manifest)):
        print(f"segmentation written for {entry_id}")
    return 0


def cmd_localize(cfg: RunConfig) -> int:
    _require(cfg, "manifest", "bundle", "out")
    est = _estimator(cfg)
    bundle = est.bundle_
    manifest = load_manifest(cfg.manifest)
    out = _out_dir(cfg)

    def process(entry):
        fmap, image, bu_maps = _load_inputs(entry)
        conf = inference.confidence(bundle, fmap)
        rows = []
        for name, weight in conf.items():
            if weight == 0.0:
                continue
            # pre-refinement map: a 64x64 box filter replaces superpixel averaging
            cmap = inference.s_categ(bundle, name, fmap, image, bu_maps,
                                     superpixel=False, conf=conf)
            x, y = tasks.localize(cmap)
            rows.append(f"{entry.id},{name},{x},{y},{_fmt(weight)}")
        return rows

    all_rows = [r for rows in _pool_map(cfg)(process, list(manifest)) for r in rows]
    _write_csv(out / "localization.csv", "id,category,x,y,score", all_rows)
    print(f"wrote {out / 'localization.csv'}")
    return 0


def cmd_detect(cfg: RunConfig) -> int:
    _require(cfg, "manifest", "bundle", "out")
    est = _estimator(cfg)
    manifest = load_manifest(cfg.manifest)
    out = _out_dir(cfg)
    names = est.bundle_.names()

    def process(entry):
        fmap, image, bu_maps = _load_inputs(entry)
        conf = est.predict_confidence(fmap)
        rows = []
        for name in names:
            if conf[name] == 0.0:
                continue
            cmap = est.predict_category_map(fmap, name, image, bu_maps)
            for box in tasks.detect(cmap, name):
                rows.append(f"{entry.id},{name},{box.x},{box.y},{box.w},{box.h},"
                            f"{_fmt(box.score)}")
        return rows

    all_rows = [r for rows in _pool_map(cfg)(process, list(manifest)) for r in rows]
    _write_csv(out / "detections.csv", "id,category,x,y,w,h,score", all_rows)
    print(f"wrote {out / 'detections.csv'}")
    return 0


# --- evaluation ---

def _gt_masks_of(entry) -> dict[str, np.ndarray]:
    """Parse the gt_mask extension column: 'cat=path;...' or a bare path."""
    cell = entry.extras.get("gt_mask", "")
    if not cell:
        return {}
    base = entry.features_path.parent
    masks = {}
    for part in cell.split(";"):
        if not part:
            continue
        if "=" in part:
            cat, path = part.split("=", 1)
            masks[cat] = load_pgm(base / path) > 127
        else:
            masks["*"] = load_pgm(base / part) > 127
    return masks


def _gt_boxes_of(entry) -> dict[str, list]:
    """Parse gt_boxes: semicolon-separated 'category:x:y:w:h'."""
    cell = entry.extras.get("gt_boxes", "")
    boxes: dict[str, list] = {}
    for part in cell.split(";"):
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 5:
            raise DataError(f"{entry.id}: bad gt_boxes entry {part!r}")
        cat = bits[0]
        boxes.setdefault(cat, []).append(tuple(int(v) for v in bits[1:]))
    return boxes


def _mask_for(masks: dict, category: str):
    if category in masks:
        return masks[category]
    return masks.get("*")


def _print_rows(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)


def _eval_saliency(cfg: RunConfig, manifest, names, out: Path) -> list[list[str]]:
    rows = []
    eer_values, f_values = [], []
    for name in names:
        per_eer, per_f = [], []
        for entry in manifest:
            if name not in entry.labels:
                continue
            gt = _mask_for(_gt_masks_of(entry), name)
            pred_path = out / f"{entry.id}.{name}.pgm"
            if gt is None or not pred_path.exists():
                continue
            pred = load_map(pred_path)
            per_eer.append(metrics.precision_at_eer(pred, gt))
            per_f.append(metrics.f_measure(pred, gt))
        if per_eer:
            rows.append([name, str(len(per_eer)), _fmt(float(np.mean(per_eer))),
                         _fmt(float(np.mean(per_f)))])
            eer_values.extend(per_eer)
            f_values.extend(per_f)
    if not rows:
        raise MissingGroundTruth("no (prediction, gt_mask) pairs found")
    rows.append(["mean", str(len(eer_values)), _fmt(float(np.mean(eer_values))),
                 _fmt(float(np.mean(f_values)))])
    return rows


def _eval_segmentation(cfg: RunConfig, manifest, names, out: Path) -> list[list[str]]:
    preds, gts = [], []
    for entry in manifest:
        cell = entry.extras.get("gt_labels", "")
        pred_path = out / f"{entry.id}.labels.pgm"
        if not cell or not pred_path.exists():
            continue
        preds.append(load_pgm(pred_path))
        gts.append(load_pgm(entry.features_path.parent / cell))
    if not preds:
        raise MissingGroundTruth("no (label map, gt_labels) pairs found")
    iou, mean = metrics.miou(preds, gts, n_classes=len(names) + 1)
    rows = [["background", _fmt(iou[0]) if not np.isnan(iou[0]) else "n/a"]]
    for i, name in enumerate(names, start=1):
        rows.append([name, _fmt(iou[i]) if not np.isnan(iou[i]) else "n/a"])
    rows.append(["miou", _fmt(mean)])
    return rows


def _eval_localization(cfg: RunConfig, manifest, names, out: Path) -> list[list[str]]:
    path = out / "localization.csv"
    if not path.exists():
        raise MissingGroundTruth(f"{path} not found; run localize first")
    by_cat: dict[str, list] = {}
    for line in path.read_text(encoding="utf-8").splitlines()[1:]:
        entry_id, cat, x, y, scr = line.split(",")
        by_cat.setdefault(cat, []).append((entry_id, int(x), int(y), float(scr)))
    gt_by_entry = {e.id: _gt_boxes_of(e) for e in manifest}
    if not any(gt_by_entry.values()):
        raise MissingGroundTruth("manifest has no gt_boxes column values")
    rows = []
    for name in names:
        preds = sorted(by_cat.get(name, []), key=lambda r: -r[3])
        if not preds:
            continue
        n_gt = sum(1 for e in manifest if gt_by_entry[e.id].get(name))
        cells = [name, str(len(preds))]
        for mode in ("exact", "tol18"):
            hits = [metrics.localization_hit(
                (px, py), gt_by_entry[eid].get(name, ()), mode)
                for eid, px, py, _ in preds]
            precision = float(np.mean(hits)) if hits else 0.0
            tp = np.cumsum(hits)
            prec_curve = tp / np.arange(1, len(hits) + 1)
            recall_curve = tp / max(n_gt, 1)
            cells.extend([_fmt(precision),
                          _fmt(metrics.interpolated_ap(prec_curve, recall_curve))])
        rows.append(cells)
    if not rows:
        raise MissingGroundTruth("no localization predictions matched categories")
    return rows


def _eval_detection(cfg: RunConfig, manifest, names, out: Path) -> list[list[str]]:
    path = out / "detections.csv"
    if not path.exists():
        raise MissingGroundTruth(f"{path} not found; run detect first")
    by_cat: dict[str, list] = {}
    for line in path.read_text(encoding="utf-8").splitlines()[1:]:
        entry_id, cat, x, y, w, h, scr = line.split(",")
        by_cat.setdefault(cat, []).append(
            (entry_id, (int(x), int(y), int(w), int(h)), float(scr)))
    gt_by_entry = {e.id: _gt_boxes_of(e) for e in manifest}
    if not any(gt_by_entry.values()):
        raise MissingGroundTruth("manifest has no gt_boxes column values")
    rows = []
    aps = []
    for name in names:
        preds = sorted(by_cat.get(name, []), key=lambda r: -r[2])
        gt_total = sum(len(gt_by_entry[e.id].get(name, [])) for e in manifest)
        if gt_total == 0:
            continue
        # greedy match per image in global rank order
        matched: dict[str, list[bool]] = {
            e.id: [False] * len(gt_by_entry[e.id].get(name, [])) for e in manifest}
        hits = []
        for eid, box, _ in preds:
            gts = gt_by_entry.get(eid, {}).get(name, [])
            best_iou, best_j = 0.0, -1
            for j, gt in enumerate(gts):
                if matched[eid][j]:
                    continue
                iou = metrics.box_iou(box, gt)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j >= 0 and best_iou > metrics.DETECTION_IOU:
                matched[eid][best_j] = True
                hits.append(1)
            else:
                hits.append(0)
        if hits:
            tp = np.cumsum(hits)
            prec_curve = tp / np.arange(1, len(hits) + 1)
            recall_curve = tp / gt_total
            ap = metrics.interpolated_ap(prec_curve, recall_curve)
        else:
            ap = 0.0
        rows.append([name, str(len(preds)), str(gt_total), _fmt(ap)])
        aps.append(ap)
    if not rows:
        raise MissingGroundTruth("no detection ground truth for bundle categories")
    rows.append(["mean", "", "", _fmt(float(np.mean(aps)))])
    return rows


_EVAL_HEADERS = {
    "saliency": ["category", "n", "eer_precision", "f_measure"],
    "segmentation": ["class", "iou"],
    "localization": ["category", "n", "precision_exact", "ap_exact",
                     "precision_18px", "ap_18px"],
    "detection": ["category", "n_pred", "n_gt", "ap"],
}

_EVAL_FNS = {
    "saliency": _eval_saliency,
    "segmentation": _eval_segmentation,
    "localization": _eval_localization,
    "detection": _eval_detection,
}


def cmd_eval(cfg: RunConfig) -> int:
    _require(cfg, "manifest", "bundle", "out")
    bundle = inference.load_bundle(cfg.bundle)
    unknown = set(cfg.categories) - set(bundle.names())
    if unknown:
        raise UnknownCategory(f"not in bundle: {sorted(unknown)}")
    manifest = load_manifest(cfg.manifest)
    out = _out_dir(cfg)
    names = cfg.categories or bundle.names()
    rows = _EVAL_FNS[cfg.mode](cfg, manifest, names, out)
    header = _EVAL_HEADERS[cfg.mode]
    _write_csv(out / f"eval_{cfg.mode}.csv", ",".join(header),
               [",".join(r) for r in rows])
    print(_print_rows(header, rows))
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "saliency":
            return cmd_saliency(cfg, args.ids)
        if args.command == "select-bu":
            return cmd_select_bu(cfg)
        if args.command == "segment":
            return cmd_segment(cfg)
        if args.command == "localize":
            return cmd_localize(cfg)
        if args.command == "detect":
            return cmd_detect(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except TdsalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
