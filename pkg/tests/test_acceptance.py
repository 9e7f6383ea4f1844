"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion. The feature-extractor criterion needs the extractor package
built (see extractor/README.md) and is skipped otherwise.
"""

import shutil
import subprocess
import time
from pathlib import Path

import numpy as np
import pytest

from tdsal.backtrack import attribute
from tdsal.bu import invert_map, selection_objective
from tdsal.cli import main as cli_main
from tdsal.estimator import TopDownSaliency
from tdsal.io import (
    FeatureMap,
    LinearModel,
    SaliencyMap,
    load_manifest,
    load_map,
    load_tensor,
)
from tdsal.metrics import detection_ap, f_from_counts, jaccard, precision_at_eer
from tdsal.pooling import layout, pool, pool_single
from tdsal.refine import average_within, slic
from tdsal.svm import TrainConfig, sigmoid, solve
from tdsal.synth import SynthSpec, generate
from tdsal.tasks import detect

REPO_ROOT = Path(__file__).resolve().parent.parent


def report(name):
    print(f"ACCEPTANCE PASS: {name}")


def random_feature_map(rng):
    h = int(rng.integers(1, 9))
    w = int(rng.integers(1, 9))
    d = int(rng.integers(1, 5))
    data = rng.random((h, w, d))
    data[rng.random((h, w, d)) < 0.3] = 0.0
    return FeatureMap(data)


def test_pooling_roundtrip_200_maps():
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    for _ in range(200):
        fmap = random_feature_map(rng)
        lay = layout(fmap.height, fmap.width)
        pv = pool(fmap, lay)
        flat = fmap.data.reshape(-1, fmap.depth)
        for i in range(len(pv)):
            prov = pv.provenance(i)
            if prov is not None:
                m, j = prov
                assert flat[m, j] == pv.z[i]
        for m in range(fmap.n_features):
            zeroed = np.zeros_like(fmap.data)
            zeroed[m // fmap.width, m % fmap.width] = flat[m]
            oracle = pool(FeatureMap(zeroed), lay)
            fast = pool_single(fmap, m, lay)
            assert np.array_equal(fast.z, oracle.z)
            assert np.array_equal(fast.winner, oracle.winner)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"pooling round-trip took {elapsed:.2f}s"
    report(f"pooling round-trip (200 maps, bit-exact, {elapsed:.2f}s < 5s)")


def test_decomposition_identity_200_instances():
    rng = np.random.default_rng(7)
    for _ in range(200):
        fmap = random_feature_map(rng)
        lay = layout(fmap.height, fmap.width)
        model = LinearModel(rng.normal(size=lay.slots(fmap.depth)), float(rng.normal()))
        attr = attribute(fmap, model, lay)
        full = float(model.weights @ pool(fmap, lay).z + model.bias)
        assert abs(attr.theta.sum() + model.bias - full) < 1e-6
    report("decomposition identity (200 instances, 1e-6)")


def test_sigmoid_identities():
    rng = np.random.default_rng(11)
    for x in rng.normal(0.0, 8.0, size=1000):
        assert abs(sigmoid(x) + sigmoid(-x) - 1.0) < 1e-12
    assert abs(sigmoid(3.0) - 0.952574) < 1e-6
    report("sigmoid identities (1000 points, 1e-12; beta(3) within 1e-6)")


def test_svm_separable_monotone_deterministic():
    rng = np.random.default_rng(13)
    n = 100
    x = np.vstack([
        np.column_stack([rng.uniform(1.0, 3.0, n), rng.uniform(-3.0, 3.0, n)]),
        np.column_stack([rng.uniform(-3.0, -1.0, n), rng.uniform(-3.0, 3.0, n)]),
    ])  # geometric margin 1 about x1 = 0
    y = np.hstack([np.ones(n), -np.ones(n)])
    model, info = solve(x, y, TrainConfig(seed=3))
    assert np.all(np.sign(x @ model.weights + model.bias) == y)
    assert np.all(np.diff(info["trace"]) <= 1e-9)
    again, _ = solve(x, y, TrainConfig(seed=3))
    assert np.array_equal(model.weights, again.weights) and model.bias == again.bias
    report("svm: 100% training accuracy, monotone objective, bit-identical rerun")


def test_bu_selection_oracle_and_hand_trace():
    fmap = FeatureMap(np.array([[[5.0], [0.1]], [[0.2], [0.3]]]))
    lay = layout(2, 2, (2,))
    model = LinearModel(np.array([1.0, -1.0, -1.0, -1.0]), 0.0)
    gt = SaliencyMap(np.array([[1.0, 0.0], [0.0, 0.0]]))
    sel = selection_objective(fmap, gt, model, lay)
    assert sel.b_hat == 5.0
    assert abs(sel.b_tilde - (-0.6)) < 1e-12
    assert sel.mean_mu == 0.25
    assert abs(sel.objective - 4.2) < 1e-12
    uniform = selection_objective(fmap, SaliencyMap(np.ones((2, 2))), model, lay)
    assert uniform.objective == 0.0

    rng = np.random.default_rng(17)
    wins = 0
    trials = 200
    for _ in range(trials):
        h = w = 4
        d = 2
        data = rng.random((h, w, d)) * 0.2
        mask = np.zeros((h, w), dtype=bool)
        r, c = rng.integers(0, 3), rng.integers(0, 3)
        mask[r:r + 2, c:c + 2] = True
        data[mask] += 2.0 + rng.random((4, d))
        f = FeatureMap(data)
        lay4 = layout(h, w, (4,))
        weights = np.where(np.repeat(mask.ravel(), d), 1.0, -1.0)
        m = LinearModel(weights, 0.0)
        gt_map = SaliencyMap(mask.astype(float))
        b_gt = selection_objective(f, gt_map, m, lay4).objective
        b_uni = selection_objective(f, SaliencyMap(np.ones((h, w))), m, lay4).objective
        b_inv = selection_objective(f, invert_map(gt_map), m, lay4).objective
        if b_gt > b_uni and b_gt > b_inv:
            wins += 1
    assert wins / trials >= 0.95
    report(f"bu selection oracle ({wins}/{trials} wins >= 95%; hand trace exact)")


def test_end_to_end_synthetic_saliency(tmp_path):
    start = time.perf_counter()
    train_spec = SynthSpec(height=16, width=16, depth=8, rect=(4, 4, 8, 8),
                           n_images=40, category="obj", seed=100, id_prefix="tr")
    test_spec = SynthSpec(height=16, width=16, depth=8, rect=(4, 4, 8, 8),
                          n_images=20, category="obj", seed=200, id_prefix="te")
    train_manifest = generate(train_spec, tmp_path)
    test_manifest = generate(test_spec, tmp_path)
    est = TopDownSaliency(superpixel=False, seed=0).fit(load_manifest(train_manifest))
    scores = []
    for entry in load_manifest(test_manifest):
        if "obj" not in entry.labels:
            continue
        fmap = load_tensor(entry.features_path)
        bu_maps = [(p.name, load_map(p)) for p in entry.bu_map_paths]
        smap = est.predict_category_map(fmap, "obj", bu_maps=bu_maps)
        gt = load_map(tmp_path / entry.extras["gt_mask"]).values > 0.5
        scores.append(precision_at_eer(smap, gt))
    mean_eer = float(np.mean(scores))
    elapsed = time.perf_counter() - start
    assert len(scores) == 20
    assert mean_eer >= 0.90, f"mean EER precision {mean_eer:.4f} < 0.90"
    assert elapsed < 60.0, f"end-to-end run took {elapsed:.1f}s"
    report(f"end-to-end synthetic saliency (mean EER {mean_eer:.4f} >= 0.90, "
           f"{elapsed:.1f}s < 60s)")


def test_metric_oracles():
    rng = np.random.default_rng(23)
    for _ in range(100):
        values = np.round(rng.random((6, 6)), 2)
        gt = rng.random((6, 6)) > 0.6
        if not gt.any():
            gt[0, 0] = True
        best = None
        for t in sorted(set(values.ravel())):
            pred = values >= t
            tp = np.count_nonzero(pred & gt)
            precision = tp / pred.sum() if pred.sum() else 0.0
            recall = tp / gt.sum()
            diff = abs(precision - recall)
            if best is None or diff <= best[0] + 1e-15:
                best = (diff, precision)
        assert precision_at_eer(SaliencyMap(values), gt) == best[1]
    assert abs(f_from_counts(18, 30, 60, 0.3) - 0.4875) < 1e-9
    a = np.zeros((20, 20), dtype=bool); a[0:10, 0:10] = True
    b = np.zeros((20, 20), dtype=bool); b[0:10, 5:15] = True
    assert jaccard(a, b) == 1 / 3
    report("metric oracles (EER sweep x100, f-measure 0.4875, jaccard 1/3)")


def test_detection_extraction_and_ap():
    values = np.zeros((12, 12))
    values[2:5, 3:7] = 0.9
    values[8:11, 1:3] = 0.7
    boxes = detect(SaliencyMap(values), "obj")
    assert len(boxes) == 2
    assert (boxes[0].x, boxes[0].y, boxes[0].w, boxes[0].h) == (3, 2, 4, 3)
    assert (boxes[1].x, boxes[1].y, boxes[1].w, boxes[1].h) == (1, 8, 2, 3)
    for box in boxes:
        sub = values[box.y:box.y + box.h, box.x:box.x + box.w] >= 0.5
        assert sub[0].any() and sub[-1].any() and sub[:, 0].any() and sub[:, -1].any()
    assert detection_ap([(0, 0, 10, 10)], [(0, 0, 10, 10)]) == 1.0
    report("detection extraction (two minimal boxes; perfect-match AP = 1)")


def test_refinement_conservation():
    rng = np.random.default_rng(29)
    image = (rng.random((48, 48, 3)) * 255).astype(np.uint8)
    smap = SaliencyMap(rng.random((48, 48)))
    for k in (8, 16, 32):
        labeling = slic(image, k)
        averaged = average_within(smap, labeling)
        assert abs(averaged.values.mean() - smap.values.mean()) < 1e-6
    const = SaliencyMap(np.full((48, 48), 0.42))
    for k in (8, 16):
        assert np.allclose(average_within(const, slic(image, k)).values, 0.42,
                           atol=1e-12)
    uniform = np.full((64, 64, 3), 128, dtype=np.uint8)
    labeling = slic(uniform, k=16)
    sizes = np.bincount(labeling.labels.ravel())
    assert labeling.k_actual == 16
    assert np.all(sizes >= 0.75 * 256) and np.all(sizes <= 1.25 * 256)
    report("refinement conservation (per-scale mean 1e-6; SLIC 16 regions +-25%)")


def test_cli_determinism_full_run(tmp_path):
    from tdsal.synth import merge_manifests
    a = generate(SynthSpec(height=8, width=8, depth=4, rect=(1, 1, 4, 4),
                           n_images=4, category="alpha", seed=51), tmp_path)
    b = generate(SynthSpec(height=8, width=8, depth=4, rect=(3, 3, 4, 4),
                           object_mean=np.array([0.0, 3.0, 0.0, 3.0]),
                           n_images=4, category="beta", seed=52), tmp_path)
    manifest = merge_manifests([a, b], tmp_path / "all.csv")

    def full_run(tag):
        out = tmp_path / tag
        bundle = out / "model.bspp"
        assert cli_main(["train", "--manifest", str(manifest),
                         "--bundle", str(bundle), "--seed", "5"]) == 0
        assert cli_main(["saliency", "--manifest", str(manifest),
                         "--bundle", str(bundle), "--out", str(out)]) == 0
        assert cli_main(["eval", "--task", "saliency", "--manifest", str(manifest),
                         "--bundle", str(bundle), "--out", str(out)]) == 0
        return out, bundle

    out1, bundle1 = full_run("run1")
    out2, bundle2 = full_run("run2")
    assert bundle1.read_bytes() == bundle2.read_bytes()
    maps1 = sorted(p.name for p in out1.glob("*.pgm"))
    maps2 = sorted(p.name for p in out2.glob("*.pgm"))
    assert maps1 == maps2 and maps1
    for name in maps1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    assert (out1 / "eval_saliency.csv").read_bytes() == \
        (out2 / "eval_saliency.csv").read_bytes()
    report(f"cli determinism (bundle, {len(maps1)} maps, report byte-identical)")


EXTRACTOR_CLI = REPO_ROOT / "extractor" / "dist" / "cli.js"


@pytest.mark.skipif(not EXTRACTOR_CLI.exists() or shutil.which("node") is None,
                    reason="feature extractor not built")
def test_secondary_feature_adapter_contract(tmp_path):
    from tdsal.io import save_ppm
    from tdsal.synth import merge_manifests

    rng = np.random.default_rng(33)
    image_dir = tmp_path / "images"
    image_dir.mkdir()
    # one 512x512 image pins the dimension contract
    base = (rng.random((512, 512, 3)) * 255).astype(np.uint8)
    save_ppm(base, image_dir / "dims.ppm")
    subprocess.run(
        ["node", str(EXTRACTOR_CLI), "--images", str(image_dir / "dims.ppm"),
         "--out", str(tmp_path / "feat")],
        check=True, timeout=1200)
    fmap = load_tensor(tmp_path / "feat" / "dims.ften")
    assert fmap.data.shape == (32, 32, 512)
    assert fmap.data.min() >= 0.0

    # determinism: extracting the same image twice matches byte for byte
    subprocess.run(
        ["node", str(EXTRACTOR_CLI), "--images", str(image_dir / "dims.ppm"),
         "--out", str(tmp_path / "feat2")],
        check=True, timeout=1200)
    assert (tmp_path / "feat" / "dims.ften").read_bytes() == \
        (tmp_path / "feat2" / "dims.ften").read_bytes()

    # toy split: textured patch pasted on real photographic backgrounds
    try:
        from skimage import data as skdata
        photos = [skdata.astronaut(), skdata.chelsea(), skdata.coffee()]
    except Exception:
        photos = []
    toy_dir = tmp_path / "toy"
    toy_dir.mkdir()
    rows = []
    size = 192
    patch = (rng.random((80, 80, 3)) * 255).astype(np.uint8)
    patch[::8] = [255, 40, 40]
    n_images = 6
    for i in range(n_images):
        if photos:
            photo = photos[i % len(photos)]
            canvas = photo[:size, :size].copy()
        else:
            canvas = (rng.random((size, size, 3)) * 80).astype(np.uint8)
        positive = i % 2 == 0
        gt = np.zeros((size, size), dtype=np.uint8)
        if positive:
            y0, x0 = 32 + 16 * (i % 3), 48
            canvas[y0:y0 + 80, x0:x0 + 80] = patch
            gt[y0:y0 + 80, x0:x0 + 80] = 255
        name = f"toy{i:02d}"
        save_ppm(canvas, toy_dir / f"{name}.ppm")
        from tdsal.io import save_gray
        save_gray(gt, toy_dir / f"{name}_gt.pgm")
        rows.append((name, positive))
    subprocess.run(
        ["node", str(EXTRACTOR_CLI), "--images", str(toy_dir / "*.ppm"),
         "--out", str(toy_dir)],
        check=True, timeout=1200)
    manifest_lines = ["id,image_path,features_path,bu_maps,labels,gt_mask"]
    for name, positive in rows:
        label = "patch" if positive else ""
        gt_cell = f"{name}_gt.pgm" if positive else ""
        manifest_lines.append(f"{name},,{name}.ften,,{label},{gt_cell}")
    manifest_path = toy_dir / "manifest.csv"
    manifest_path.write_text("\n".join(manifest_lines) + "\n")
    manifest = load_manifest(manifest_path)
    est = TopDownSaliency(superpixel=False, seed=0).fit(manifest)
    eers, baselines = [], []
    for entry in manifest:
        if "patch" not in entry.labels:
            continue
        fmap = load_tensor(entry.features_path)
        smap = est.predict_category_map(fmap, "patch")
        from tdsal.io import load_pgm
        gt_full = load_pgm(toy_dir / entry.extras["gt_mask"]) > 127
        gt = gt_full[:smap.values.shape[0], :smap.values.shape[1]]
        eers.append(precision_at_eer(smap, gt))
        uniform = SaliencyMap(np.full(smap.values.shape, 0.5))
        baselines.append(precision_at_eer(uniform, gt))
    assert float(np.mean(eers)) > float(np.mean(baselines))
    report(f"secondary feature adapter (32x32x512 contract; toy-split EER "
           f"{np.mean(eers):.3f} > uniform {np.mean(baselines):.3f})")
