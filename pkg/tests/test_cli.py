import hashlib

import numpy as np
import pytest

from tdsal.cli import build_config, load_config_file, main
from tdsal.inference import load_bundle
from tdsal.io import load_manifest, load_pgm, save_ppm
from tdsal.synth import SynthSpec, generate, merge_manifests


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """Two-category synthetic dataset with all ground-truth columns."""
    root = tmp_path_factory.mktemp("cli_data")
    a = generate(SynthSpec(height=8, width=8, depth=4, rect=(1, 1, 4, 4),
                           n_images=5, category="alpha", seed=21), root)
    b = generate(SynthSpec(height=8, width=8, depth=4, rect=(3, 3, 4, 4),
                           object_mean=np.array([0.0, 3.0, 0.0, 3.0]),
                           n_images=5, category="beta", seed=22), root)
    manifest = merge_manifests([a, b], root / "all.csv")
    return root, manifest


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    root, manifest = dataset
    bundle = tmp_path_factory.mktemp("cli_model") / "model.bspp"
    assert run("train", "--manifest", manifest, "--bundle", bundle, "--seed", 5) == 0
    return root, manifest, bundle


def test_train_bundle_roundtrip(trained):
    _, _, bundle_path = trained
    bundle = load_bundle(bundle_path)
    assert bundle.names() == ("alpha", "beta")
    n = sum(g * g for g in bundle.levels) * bundle.depth
    for cat in bundle.categories:
        assert cat.image_model.dim == n
        assert cat.feature_model.dim == bundle.depth


def test_train_deterministic_bytes(dataset, tmp_path):
    _, manifest = dataset
    b1, b2 = tmp_path / "m1.bspp", tmp_path / "m2.bspp"
    assert run("train", "--manifest", manifest, "--bundle", b1, "--seed", 5) == 0
    assert run("train", "--manifest", manifest, "--bundle", b2, "--seed", 5) == 0
    assert b1.read_bytes() == b2.read_bytes()


def test_train_missing_negatives_is_data_error(tmp_path):
    spec = SynthSpec(height=6, width=6, depth=2, rect=(1, 1, 3, 3), n_images=2)
    manifest_path = generate(spec, tmp_path)
    # strip the negative rows: every remaining image is positive
    lines = manifest_path.read_text().splitlines()
    kept = [lines[0]] + [ln for ln in lines[1:] if "_pos" in ln]
    manifest_path.write_text("\n".join(kept) + "\n")
    assert run("train", "--manifest", manifest_path,
               "--bundle", tmp_path / "m.bspp") == 3


def test_saliency_emits_probable_categories_only(trained, tmp_path):
    root, manifest, bundle = trained
    out = tmp_path / "maps"
    assert run("saliency", "--manifest", manifest, "--bundle", bundle,
               "--out", out, "--workers", 1) == 0
    man = load_manifest(manifest)
    for entry in man:
        assert (out / f"{entry.id}.independent.pgm").exists()
    # at least one image where only the true category map was emitted
    pos_alpha = [e.id for e in man if e.labels == {"alpha"}]
    lone = [eid for eid in pos_alpha
            if (out / f"{eid}.alpha.pgm").exists()
            and not (out / f"{eid}.beta.pgm").exists()]
    assert lone, "expected confidence gating to suppress the wrong category"


def test_saliency_id_filter_and_unknown_id(trained, tmp_path):
    root, manifest, bundle = trained
    out = tmp_path / "one"
    man = load_manifest(manifest)
    first = man.entries[0].id
    assert run("saliency", "--manifest", manifest, "--bundle", bundle,
               "--out", out, first) == 0
    produced = {p.name for p in out.iterdir()}
    assert all(p.startswith(first) for p in produced)
    assert run("saliency", "--manifest", manifest, "--bundle", bundle,
               "--out", tmp_path / "x", "nope") == 3


def test_no_superpixel_changes_output_when_images_exist(tmp_path):
    spec = SynthSpec(height=6, width=6, depth=3, rect=(1, 1, 3, 3),
                     n_images=3, category="obj", seed=31)
    manifest_path = generate(spec, tmp_path)
    # give every entry a PPM image aligned with the planted rect
    rng = np.random.default_rng(0)
    lines = manifest_path.read_text().splitlines()
    out_lines = [lines[0]]
    for ln in lines[1:]:
        cells = ln.split(",")
        image = np.full((96, 96, 3), 40, dtype=np.uint8)
        if "_pos" in cells[0]:
            image[16:64, 16:64] = [200, 60, 60]
        image = np.clip(image + rng.integers(0, 20, image.shape), 0, 255).astype(np.uint8)
        save_ppm(image, tmp_path / f"{cells[0]}.ppm")
        cells[1] = f"{cells[0]}.ppm"
        out_lines.append(",".join(cells))
    manifest_path.write_text("\n".join(out_lines) + "\n")
    bundle = tmp_path / "m.bspp"
    assert run("train", "--manifest", manifest_path, "--bundle", bundle) == 0
    out_a, out_b = tmp_path / "refined", tmp_path / "plain"
    assert run("saliency", "--manifest", manifest_path, "--bundle", bundle,
               "--out", out_a, "--scales", "4,8") == 0
    assert run("saliency", "--manifest", manifest_path, "--bundle", bundle,
               "--out", out_b, "--no-superpixel") == 0
    name = "obj_pos000.obj.pgm"
    h_refined = hashlib.sha256((out_a / name).read_bytes()).hexdigest()
    h_plain = hashlib.sha256((out_b / name).read_bytes()).hexdigest()
    assert h_refined != h_plain


def test_eval_saliency_perfect_maps(dataset, trained, tmp_path):
    root, manifest = dataset
    _, _, bundle = trained
    out = tmp_path / "perfect"
    out.mkdir()
    man = load_manifest(manifest)
    for entry in man:
        for cat in entry.labels:
            gt = root / entry.extras["gt_mask"]
            (out / f"{entry.id}.{cat}.pgm").write_bytes(gt.read_bytes())
    assert run("eval", "--task", "saliency", "--manifest", manifest,
               "--bundle", bundle, "--out", out) == 0
    report = (out / "eval_saliency.csv").read_text().splitlines()
    assert report[0] == "category,n,eer_precision,f_measure"
    for line in report[1:]:
        cells = line.split(",")
        assert cells[2] == "1.000000"


def test_eval_localization_reports_both_modes(trained, tmp_path, capsys):
    root, manifest, bundle = trained
    out = tmp_path / "loc"
    assert run("localize", "--manifest", manifest, "--bundle", bundle,
               "--out", out) == 0
    csv = (out / "localization.csv").read_text().splitlines()
    assert csv[0] == "id,category,x,y,score"
    assert run("eval", "--task", "localization", "--manifest", manifest,
               "--bundle", bundle, "--out", out) == 0
    header = (out / "eval_localization.csv").read_text().splitlines()[0]
    assert "precision_exact" in header and "precision_18px" in header


def test_eval_rerun_is_byte_identical(trained, tmp_path):
    root, manifest, bundle = trained
    out = tmp_path / "det"
    assert run("detect", "--manifest", manifest, "--bundle", bundle,
               "--out", out) == 0
    assert run("eval", "--task", "detection", "--manifest", manifest,
               "--bundle", bundle, "--out", out) == 0
    first = (out / "eval_detection.csv").read_bytes()
    assert run("eval", "--task", "detection", "--manifest", manifest,
               "--bundle", bundle, "--out", out) == 0
    assert (out / "eval_detection.csv").read_bytes() == first


def test_segment_and_eval_segmentation(tmp_path):
    spec = SynthSpec(height=8, width=8, depth=4, rect=(2, 2, 4, 4),
                     n_images=4, category="solo", seed=41)
    manifest = generate(spec, tmp_path)
    bundle = tmp_path / "m.bspp"
    assert run("train", "--manifest", manifest, "--bundle", bundle) == 0
    out = tmp_path / "seg"
    assert run("segment", "--manifest", manifest, "--bundle", bundle,
               "--out", out) == 0
    labels = load_pgm(out / "solo_pos000.labels.pgm")
    assert labels.shape == (128, 128)
    assert set(np.unique(labels)) <= {0, 1}
    assert run("eval", "--task", "segmentation", "--manifest", manifest,
               "--bundle", bundle, "--out", out) == 0
    report = (out / "eval_segmentation.csv").read_text().splitlines()
    assert report[0] == "class,iou"
    assert report[-1].startswith("miou,")


def test_select_bu_reports_choice(trained, tmp_path):
    root, manifest, bundle = trained
    out = tmp_path / "sel"
    assert run("select-bu", "--manifest", manifest, "--bundle", bundle,
               "--out", out) == 0
    lines = (out / "bu_selection.csv").read_text().splitlines()
    assert lines[0] == "id,category,selected,b_hat,b_tilde,mean_mu,objective"
    assert len(lines) > 1
    # the exact planted map should win on well-separated synthetic data
    chosen = {ln.split(",")[2] for ln in lines[1:]}
    assert chosen <= {"alpha_bu_exact.pgm", "beta_bu_exact.pgm", "max"}


def test_config_file_parsing(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# comment\nlambda = 0.5\nlevels = 1,2\nno_superpixel = true\n")
    values = load_config_file(cfg_file)
    assert values == {"lam": 0.5, "levels": (1, 2), "no_superpixel": True}
    cfg_file.write_text("mystery = 1\n")
    with pytest.raises(Exception):
        load_config_file(cfg_file)


def test_cli_flag_overrides_config(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("seed = 1\nlambda = 0.5\n")
    import argparse
    args = argparse.Namespace(config=str(cfg_file), seed=9)
    cfg = build_config(args)
    assert cfg.seed == 9 and cfg.lam == 0.5


def test_unknown_config_key_exit_code(tmp_path, dataset):
    _, manifest = dataset
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("bogus = 1\n")
    assert run("train", "--config", cfg_file, "--manifest", manifest,
               "--bundle", tmp_path / "m.bspp") == 2


def test_missing_manifest_is_config_error(tmp_path):
    assert run("train", "--bundle", tmp_path / "m.bspp") == 2


def test_unknown_category_is_data_error(trained, tmp_path):
    root, manifest, bundle = trained
    assert run("saliency", "--manifest", manifest, "--bundle", bundle,
               "--out", tmp_path / "x", "--categories", "ghost") == 3


def test_saliency_category_filter(trained, tmp_path):
    root, manifest, bundle = trained
    out = tmp_path / "filtered"
    assert run("saliency", "--manifest", manifest, "--bundle", bundle,
               "--out", out, "--categories", "alpha") == 0
    names = {p.name for p in out.glob("*.pgm")}
    assert not any(".beta." in n for n in names)
    assert any(".alpha." in n for n in names)
