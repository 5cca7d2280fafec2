import json
import subprocess
import sys

import numpy as np
import pytest

from mipseg import (
    FG,
    FeatureGrid3D,
    downscale_index,
    evaluate,
    feature_retrieve,
    load_label_volume,
    load_volume,
    mip_project,
    normalize_intensity,
    save_volume,
)
from mipseg.cli import PipelineConfig, main
from mipseg.volume import _load_array


SPEC = {
    "dims": [20, 20, 28],
    "tubes": [
        {"points": [[9.5, 9.5, 4.0], [9.5, 9.5, 23.0]], "radii": [2.5, 2.5]},
        {"points": [[4.0, 14.0, 6.0], [15.0, 5.0, 21.0]], "radii": [1.5, 1.5]},
    ],
    "noise_std": 0.02,
    "seed": 11,
}


@pytest.fixture()
def spec_path(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(SPEC))
    return str(path)


@pytest.fixture()
def phantom_files(tmp_path, spec_path):
    vol = tmp_path / "vol.mhd"
    gt = tmp_path / "gt.mhd"
    assert main(["phantom", "--spec", spec_path, "--out", str(vol), "--gt", str(gt)]) == 0
    return str(vol), str(gt)


@pytest.fixture()
def projection_files(tmp_path, phantom_files):
    vol, gt = phantom_files
    png = tmp_path / "mip.png"
    index = tmp_path / "mip_index.mhd"
    meta = tmp_path / "mip.json"
    code = main(["mip", "--volume", vol, "--normalize", "--axis", "z",
                 "--png", str(png), "--index", str(index), "--meta", str(meta)])
    assert code == 0
    return str(png), str(index), str(meta)


@pytest.fixture()
def mask_png(tmp_path, phantom_files):
    from mipseg import Mask2D, export_mask_png

    _, gt = phantom_files
    truth = load_label_volume(gt)
    ann = Mask2D((truth.labels == FG).max(axis=2))
    path = tmp_path / "mask.png"
    export_mask_png(ann, str(path))
    return str(path)


def test_phantom_command_outputs_load(phantom_files):
    vol, gt = phantom_files
    volume = load_volume(vol)
    truth = load_label_volume(gt)
    assert volume.dims == tuple(SPEC["dims"])
    assert truth.dims == volume.dims
    assert (truth.labels == FG).any()


def test_mip_command_artifacts(tmp_path, phantom_files, projection_files):
    vol, _ = phantom_files
    png, index, meta = projection_files
    payload = json.loads(open(meta).read())
    assert payload["axis"] == "z"
    assert payload["source_dims"] == SPEC["dims"]
    assert payload["index_file"] == "mip_index.mhd"
    arr, _, _ = _load_array(index)
    assert arr.dtype == np.uint16
    want = mip_project(normalize_intensity(load_volume(vol)), "z")
    assert np.array_equal(arr[:, :, 0], want.index)


def test_backproject_matches_library(tmp_path, projection_files, mask_png, phantom_files):
    from mipseg import Mask2D, back_project, import_mask_png

    vol, _ = phantom_files
    _, _, meta = projection_files
    out = tmp_path / "seeds.json"
    assert main(["backproject", "--mask", mask_png, "--meta", meta, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    mip = mip_project(normalize_intensity(load_volume(vol)), "z")
    mask = import_mask_png(mask_png, mip.shape)
    want = back_project(mask, mip)
    assert payload["count"] == want.shape[0]
    assert payload["voxels"] == want.tolist()


def test_pseudolabel_command(tmp_path, phantom_files, mask_png):
    vol, _ = phantom_files
    out = tmp_path / "labels.mhd"
    conflicts = tmp_path / "conflicts.json"
    seeds = tmp_path / "seeds.json"
    code = main(["pseudolabel", "--volume", vol, "--mask", mask_png,
                 "--out", str(out), "--conflicts", str(conflicts),
                 "--seeds", str(seeds)])
    assert code == 0
    labels = load_label_volume(str(out))
    assert set(np.unique(labels.labels)) <= {0, 1, 2}
    summary = json.loads(conflicts.read_text())
    assert {"v_ave", "seed_count", "foreground_count", "background_count",
            "conflict_count", "conflicts"} <= set(summary)
    assert summary["foreground_count"] >= summary["seed_count"] > 0
    assert json.loads(seeds.read_text())["count"] == summary["seed_count"]


@pytest.fixture()
def refine_inputs(tmp_path, phantom_files, mask_png):
    vol, gt = phantom_files
    labels = tmp_path / "labels.mhd"
    conflicts = tmp_path / "conflicts.json"
    assert main(["pseudolabel", "--volume", vol, "--mask", mask_png,
                 "--out", str(labels), "--conflicts", str(conflicts)]) == 0
    from mipseg import oracle_probabilities

    truth = load_label_volume(gt)
    clean, passes = oracle_probabilities(truth, 0.9, passes=2, seed=4)
    prob = tmp_path / "prob.mhd"
    save_volume(clean, str(prob))
    pass_paths = []
    for i, p in enumerate(passes):
        pp = tmp_path / f"pass_{i}.mhd"
        save_volume(p, str(pp))
        pass_paths.append(str(pp))
    cfg = tmp_path / "refine.json"
    cfg.write_text(json.dumps({"passes": 2}))
    return str(labels), str(conflicts), str(prob), pass_paths, str(cfg)


def test_refine_command(tmp_path, phantom_files, refine_inputs):
    vol, _ = phantom_files
    labels, conflicts, prob, passes, cfg = refine_inputs
    out = tmp_path / "refined.mhd"
    report = tmp_path / "report.json"
    code = main(["refine", "--labels", labels, "--volume", vol, "--prob", prob,
                 "--pass", passes[0], "--pass", passes[1], "--config", cfg,
                 "--conflicts", conflicts, "--out", str(out), "--report", str(report)])
    assert code == 0
    refined = load_label_volume(str(out))
    assert refined.dims == tuple(SPEC["dims"])
    rep = json.loads(report.read_text())
    assert {"removed", "re_added", "added_low_entropy", "conflicts",
            "degenerate_statistics"} <= set(rep)


def test_refine_pass_count_mismatch(tmp_path, phantom_files, refine_inputs):
    vol, _ = phantom_files
    labels, conflicts, prob, passes, cfg = refine_inputs
    code = main(["refine", "--labels", labels, "--volume", vol, "--prob", prob,
                 "--pass", passes[0], "--config", cfg,
                 "--out", str(tmp_path / "r.mhd"), "--report", str(tmp_path / "rep.json")])
    assert code == 2


def test_gather_command_matches_library(tmp_path, phantom_files, projection_files):
    vol, _ = phantom_files
    _, _, meta = projection_files
    rng = np.random.default_rng(8)
    from mipseg import ScalarVolume3D

    # at pyramid level 2 the feature grid lives at 1/4 resolution
    level_dims = tuple(d // 4 for d in SPEC["dims"])
    feats = ScalarVolume3D(rng.random(level_dims, dtype=np.float32))
    fpath = tmp_path / "features.mhd"
    save_volume(feats, str(fpath))
    out = tmp_path / "gathered.mhd"
    assert main(["gather", "--features", str(fpath), "--meta", meta,
                 "--level", "2", "--out", str(out)]) == 0
    arr, _, _ = _load_array(str(out))
    mip = mip_project(normalize_intensity(load_volume(vol)), "z")
    level = downscale_index(mip, 2)
    want = feature_retrieve(FeatureGrid3D(feats.data[None]), level)
    assert np.array_equal(arr[:, :, 0], want.values[0])
    # a full-resolution grid at a deep level is a usage error
    full = ScalarVolume3D(rng.random(tuple(SPEC["dims"]), dtype=np.float32))
    save_volume(full, str(fpath))
    assert main(["gather", "--features", str(fpath), "--meta", meta,
                 "--level", "2", "--out", str(out)]) == 2


def test_loss_command_stdout(tmp_path, phantom_files, refine_inputs, capsys):
    labels, _, prob, _, _ = refine_inputs
    with pytest.warns(UserWarning, match="empty seed set"):
        assert main(["loss", "--prob", prob, "--labels", labels]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["loss_total"] == payload["loss_3d"] > 0


def test_loss_command_with_projection(tmp_path, phantom_files, refine_inputs,
                                      projection_files, mask_png, capsys):
    labels, _, prob, _, _ = refine_inputs
    _, _, meta = projection_files
    with pytest.warns(UserWarning, match="empty seed set"):
        assert main(["loss", "--prob", prob, "--labels", labels, "--meta", meta,
                     "--mask", mask_png, "--loss-weight", "0.5"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["loss_total"] == pytest.approx(
        payload["loss_3d"] + 0.5 * payload["loss_2d"], abs=1e-12)


def test_loss_command_needs_both_projection_args(refine_inputs, projection_files, capsys):
    labels, _, prob, _, _ = refine_inputs
    _, _, meta = projection_files
    with pytest.warns(UserWarning, match="empty seed set"):
        assert main(["loss", "--prob", prob, "--labels", labels, "--meta", meta]) == 2
    assert "error:" in capsys.readouterr().err


def test_metrics_command(tmp_path, phantom_files, refine_inputs):
    _, gt = phantom_files
    labels, *_ = refine_inputs
    out = tmp_path / "metrics.json"
    assert main(["metrics", "--pred", labels, "--gt", gt, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    pred = load_label_volume(labels)
    truth = load_label_volume(gt)
    want = evaluate(pred.labels == FG, truth.labels == FG, pred.spacing)
    assert payload == want.to_dict()


def test_pipeline_end_to_end_and_determinism(tmp_path, spec_path):
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    assert main(["pipeline", "--spec", spec_path, "--out-dir", str(out1)]) == 0
    assert main(["--threads", "8", "pipeline", "--spec", spec_path,
                 "--out-dir", str(out2)]) == 0
    names1 = sorted(p.name for p in out1.iterdir())
    assert {"volume.mhd", "gt.mhd", "labels.mhd", "refined.mhd", "mip.png",
            "mask.png", "conflicts.json", "report.json", "metrics.json",
            "config.json", "mip.json"} <= set(names1)
    assert names1 == sorted(p.name for p in out2.iterdir())
    for name in names1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_pipeline_tubetk_profile(tmp_path, spec_path):
    out = tmp_path / "run"
    assert main(["pipeline", "--spec", spec_path, "--out-dir", str(out),
                 "--profile", "tubetk", "--quality", "0.8"]) == 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["refine"]["disable_priors"] is True
    assert cfg["oracle_quality"] == 0.8


def test_pipeline_config_json_round_trip(tmp_path):
    cfg = PipelineConfig()
    d = cfg.to_dict()
    again = PipelineConfig.from_dict(d)
    assert again == cfg
    with pytest.raises(Exception):
        PipelineConfig.from_dict({"bogus": 1})


def test_threads_flag_positions(spec_path, tmp_path):
    # accepted before and after the subcommand; zero is rejected
    vol = tmp_path / "v.mhd"
    gt = tmp_path / "g.mhd"
    assert main(["phantom", "--threads", "2", "--spec", spec_path,
                 "--out", str(vol), "--gt", str(gt)]) == 0
    assert main(["--threads", "0", "phantom", "--spec", spec_path,
                 "--out", str(vol), "--gt", str(gt)]) == 2


def test_unknown_subcommand_and_missing_args_exit_2(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["mip"]) == 2
    assert main([]) == 2


def test_missing_input_file_exits_2(tmp_path, capsys):
    code = main(["mip", "--volume", str(tmp_path / "nope.mhd"),
                 "--png", str(tmp_path / "o.png"),
                 "--index", str(tmp_path / "i.mhd"),
                 "--meta", str(tmp_path / "m.json")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_module_entry_point_and_version():
    out = subprocess.run([sys.executable, "-m", "mipseg.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "mipseg" in out.stdout
    bad = subprocess.run([sys.executable, "-m", "mipseg.cli", "nope"],
                         capture_output=True, text=True)
    assert bad.returncode == 2
