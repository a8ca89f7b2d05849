import csv
import json

import numpy as np
import pytest

from deformspace.cli import main
from deformspace.geomcore import read_obj

TINY_OVERRIDES = {
    "projection": {"sample_counts": [128, 256], "iters_per_stage": 25, "lr": 0.02},
    "geodesics": {"iters": 60, "init_nodes": 4, "max_nodes": 16, "subdivide_every": 30},
    "trainmap": {"iters": 40, "width": 16, "hidden_layers": 2, "face_target": 60,
                 "plateau_window": 0, "pretrain_iters": 20},
    "switchpoints": {"steps": 60, "chamfer_samples": 128, "grid": 7},
}


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    assert main(["make-demo", "--out", str(tmp / "demo"), "--family", "bump-ellipsoid",
                 "--landmarks", "5", "--latent-dim", "6", "--point-count", "64",
                 "--seed", "3"]) == 0
    cfg_path = tmp / "demo" / "space.json"
    config = json.loads(cfg_path.read_text())
    config.update(TINY_OVERRIDES)
    cfg_path.write_text(json.dumps(config))
    return tmp


@pytest.fixture(scope="module")
def bundle_dir(demo):
    out = demo / "bundle"
    assert main(["project", "--config", str(demo / "demo" / "space.json"),
                 "--out", str(out)]) == 0
    for stage in ["embed", "geodesics", "train-map", "switchpoints"]:
        assert main([stage, "--out", str(out)]) == 0
    return out


def test_missing_prerequisite_names_stage(demo):
    out = demo / "incomplete"
    assert main(["project", "--config", str(demo / "demo" / "space.json"),
                 "--out", str(out)]) == 0
    # train-map requires geodesics first.
    assert main(["train-map", "--out", str(out)]) == 2


def test_full_pipeline_writes_expected_payloads(bundle_dir):
    for name in ["manifest.json", "latents.bin", "polylines.bin", "fem.bin",
                 "mlp.bin", "switchplan.json"]:
        assert (bundle_dir / name).exists(), name
    manifest = json.loads((bundle_dir / "manifest.json").read_text())
    assert manifest["stages"] == ["project", "embed", "geodesics", "train-map",
                                  "switchpoints"]


def test_energy_report_emits_csv(bundle_dir):
    out_csv = bundle_dir / "energy_report.csv"
    assert main(["energy-report", "--out", str(bundle_dir), "--paths", "5",
                 "--nodes", "16", "--report-out", str(out_csv)]) == 0
    with open(out_csv) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["path", "ours", "z_linear", "z_opt"]
    assert len(rows) == 6


def test_deform_writes_frames(bundle_dir, tmp_path):
    manifest = json.loads((bundle_dir / "manifest.json").read_text())
    pos = manifest["embedding"]["positions"]
    path_arg = f"{pos[0][0]},{pos[0][1]};{pos[1][0]},{pos[1][1]}"
    frames_dir = tmp_path / "frames"
    assert main(["deform", "--out", str(bundle_dir), "--landmark", "0",
                 "--path", path_arg, "--steps", "6",
                 "--frames-out", str(frames_dir)]) == 0
    frames = sorted(frames_dir.glob("frame_*.obj"))
    assert len(frames) == 7
    first = read_obj(frames[0])
    last = read_obj(frames[-1])
    assert len(first.vertices) == len(last.vertices)
    assert not np.allclose(first.vertices, last.vertices)


def test_deform_binary_stream(bundle_dir, tmp_path):
    import struct

    manifest = json.loads((bundle_dir / "manifest.json").read_text())
    pos = manifest["embedding"]["positions"]
    path_arg = f"{pos[0][0]},{pos[0][1]};{pos[1][0]},{pos[1][1]}"
    out = tmp_path / "frames.bin"
    assert main(["deform", "--out", str(bundle_dir), "--landmark", "0",
                 "--path", path_arg, "--steps", "4", "--binary",
                 "--frames-out", str(out)]) == 0
    raw = out.read_bytes()
    n_frames, n_verts, n_faces = struct.unpack_from("<III", raw, 0)
    assert n_frames == 5
    assert len(raw) == 12 + 12 * n_faces + n_frames * 12 * n_verts


def test_deform_single_point_path_is_validation_error(bundle_dir):
    assert main(["deform", "--out", str(bundle_dir), "--landmark", "0",
                 "--path", "0.1,0.2"]) == 2


def test_unknown_landmark_is_validation_error(bundle_dir):
    assert main(["deform", "--out", str(bundle_dir), "--landmark", "99",
                 "--path", "0,0;0.1,0.1"]) == 2


def test_config_toml_support(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('seed = 5\n[generator]\nfamily = "linear"\n')
    from deformspace.cli import _load_config

    loaded = _load_config(cfg)
    assert loaded["seed"] == 5
    assert loaded["generator"]["family"] == "linear"


def test_set_override_applies(demo, tmp_path):
    out = tmp_path / "b"
    assert main(["project", "--config", str(demo / "demo" / "space.json"),
                 "--out", str(out), "--set", "projection.iters_per_stage", "5"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["projection"]["iters_per_stage"] == 5
