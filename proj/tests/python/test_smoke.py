import math
import os
import pathlib

import numpy as np
import pytest

import resim


def tmp_root():
    root = pathlib.Path(os.environ.get("RESIM_TEST_TMP", "/tmp")) / "python"
    root.mkdir(parents=True, exist_ok=True)
    return root


def test_presets():
    names = resim.preset_names()
    assert "kitti" in names and "waymo-top" in names
    p = resim.preset("kitti")
    beams = resim.beam_pattern(p)
    assert len(beams) == p.channels
    assert np.all(np.diff(beams) >= 0)
    with pytest.raises(KeyError):
        resim.preset("velodyne-9000")


def test_plane_depth():
    v = np.array([[-50, -50, -1.5], [50, -50, -1.5], [50, 50, -1.5], [-50, 50, -1.5]], float)
    f = np.array([[0, 1, 2], [0, 2, 3]])
    p = resim.preset("kitti")
    p.range_noise_sigma = 0.0
    p.drop_rate = 0.0
    scan = resim.cast_scan(v, f, p, resim.Pose6D(), seed=1)
    pts = scan["points"]
    assert pts.shape[1] == 3 and len(pts) > 1000
    assert np.allclose(pts[:, 2], -1.5, atol=1e-6)
    assert scan["rays_cast"] == len(pts) + scan["dropped"] + scan["missed"]
    again = resim.cast_scan(v, f, p, resim.Pose6D(), seed=1, threads=3)
    assert np.array_equal(pts, again["points"])


def test_metrics():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, (200, 3))
    assert resim.chamfer(a, a)["total"] == 0.0
    assert resim.chamfer(a, a + 0.0)["forward"] == 0.0
    shifted = resim.chamfer(a, a * 2.0, truncation=1.0)["total"]
    assert resim.chamfer(a * 3.0, a * 6.0, truncation=1.0)["total"] == pytest.approx(9 * shifted)
    assert resim.rmse_depth([1.0, 2.0], [1.0, 4.0]) == pytest.approx(math.sqrt(2.0))
    with pytest.raises(ValueError):
        resim.rmse_depth([1.0], [1.0, 2.0])
    ranked = resim.rank_sequences([("a", 1.0, 0.3), ("b", 2.0, 0.1), ("c", 0.5, 0.1)])
    assert [r[0] for r in ranked] == ["c", "b", "a"]


def test_ply_roundtrip():
    path = tmp_root() / "cloud.ply"
    pts = np.arange(30, dtype=float).reshape(10, 3)
    resim.write_ply_cloud(pts, path)
    back = resim.read_ply_cloud(path)
    assert np.allclose(back["points"], pts)
    bad = tmp_root() / "bad.ply"
    bad.write_text("not a ply\n")
    with pytest.raises(ValueError):
        resim.read_ply_cloud(bad)


def test_demo_pipeline():
    seq = tmp_root() / "demo"
    resim.write_demo_sequence(seq, seed=2, frames=2)
    out = tmp_root() / "demo_out"
    rec = resim.reconstruct(seq / "config.json", out=out)
    assert rec["consolidated_points"] > 1000
    sim = resim.simulate(seq / "config.json", out=out, profiles=["kitti"])
    assert len(sim["frames"]) == 2
    ev = resim.evaluate(seq / "config.json", out=out)
    assert ev["ranking"]
    assert all(s["cd"] >= 0 for s in ev["scores"])
    assert "kitti" in resim.presets_table()
