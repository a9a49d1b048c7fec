import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from relightkit import imgio
from relightkit.dataset import DatasetGrid, ModelSpec, camera_from_pose, generate_dataset, load_manifest
from relightkit.envlight import synthetic_sky
from relightkit.errors import ConfigError, MeshStructureError
from relightkit.primitives import capsule_figure, icosphere
from relightkit.tracer import RenderConfig, Scene, render_geometry


@pytest.fixture(scope="module")
def env_pool(tmp_path_factory):
    d = tmp_path_factory.mktemp("envs")
    paths = []
    for i, sun in enumerate([(0.4, 0.6, 0.3), (-0.5, 0.5, 0.2), (0.1, 0.9, -0.4)]):
        p = d / f"sky{i}.hdr"
        imgio.save_environment(p, synthetic_sky(64, 32, sun_direction=sun))
        paths.append(str(p))
    return paths


@pytest.fixture(scope="module")
def figure():
    return capsule_figure(subdivisions=2)


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# grid and poses


def test_default_grid_law():
    g = DatasetGrid(env_pool=["a"])
    assert g.sets_per_model == 4 * 9 * 3 * 2 == 216
    assert len(g.poses) == 108


def test_grid_validation():
    with pytest.raises(ConfigError):
        DatasetGrid(pitches=[])
    with pytest.raises(ConfigError):
        DatasetGrid(lightings_per_pose=0)
    with pytest.raises(ConfigError):
        DatasetGrid.from_mapping({"pitch": [0]})


def test_canonical_pose():
    lo, hi = np.array([-1.0, 0.0, -0.5]), np.array([1.0, 2.0, 0.5])
    cam = camera_from_pose(0, 0, 1, (lo, hi), 64)
    assert np.allclose(cam.forward, [0, 0, -1])
    assert np.allclose(cam.up / np.linalg.norm(cam.up), [0, 1, 0])
    # the view rectangle is centered on the bounds center
    row, col = cam.project((lo + hi) / 2)
    assert np.allclose([row, col], [32, 32])
    assert cam.image_w == cam.image_h == 64


def test_positive_pitch_looks_down():
    cam = camera_from_pose(20, 0, 1, (np.zeros(3), np.ones(3)), 8)
    assert cam.forward[1] < 0


def test_yaw_mirror_symmetry():
    b = (np.array([-1.0, -1, -1]), np.array([1.0, 1, 1]))
    a = camera_from_pose(10, 8, 1, b, 16)
    m = camera_from_pose(10, -8, 1, b, 16)
    flip = np.array([-1.0, 1.0, 1.0])
    assert np.allclose(a.forward * flip, m.forward)
    assert np.allclose(a.center * flip, m.center)
    assert np.allclose(a.up * flip, m.up)


def test_scale_changes_projected_area(figure):
    scene = Scene(figure)
    counts = {s: render_geometry(scene, camera_from_pose(0, 0, s, figure.bounds, 256)).mask.sum()
              for s in (0.8, 1.1)}
    ratio = counts[1.1] / counts[0.8]
    assert ratio == pytest.approx((0.8 / 1.1) ** -2, rel=0.05)


def test_degenerate_bounds():
    with pytest.raises(MeshStructureError):
        camera_from_pose(0, 0, 1, (np.ones(3), np.ones(3)), 8)


# ---------------------------------------------------------------------------
# generation


def small_grid(env_pool, **kw):
    base = dict(pitches=[0, 20], yaws=[-8, 8], scales=[1.0], lightings_per_pose=2, env_pool=env_pool, seed=3)
    base.update(kw)
    return DatasetGrid(**base)


def test_single_set(tmp_path, env_pool, figure):
    grid = DatasetGrid(pitches=[0], yaws=[0], scales=[1], lightings_per_pose=1, env_pool=env_pool)
    m = generate_dataset([ModelSpec("fig", mesh=figure)], grid, tmp_path, size=(32, 32), cfg=RenderConfig(spp=4))
    assert len(m["sets"]) == 1 and m["counts"] == {"ok": 1, "failed": 0}


def test_manifest_complete_and_identity_holds(tmp_path, env_pool, figure):
    grid = small_grid(env_pool)
    m = generate_dataset([ModelSpec("fig", mesh=figure)], grid, tmp_path, size=(48, 48), cfg=RenderConfig(spp=8))
    assert len(m["sets"]) == grid.sets_per_model == 8
    assert m["schema_version"] == 1 and m["grid"]["seed"] == 3
    referenced = {"manifest.json"}
    for s in m["sets"]:
        assert s["status"] == "ok"
        files = {k: tmp_path / v for k, v in s["files"].items()}
        referenced |= {v for v in s["files"].values()}
        mask = imgio.read_mask(files["mask"]) > 0.5
        image, albedo, shading = (imgio.read_pfm(files[k]) for k in ("image", "albedo", "shading"))
        ao = imgio.read_pfm(files["ao"])
        normal = imgio.read_normal_png(files["normal"])
        for plane in (mask, image, albedo, shading, ao, normal):
            assert plane.shape[:2] == (48, 48)
        assert np.abs(image - albedo * shading)[mask].max() <= 1e-3
    produced = {str(p.relative_to(tmp_path)) for p in tmp_path.rglob("*") if p.is_file()}
    assert produced == referenced


def test_lightings_differ_within_pose(tmp_path, env_pool, figure):
    m = generate_dataset([ModelSpec("fig", mesh=figure)], small_grid(env_pool), tmp_path, size=(16, 16),
                         cfg=RenderConfig(spp=2))
    by_pose = {}
    for s in m["sets"]:
        by_pose.setdefault((s["pitch"], s["yaw"], s["scale"]), []).append(s["env"])
    for envs in by_pose.values():
        assert len(set(envs)) == len(envs) == 2


def test_replay_is_bit_identical(tmp_path, env_pool, figure):
    grid = small_grid(env_pool)
    digests = []
    for run, jobs in (("a", 1), ("b", 1), ("c", 3)):
        m = generate_dataset([ModelSpec("fig", mesh=figure)], grid, tmp_path / run, size=(24, 24),
                             cfg=RenderConfig(spp=4), jobs=jobs)
        digests.append(tree_digest(tmp_path / run))
        assert json.loads((tmp_path / run / "manifest.json").read_text()) == m
    assert digests[0] == digests[1] == digests[2]


def test_seed_changes_output(tmp_path, env_pool, figure):
    a = generate_dataset([ModelSpec("fig", mesh=figure)], small_grid(env_pool, seed=1), tmp_path / "a",
                         size=(16, 16), cfg=RenderConfig(spp=2))
    b = generate_dataset([ModelSpec("fig", mesh=figure)], small_grid(env_pool, seed=2), tmp_path / "b",
                         size=(16, 16), cfg=RenderConfig(spp=2))
    assert [s["seed"] for s in a["sets"]] != [s["seed"] for s in b["sets"]]


def test_unreadable_model_is_skipped(tmp_path, env_pool, figure):
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nf 1 2 3\n")
    grid = DatasetGrid(pitches=[0], yaws=[0], scales=[1], lightings_per_pose=1, env_pool=env_pool)
    m = generate_dataset([ModelSpec("bad", path=str(bad)), ModelSpec("fig", mesh=figure)], grid,
                         tmp_path / "out", size=(16, 16), cfg=RenderConfig(spp=2))
    assert m["models"][0]["status"] == "failed" and "error" in m["models"][0]
    assert len(m["sets"]) == 1 and m["sets"][0]["model"] == "fig"
    assert load_manifest(tmp_path / "out") == m


def test_render_failure_is_recorded(tmp_path, env_pool, figure, monkeypatch):
    from relightkit import dataset

    calls = {"n": 0}
    real = dataset._write_set

    def flaky(*args):
        calls["n"] += 1
        if calls["n"] == 2:
            raise OSError("disk full")
        return real(*args)

    monkeypatch.setattr(dataset, "_write_set", flaky)
    m = generate_dataset([ModelSpec("fig", mesh=figure)], small_grid(env_pool), tmp_path, size=(16, 16),
                         cfg=RenderConfig(spp=2))
    assert m["counts"] == {"ok": 7, "failed": 1}
    failed = [s for s in m["sets"] if s["status"] == "failed"]
    assert failed[0]["error"] == "disk full" and "files" not in failed[0]


def test_pool_smaller_than_lightings(tmp_path, env_pool, figure):
    grid = small_grid(env_pool[:1])
    with pytest.raises(ConfigError):
        generate_dataset([ModelSpec("fig", mesh=figure)], grid, tmp_path, size=(8, 8), cfg=RenderConfig(spp=1))
