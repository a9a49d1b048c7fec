import numpy as np
import pytest

from relightkit import imgio
from relightkit.compose import RegionSpec
from relightkit.dataset import camera_from_pose
from relightkit.envlight import EnvironmentMap, synthetic_sky
from relightkit.errors import ConfigError, ShapeError
from relightkit.mesh import SmoothingConfig, laplacian_smooth
from relightkit.pipeline import relight, write_relight_outputs
from relightkit.primitives import capsule_figure, icosphere
from relightkit.tracer import RenderConfig, Scene, render_shading


@pytest.fixture(scope="module")
def figure():
    return capsule_figure(subdivisions=2)


def test_white_albedo_uniform_env():
    # a convex body sees the whole sky everywhere, so shading is exactly c
    c = 0.75
    res = relight(icosphere(4), np.ones((64, 64, 3)), EnvironmentMap.constant(c, 32, 16),
                  cfg=RenderConfig(spp=256))
    vals = res.relit.pixels[res.relit.mask > 0]
    assert np.mean(np.all(np.abs(vals / c - 1) <= 0.01, axis=1)) >= 0.99


def test_without_face_mesh_shading_is_body_pass(figure):
    env = synthetic_sky(64, 32)
    cfg = RenderConfig(spp=8, seed=4)
    res = relight(figure, np.ones((48, 48, 3)), env, cfg=cfg)
    smoothed = laplacian_smooth(figure, SmoothingConfig())
    body = render_shading(Scene(smoothed), camera_from_pose(0, 0, 1, figure.bounds, 48), env, cfg)
    assert np.array_equal(res.shading, body.shading)


def test_face_needs_region(figure):
    with pytest.raises(ConfigError):
        relight(figure, np.ones((8, 8, 3)), EnvironmentMap.constant(1, 8, 4), face_mesh=figure)


def test_region_outside_raster(figure):
    with pytest.raises(ShapeError):
        relight(figure, np.ones((16, 16, 3)), EnvironmentMap.constant(1, 8, 4), face_mesh=figure,
                region=RegionSpec(10, 10, 8, 8, feather=0))


def test_face_composite_only_changes_region(figure):
    env = synthetic_sky(64, 32)
    cfg = RenderConfig(spp=8)
    albedo = np.full((64, 64, 3), 0.5)
    head = icosphere(3, radius=0.16, center=(0.0, 1.62, 0.02))
    region = RegionSpec(2, 20, 16, 24, feather=3)
    plain = relight(figure, albedo, env, cfg=cfg)
    with_face = relight(figure, albedo, env, cfg=cfg, face_mesh=head, region=region)
    changed = np.any(plain.shading != with_face.shading, axis=-1)
    inside = np.zeros((64, 64), bool)
    inside[2:18, 20:44] = True
    assert changed.any() and not changed[~inside].any()


def test_full_pipeline_identity_and_outputs(tmp_path, figure):
    env = synthetic_sky(64, 32)
    rng = np.random.default_rng(0)
    albedo = rng.uniform(0.2, 0.9, size=(96, 96, 3))
    res = relight(figure, albedo, env, cfg=RenderConfig(spp=16, jobs=2), ao=True,
                  background={"azimuth": 90.0, "fov": 50.0})
    assert np.allclose(res.relit.pixels, albedo * res.shading)
    files = write_relight_outputs(res, tmp_path)
    for name in files.values():
        assert (tmp_path / name).exists()
    img = imgio.read_pfm(tmp_path / files["relit"])
    sh = imgio.read_pfm(tmp_path / files["shading"])
    m = imgio.read_mask(tmp_path / files["mask"]) > 0.5
    assert np.abs(img - albedo.astype(np.float32) * sh)[m].max() <= 1e-3
