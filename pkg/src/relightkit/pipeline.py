"""End-to-end relighting: smooth, trace, composite.

The learned stages of a full relighting system (de-lighting and shading
refinement) are replaced by identity here: the albedo arrives as a
pixel-aligned image and the traced shading is used as is.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import imgio
from .compose import ImageRGB, RegionSpec, as_image, compose_relit, composite_background, composite_region
from .dataset import camera_from_pose
from .envlight import EnvironmentMap, EnvSampler
from .errors import ConfigError, ShapeError
from .mesh import SmoothingConfig, TriangleMesh, laplacian_smooth
from .tracer.camera import OrthoCamera, RenderConfig
from .tracer.render import GBuffer, Scene, render_ao, render_face_pass, render_geometry, render_shading

logger = logging.getLogger(__name__)


@dataclass
class RelightResult:
    relit: ImageRGB
    shading: np.ndarray
    body: GBuffer
    face: GBuffer | None
    mesh: TriangleMesh
    camera: OrthoCamera
    with_background: ImageRGB | None = None


def relight(mesh: TriangleMesh, albedo_image, env: EnvironmentMap, face_mesh: TriangleMesh | None = None,
            region: RegionSpec | None = None, cfg: RenderConfig = RenderConfig(),
            smoothing: SmoothingConfig = SmoothingConfig(), camera: OrthoCamera | None = None,
            background: dict | None = None, ao=False) -> RelightResult:
    """Relight ``mesh`` seen through ``camera`` under ``env``.

    The albedo image fixes the raster size.  Without an explicit camera the
    canonical front pose (pitch = yaw = 0, scale = 1) is used.  When a face
    mesh is supplied it is traced unsmoothed and its shading is pasted into
    ``region`` with a feathered edge; region pixels the face does not cover
    keep the body shading.  ``background`` may hold ``azimuth`` and ``fov``
    (degrees) to place the result over a view of the environment.
    """
    if face_mesh is not None and region is None:
        raise ConfigError("a face mesh needs a --region to composite into")
    albedo = as_image(albedo_image)
    h, w = albedo.shape
    if camera is None:
        camera = camera_from_pose(0.0, 0.0, 1.0, mesh.bounds, w, h)
    elif (camera.image_h, camera.image_w) != (h, w):
        raise ShapeError(f"camera raster {camera.image_h}x{camera.image_w} differs from albedo {h}x{w}")
    if region is not None:
        region.check_within((h, w))

    sampler = None if not env.radiance.any() else EnvSampler(env)
    light = env if sampler is None else sampler
    body_mesh = laplacian_smooth(mesh, smoothing)
    scene = Scene(body_mesh)
    body = render_geometry(scene, camera, cfg)
    if ao:
        body = render_ao(scene, camera, cfg, body)
    body = render_shading(scene, camera, light, cfg, body)
    shading = body.shading
    mask = body.mask.astype(np.float64)

    face = None
    if face_mesh is not None:
        face = render_face_pass(Scene(face_mesh), camera, light, replace(cfg, seed=cfg.seed + 1))
        sl = (slice(region.row0, region.row0 + region.rows), slice(region.col0, region.col0 + region.cols))
        covered = face.mask[sl].astype(bool)[..., None]
        patch = np.where(covered, face.shading[sl], shading[sl])
        shading = composite_region(shading, patch, region).pixels
        mask = np.maximum(mask, face.mask.astype(np.float64))

    relit = compose_relit(ImageRGB(albedo.pixels, mask), shading)
    with_bg = None
    if background is not None:
        with_bg = composite_background(relit, env, background.get("azimuth", 0.0), background.get("fov", 45.0))
    return RelightResult(relit=relit, shading=shading, body=body, face=face, mesh=body_mesh,
                         camera=camera, with_background=with_bg)


def write_relight_outputs(result: RelightResult, out_dir):
    """Write the relit image and every intermediate plane; returns the file map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "relit": "relit.pfm", "relit_png": "relit.png", "shading": "shading.pfm",
        "mask": "mask.png", "normal": "normal.png", "depth": "depth.pfm",
    }
    imgio.write_pfm(out / files["relit"], result.relit.pixels)
    imgio.write_png(out / files["relit_png"], np.clip(result.relit.pixels, 0.0, 1.0))
    imgio.write_pfm(out / files["shading"], result.shading)
    imgio.write_mask_png(out / files["mask"], result.relit.mask)
    imgio.write_normal_png(out / files["normal"], result.body.normal)
    depth = np.where(np.isfinite(result.body.depth), result.body.depth, 0.0)
    imgio.write_pfm(out / files["depth"], depth)
    if result.body.ao is not None:
        files["ao"] = "ao.pfm"
        imgio.write_pfm(out / files["ao"], result.body.ao)
    if result.face is not None:
        files["face_shading"] = "face_shading.pfm"
        imgio.write_pfm(out / files["face_shading"], result.face.shading)
    if result.with_background is not None:
        files["composite"] = "composite.png"
        imgio.write_png(out / files["composite"], np.clip(result.with_background.pixels, 0.0, 1.0))
    return files
