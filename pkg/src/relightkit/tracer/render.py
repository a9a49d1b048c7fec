"""Pixel-aligned G-buffer passes: geometry, ambient occlusion and shading.

Shading is direct environment lighting on white Lambertian surfaces,
normalized so that a uniform environment of radiance ``c`` renders as ``c``
(albedo is divided out).  The estimator is environment importance sampling::

    shading = mean_i  L(w_i) * max(n . w_i, 0) * V(w_i) / (pi * pdf(w_i))

Ambient occlusion averages visibility over cosine-weighted directions about
the shading normal.  Directions below the geometric surface count as
occluded: the surface itself blocks them.

Work is split into tiles of points that run on a thread pool; every sample is
derived from ``(seed, pixel index, sample index)`` so the output is identical
for any number of workers.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from ..envlight import EnvSampler, sample_env
from ..mesh import TriangleMesh, compute_vertex_normals, face_normals
from .bvh import BVHAccel, any_hit, closest_hit
from .camera import OrthoCamera, RenderConfig
from .sampling import DIM_AO, DIM_SHADING, cmj2d, cosine_hemisphere, split_seed, stream_key


@dataclass(frozen=True, eq=False)
class GBuffer:
    """Per-pixel planes of one render, all ``(H, W)`` or ``(H, W, 3)``.

    ``depth`` is +inf and ``normal`` zero where ``mask`` is 0.  ``ao`` and
    ``shading`` stay ``None`` until their pass has run.  ``position``,
    ``geom_normal``, ``tri_id`` and ``albedo`` record the primary hits.
    """

    mask: np.ndarray
    depth: np.ndarray
    normal: np.ndarray
    position: np.ndarray
    geom_normal: np.ndarray
    tri_id: np.ndarray
    albedo: np.ndarray
    ao: np.ndarray | None = None
    shading: np.ndarray | None = None

    @property
    def shape(self):
        return self.mask.shape

    def replace(self, **changes) -> "GBuffer":
        return dataclasses.replace(self, **changes)


class Scene:
    """A mesh prepared for tracing: BVH, unit face normals and vertex normals."""

    def __init__(self, mesh_or_bvh):
        if isinstance(mesh_or_bvh, Scene):
            mesh_or_bvh = mesh_or_bvh.bvh
        if isinstance(mesh_or_bvh, BVHAccel):
            self.bvh = mesh_or_bvh
        elif isinstance(mesh_or_bvh, TriangleMesh):
            self.bvh = BVHAccel(mesh_or_bvh)
        else:
            raise TypeError(f"expected TriangleMesh or BVHAccel, got {type(mesh_or_bvh).__name__}")
        mesh = self.bvh.mesh
        if mesh.vertex_normals is None:
            mesh = compute_vertex_normals(mesh)
        self.mesh = mesh
        self.face_normals = face_normals(mesh.positions, mesh.triangles)
        self.diagonal = mesh.diagonal


def as_scene(scene) -> Scene:
    return scene if isinstance(scene, Scene) else Scene(scene)


def _run_tiles(kernel, n_items, cfg: RenderConfig, *args):
    """Call ``kernel(lo, hi, *args)`` over disjoint index ranges."""
    bounds = [(lo, min(lo + cfg.tile_pixels, n_items)) for lo in range(0, n_items, cfg.tile_pixels)]
    if cfg.jobs == 1 or len(bounds) <= 1:
        for lo, hi in bounds:
            kernel(lo, hi, *args)
        return
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        for f in [pool.submit(kernel, lo, hi, *args) for lo, hi in bounds]:
            f.result()


# ---------------------------------------------------------------------------
# numba kernels; all outputs are flat arrays indexed by point/pixel


@numba.njit(cache=True, nogil=True)
def _geometry_kernel(lo, hi, bvh, tri, vnormals, fnormals, colors, has_colors, default_albedo,
                     width, height, center, right, up, fwd,
                     mask, depth, normal, position, geom_normal, tri_id, albedo):
    bmin, bmax, left, rgt, start, count, order, v0, e1, e2 = bvh
    for p in range(lo, hi):
        i = p // width
        j = p - i * width
        u = (j + 0.5) / width * 2.0 - 1.0
        v = 1.0 - (i + 0.5) / height * 2.0
        ox = center[0] + u * right[0] + v * up[0]
        oy = center[1] + u * right[1] + v * up[1]
        oz = center[2] + u * right[2] + v * up[2]
        t, k, bu, bv = closest_hit(bmin, bmax, left, rgt, start, count, order, v0, e1, e2,
                                   ox, oy, oz, fwd[0], fwd[1], fwd[2], 0.0, math.inf)
        if k < 0:
            mask[p] = 0
            depth[p] = math.inf
            tri_id[p] = -1
            for c in range(3):
                normal[p, c] = 0.0
                position[p, c] = 0.0
                geom_normal[p, c] = 0.0
                albedo[p, c] = 0.0
            continue
        mask[p] = 1
        depth[p] = t
        tri_id[p] = k
        position[p, 0] = ox + t * fwd[0]
        position[p, 1] = oy + t * fwd[1]
        position[p, 2] = oz + t * fwd[2]
        a, b, c3 = tri[k, 0], tri[k, 1], tri[k, 2]
        w0 = 1.0 - bu - bv
        nx = w0 * vnormals[a, 0] + bu * vnormals[b, 0] + bv * vnormals[c3, 0]
        ny = w0 * vnormals[a, 1] + bu * vnormals[b, 1] + bv * vnormals[c3, 1]
        nz = w0 * vnormals[a, 2] + bu * vnormals[b, 2] + bv * vnormals[c3, 2]
        gx, gy, gz = fnormals[k, 0], fnormals[k, 1], fnormals[k, 2]
        # back-facing hit: flip both normals toward the camera
        if gx * fwd[0] + gy * fwd[1] + gz * fwd[2] > 0.0:
            gx, gy, gz = -gx, -gy, -gz
            nx, ny, nz = -nx, -ny, -nz
        ln = math.sqrt(nx * nx + ny * ny + nz * nz)
        if ln > 0.0:
            nx, ny, nz = nx / ln, ny / ln, nz / ln
        else:
            nx, ny, nz = gx, gy, gz
        normal[p, 0] = nx
        normal[p, 1] = ny
        normal[p, 2] = nz
        geom_normal[p, 0] = gx
        geom_normal[p, 1] = gy
        geom_normal[p, 2] = gz
        for c in range(3):
            if has_colors:
                albedo[p, c] = w0 * colors[a, c] + bu * colors[b, c] + bv * colors[c3, c]
            else:
                albedo[p, c] = default_albedo[c]


@numba.njit(cache=True, nogil=True)
def _ao_kernel(lo, hi, bvh, idx, position, normal, geom_normal, streams,
               seed_lo, seed_hi, spp, eps, max_dist, out):
    bmin, bmax, left, rgt, start, count, order, v0, e1, e2 = bvh
    for q in range(lo, hi):
        p = idx[q]
        key = stream_key(seed_lo, seed_hi, streams[p], DIM_AO)
        nx, ny, nz = normal[p, 0], normal[p, 1], normal[p, 2]
        gx, gy, gz = geom_normal[p, 0], geom_normal[p, 1], geom_normal[p, 2]
        ox = position[p, 0] + eps * gx
        oy = position[p, 1] + eps * gy
        oz = position[p, 2] + eps * gz
        visible = 0
        for s in range(spp):
            u1, u2 = cmj2d(s, spp, key)
            dx, dy, dz = cosine_hemisphere(nx, ny, nz, u1, u2)
            if dx * gx + dy * gy + dz * gz <= 0.0:
                continue
            if not any_hit(bmin, bmax, left, rgt, start, count, order, v0, e1, e2,
                           ox, oy, oz, dx, dy, dz, max_dist):
                visible += 1
        out[p] = visible / spp


@numba.njit(cache=True, nogil=True)
def _shading_kernel(lo, hi, bvh, idx, position, normal, geom_normal, streams,
                    seed_lo, seed_hi, spp, eps, row_cdf, col_cdf, cos_edges, pdf, radiance,
                    clamp, out):
    bmin, bmax, left, rgt, start, count, order, v0, e1, e2 = bvh
    inv_pi = 1.0 / math.pi
    for q in range(lo, hi):
        p = idx[q]
        key = stream_key(seed_lo, seed_hi, streams[p], DIM_SHADING)
        nx, ny, nz = normal[p, 0], normal[p, 1], normal[p, 2]
        gx, gy, gz = geom_normal[p, 0], geom_normal[p, 1], geom_normal[p, 2]
        ox = position[p, 0] + eps * gx
        oy = position[p, 1] + eps * gy
        oz = position[p, 2] + eps * gz
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        for s in range(spp):
            ux, uy = cmj2d(s, spp, key)
            dx, dy, dz, pd, row, col = sample_env(row_cdf, col_cdf, cos_edges, pdf, uy, ux)
            cos = nx * dx + ny * dy + nz * dz
            if cos <= 0.0 or dx * gx + dy * gy + dz * gz <= 0.0:
                continue
            if any_hit(bmin, bmax, left, rgt, start, count, order, v0, e1, e2,
                       ox, oy, oz, dx, dy, dz, math.inf):
                continue
            f = cos * inv_pi / pd
            r0 = radiance[row, col, 0] * f
            r1 = radiance[row, col, 1] * f
            r2 = radiance[row, col, 2] * f
            if clamp > 0.0:
                r0 = min(r0, clamp)
                r1 = min(r1, clamp)
                r2 = min(r2, clamp)
            acc0 += r0
            acc1 += r1
            acc2 += r2
        out[p, 0] = acc0 / spp
        out[p, 1] = acc1 / spp
        out[p, 2] = acc2 / spp


# ---------------------------------------------------------------------------
# Point-level evaluation


def _point_inputs(points, normals, geom_normals):
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    nrm = np.atleast_2d(np.asarray(normals, dtype=np.float64))
    nrm = np.ascontiguousarray(nrm / np.linalg.norm(nrm, axis=1, keepdims=True))
    nrm = np.ascontiguousarray(np.broadcast_to(nrm, pts.shape))
    if geom_normals is None:
        gn = nrm
    else:
        gn = np.atleast_2d(np.asarray(geom_normals, dtype=np.float64))
        gn = np.ascontiguousarray(np.broadcast_to(gn / np.linalg.norm(gn, axis=1, keepdims=True), pts.shape))
    return pts, nrm, gn


def ao_at_points(scene, points, normals, cfg: RenderConfig = RenderConfig(), geom_normals=None, streams=None):
    """Ambient occlusion at arbitrary surface points; returns ``(n,)`` in [0, 1].

    ``streams`` selects the RNG stream per point (defaults to the point index).
    """
    scene = as_scene(scene)
    pts, nrm, gn = _point_inputs(points, normals, geom_normals)
    n = len(pts)
    streams = np.arange(n, dtype=np.int64) if streams is None else np.asarray(streams, dtype=np.int64)
    out = np.zeros(n)
    lo32, hi32 = split_seed(cfg.seed)
    _run_tiles(_ao_kernel, n, cfg, scene.bvh.arrays, np.arange(n, dtype=np.int64), pts, nrm, gn, streams,
               lo32, hi32, cfg.spp, cfg.epsilon_for(scene.diagonal), float(cfg.ao_max_distance), out)
    return out


def _sampler_for(env):
    if isinstance(env, EnvSampler):
        return env
    return EnvSampler(env)


def _is_black(env):
    env = env.env if isinstance(env, EnvSampler) else env
    return not env.luminance.sum() > 0


def shading_at_points(scene, points, normals, env, cfg: RenderConfig = RenderConfig(), geom_normals=None,
                      streams=None):
    """Direct-lighting shading at arbitrary surface points; returns ``(n, 3)``."""
    scene = as_scene(scene)
    pts, nrm, gn = _point_inputs(points, normals, geom_normals)
    n = len(pts)
    out = np.zeros((n, 3))
    if _is_black(env):
        return out
    sampler = _sampler_for(env)
    streams = np.arange(n, dtype=np.int64) if streams is None else np.asarray(streams, dtype=np.int64)
    _launch_shading(scene, sampler, cfg, np.arange(n, dtype=np.int64), pts, nrm, gn, streams, out)
    return out


def _launch_shading(scene, sampler, cfg, idx, pts, nrm, gn, streams, out):
    lo32, hi32 = split_seed(cfg.seed)
    clamp = -1.0 if cfg.clamp_radiance is None else float(cfg.clamp_radiance)
    _run_tiles(_shading_kernel, len(idx), cfg, scene.bvh.arrays, idx, pts, nrm, gn, streams,
               lo32, hi32, cfg.spp, cfg.epsilon_for(scene.diagonal),
               sampler.row_cdf, sampler.col_cdf, sampler.cos_edges, sampler.pdf,
               np.ascontiguousarray(sampler.env.radiance), clamp, out)


# ---------------------------------------------------------------------------
# Raster passes


def render_geometry(scene, camera: OrthoCamera, cfg: RenderConfig = RenderConfig()) -> GBuffer:
    """Primary visibility: one ray per pixel center along ``camera.forward``.

    ``scene=None`` is an empty scene and yields an all-background buffer.
    """
    if scene is None:
        gbuf = empty_gbuffer(camera)
        return gbuf.replace(ao=None, shading=None)
    scene = as_scene(scene)
    w, h = camera.image_w, camera.image_h
    n = w * h
    mask = np.zeros(n, dtype=np.uint8)
    depth = np.empty(n)
    normal = np.empty((n, 3))
    position = np.empty((n, 3))
    geom_normal = np.empty((n, 3))
    tri_id = np.empty(n, dtype=np.int64)
    albedo = np.empty((n, 3))
    mesh = scene.mesh
    has_colors = mesh.colors is not None
    colors = mesh.colors if has_colors else np.zeros((1, 3))
    _run_tiles(_geometry_kernel, n, cfg, scene.bvh.arrays, mesh.triangles, mesh.vertex_normals,
               scene.face_normals, colors, has_colors, np.asarray(cfg.default_albedo, dtype=np.float64),
               w, h, camera.center, camera.right, camera.up, camera.forward,
               mask, depth, normal, position, geom_normal, tri_id, albedo)
    return GBuffer(
        mask=mask.reshape(h, w), depth=depth.reshape(h, w), normal=normal.reshape(h, w, 3),
        position=position.reshape(h, w, 3), geom_normal=geom_normal.reshape(h, w, 3),
        tri_id=tri_id.reshape(h, w), albedo=albedo.reshape(h, w, 3),
    )


def _flat(gbuf: GBuffer):
    h, w = gbuf.shape
    return (np.ascontiguousarray(gbuf.position.reshape(h * w, 3)),
            np.ascontiguousarray(gbuf.normal.reshape(h * w, 3)),
            np.ascontiguousarray(gbuf.geom_normal.reshape(h * w, 3)),
            np.flatnonzero(gbuf.mask.reshape(-1)).astype(np.int64))


def render_ao(scene, camera: OrthoCamera, cfg: RenderConfig = RenderConfig(), gbuffer: GBuffer | None = None) -> GBuffer:
    """Ambient-occlusion pass; runs the geometry pass first when no G-buffer is given."""
    if gbuffer is None:
        gbuffer = render_geometry(scene, camera, cfg)
    h, w = gbuffer.shape
    out = np.zeros(h * w)
    if scene is None:
        return gbuffer.replace(ao=out.reshape(h, w))
    scene = as_scene(scene)
    pos, nrm, gn, idx = _flat(gbuffer)
    lo32, hi32 = split_seed(cfg.seed)
    _run_tiles(_ao_kernel, len(idx), cfg, scene.bvh.arrays, idx, pos, nrm, gn,
               np.arange(h * w, dtype=np.int64), lo32, hi32, cfg.spp,
               cfg.epsilon_for(scene.diagonal), float(cfg.ao_max_distance), out)
    return gbuffer.replace(ao=out.reshape(h, w))


def render_shading(scene, camera: OrthoCamera, env, cfg: RenderConfig = RenderConfig(),
                   gbuffer: GBuffer | None = None) -> GBuffer:
    """Environment-lit shading pass.

    ``env`` is an :class:`EnvironmentMap` or a prebuilt :class:`EnvSampler`.
    An all-black map yields zero shading.
    """
    if gbuffer is None:
        gbuffer = render_geometry(scene, camera, cfg)
    h, w = gbuffer.shape
    out = np.zeros((h * w, 3))
    if scene is not None and not _is_black(env):
        scene = as_scene(scene)
        pos, nrm, gn, idx = _flat(gbuffer)
        _launch_shading(scene, _sampler_for(env), cfg, idx, pos, nrm, gn,
                        np.arange(h * w, dtype=np.int64), out)
    return gbuffer.replace(shading=out.reshape(h, w, 3))


def render_all(scene, camera: OrthoCamera, env=None, cfg: RenderConfig = RenderConfig(),
               passes=("ao", "shading")) -> GBuffer:
    if scene is not None:
        scene = as_scene(scene)
    gbuf = render_geometry(scene, camera, cfg)
    if "ao" in passes:
        gbuf = render_ao(scene, camera, cfg, gbuf)
    if "shading" in passes:
        if env is None:
            raise ValueError("the shading pass needs an environment map")
        gbuf = render_shading(scene, camera, env, cfg, gbuf)
    return gbuf


def render_face_pass(face_scene, camera: OrthoCamera, env, cfg: RenderConfig = RenderConfig()) -> GBuffer:
    """Geometry plus shading for an unsmoothed face mesh on the body's raster.

    Identical to the body path; the caller simply skips smoothing and must
    pass the same camera as the body render so the planes stay aligned.
    """
    scene = None if face_scene is None else as_scene(face_scene)
    return render_shading(scene, camera, env, cfg, render_geometry(scene, camera, cfg))


def empty_gbuffer(camera: OrthoCamera) -> GBuffer:
    h, w = camera.image_h, camera.image_w
    return GBuffer(
        mask=np.zeros((h, w), np.uint8), depth=np.full((h, w), np.inf), normal=np.zeros((h, w, 3)),
        position=np.zeros((h, w, 3)), geom_normal=np.zeros((h, w, 3)), tri_id=np.full((h, w), -1, np.int64),
        albedo=np.zeros((h, w, 3)), ao=np.zeros((h, w)), shading=np.zeros((h, w, 3)),
    )


__all__ = [
    "GBuffer", "Scene", "as_scene", "ao_at_points", "shading_at_points", "render_geometry", "render_ao",
    "render_shading", "render_all", "render_face_pass", "empty_gbuffer",
]
