"""Relit image assembly: albedo x shading, region compositing, background swap."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envlight import EnvironmentMap
from .errors import DegenerateInputError, PreconditionError, ShapeError


@dataclass(frozen=True, eq=False)
class ImageRGB:
    """Linear RGB ``pixels`` shaped ``(H, W, 3)`` with an optional ``(H, W)`` mask in [0, 1]."""

    pixels: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ShapeError(f"pixels must be (H, W, 3), got {px.shape}")
        if not np.all(np.isfinite(px)) or px.min(initial=0.0) < 0:
            raise PreconditionError("image values must be finite and non-negative")
        object.__setattr__(self, "pixels", px)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=np.float64)
            if m.shape != px.shape[:2]:
                raise ShapeError(f"mask shape {m.shape} does not match image {px.shape[:2]}")
            object.__setattr__(self, "mask", m)

    @property
    def shape(self):
        return self.pixels.shape[:2]


def as_image(x, mask=None) -> ImageRGB:
    if isinstance(x, ImageRGB):
        return x if mask is None else ImageRGB(x.pixels, mask)
    return ImageRGB(x, mask)


def compose_relit(albedo, shading) -> ImageRGB:
    """Per-pixel, per-channel product ``albedo * shading``; keeps the albedo mask."""
    a, s = as_image(albedo), as_image(shading)
    if a.shape != s.shape:
        raise ShapeError(f"albedo {a.shape} and shading {s.shape} differ in size")
    return ImageRGB(a.pixels * s.pixels, a.mask)


@dataclass(frozen=True)
class RegionSpec:
    """Rectangle ``(row0, col0, rows, cols)`` on the body raster plus a feather width."""

    row0: int
    col0: int
    rows: int
    cols: int
    feather: int = 4

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.row0 < 0 or self.col0 < 0:
            raise ShapeError(f"invalid region {self}")
        if self.feather < 0 or (self.feather and self.feather >= min(self.rows, self.cols) / 2):
            raise ShapeError(f"feather {self.feather} must be < min(rows, cols) / 2")

    @classmethod
    def parse(cls, text, feather=4):
        """From ``"r0,c0,h,w"``."""
        parts = [int(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"region needs r0,c0,h,w, got {text!r}")
        return cls(*parts, feather=feather)

    def check_within(self, shape):
        h, w = shape
        if self.row0 + self.rows > h or self.col0 + self.cols > w:
            raise ShapeError(f"region {self} exceeds raster {h}x{w}")

    def blend_weights(self):
        """Patch weight per region pixel: 1 inside, linear ramp across the feather band."""
        r = np.arange(self.rows)
        c = np.arange(self.cols)
        dr = np.minimum(r, self.rows - 1 - r)
        dc = np.minimum(c, self.cols - 1 - c)
        d = np.minimum(dr[:, None], dc[None, :]).astype(np.float64)
        if self.feather == 0:
            return np.ones_like(d)
        return np.minimum(1.0, (d + 0.5) / self.feather)


def composite_region(body, patch, region: RegionSpec) -> ImageRGB:
    """Paste ``patch`` over ``body`` inside ``region`` with a feathered edge."""
    b, p = as_image(body), as_image(patch)
    region.check_within(b.shape)
    if p.shape != (region.rows, region.cols):
        raise ShapeError(f"patch {p.shape} does not match region {region.rows}x{region.cols}")
    out = b.pixels.copy()
    sl = (slice(region.row0, region.row0 + region.rows), slice(region.col0, region.col0 + region.cols))
    w = region.blend_weights()[..., None]
    if region.feather == 0:
        out[sl] = p.pixels
    else:
        out[sl] = w * p.pixels + (1.0 - w) * out[sl]
    return ImageRGB(out, b.mask)


def normalize_shading(shading) -> ImageRGB:
    """Divide by the global maximum so the brightest value becomes 1."""
    s = as_image(shading)
    peak = s.pixels.max()
    if not peak > 0:
        raise DegenerateInputError("cannot normalize an all-zero shading map")
    return ImageRGB(s.pixels / peak, s.mask)


def _bilinear_env(env: EnvironmentMap, theta, phi):
    """Bilinear lookup at continuous angles; wraps in azimuth, clamps at the poles."""
    h, w = env.height, env.width
    x = phi * w / (2.0 * np.pi) - 0.5
    y = theta * h / np.pi - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    xa, xb = x0 % w, (x0 + 1) % w
    ya, yb = np.clip(y0, 0, h - 1), np.clip(y0 + 1, 0, h - 1)
    rad = env.radiance
    top = rad[ya, xa] + fx * (rad[ya, xb] - rad[ya, xa])
    bot = rad[yb, xa] + fx * (rad[yb, xb] - rad[yb, xa])
    return top + fy * (bot - top)


def background_view(env: EnvironmentMap, width, height, azimuth_deg=0.0, fov_deg=45.0):
    """Pinhole view of the panorama looking horizontally at ``azimuth_deg``.

    Azimuth follows the lat-long convention (from +X toward +Z); image
    columns increase toward larger azimuth.
    """
    fov = math.radians(fov_deg)
    if not 0.0 < fov < math.pi:
        raise PreconditionError("vertical field of view must lie in (0, 180) degrees")
    a = math.radians(azimuth_deg)
    fwd = np.array([math.cos(a), 0.0, math.sin(a)])
    right = np.array([-math.sin(a), 0.0, math.cos(a)])
    up = np.array([0.0, 1.0, 0.0])
    half = math.tan(fov / 2.0)
    aspect = width / height
    x = ((np.arange(width) + 0.5) / width * 2.0 - 1.0) * half * aspect
    y = (1.0 - (np.arange(height) + 0.5) / height * 2.0) * half
    d = fwd + x[None, :, None] * right + y[:, None, None] * up
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[..., 2], d[..., 0]), 2.0 * np.pi)
    return _bilinear_env(env, theta, phi)


def composite_background(relit, env: EnvironmentMap, azimuth_deg=0.0, fov_deg=45.0, mask=None) -> ImageRGB:
    """Alpha-blend the foreground over the matching crop of the environment map."""
    img = as_image(relit, mask)
    if img.mask is None:
        raise PreconditionError("background compositing needs a foreground mask")
    h, w = img.shape
    bg = background_view(env, w, h, azimuth_deg, fov_deg)
    m = np.clip(img.mask, 0.0, 1.0)[..., None]
    out = np.where(m >= 1.0, img.pixels, m * img.pixels + (1.0 - m) * bg)
    return ImageRGB(out, img.mask)
