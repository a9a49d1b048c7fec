from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import PreconditionError


@dataclass(frozen=True, eq=False)
class OrthoCamera:
    """Pixel-aligned orthographic view.

    ``right`` and ``up`` span the view rectangle: their lengths are half its
    width and height in scene units.  Rays start on the rectangle at pixel
    centers and travel along the unit vector ``forward``.  Row 0 is the top
    of the image (the ``+up`` edge).
    """

    image_w: int
    image_h: int
    center: np.ndarray
    right: np.ndarray
    up: np.ndarray
    forward: np.ndarray

    def __post_init__(self):
        for name in ("center", "right", "up", "forward"):
            v = np.array(getattr(self, name), dtype=np.float64).reshape(3)
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.image_w < 1 or self.image_h < 1:
            raise PreconditionError("camera raster must be at least 1x1")
        if abs(np.linalg.norm(self.forward) - 1.0) > 1e-6:
            raise PreconditionError("forward must be a unit vector")
        if np.linalg.norm(self.right) <= 0 or np.linalg.norm(self.up) <= 0:
            raise PreconditionError("right and up must be non-zero")
        r = self.right / np.linalg.norm(self.right)
        u = self.up / np.linalg.norm(self.up)
        if max(abs(r @ u), abs(r @ self.forward), abs(u @ self.forward)) > 1e-6:
            raise PreconditionError("right, up and forward must be mutually orthogonal")

    @classmethod
    def looking_at(cls, target, forward, half_width, half_height=None, image_w=128, image_h=None,
                   world_up=(0.0, 1.0, 0.0), distance=None):
        """Camera whose view rectangle is centered on ``target`` seen along ``forward``.

        The rectangle sits ``distance`` behind the target (default: far enough
        that any geometry within ``2 * max(half extents)`` of it lies in front).
        """
        f = np.asarray(forward, dtype=np.float64)
        f = f / np.linalg.norm(f)
        wu = np.asarray(world_up, dtype=np.float64)
        if abs(f @ wu) > 1 - 1e-9:
            wu = np.array([0.0, 0.0, -1.0]) if f[1] < 0 else np.array([0.0, 0.0, 1.0])
        r = np.cross(f, wu)
        r /= np.linalg.norm(r)
        u = np.cross(r, f)
        half_height = half_width if half_height is None else half_height
        image_h = image_w if image_h is None else image_h
        if distance is None:
            distance = 4.0 * max(half_width, half_height)
        center = np.asarray(target, dtype=np.float64) - distance * f
        return cls(image_w, image_h, center, r * half_width, u * half_height, f)

    def ray_origins(self):
        """Ray origins at all pixel centers, ``(H, W, 3)``."""
        u = (np.arange(self.image_w) + 0.5) / self.image_w * 2.0 - 1.0
        v = 1.0 - (np.arange(self.image_h) + 0.5) / self.image_h * 2.0
        return (self.center + v[:, None, None] * self.up + u[None, :, None] * self.right)

    def project(self, points):
        """Continuous ``(row, col)`` raster coordinates of 3D points.

        Pixel ``(i, j)`` covers ``[i, i + 1) x [j, j + 1)``; its center is at
        ``(i + 0.5, j + 0.5)``.
        """
        d = np.asarray(points, dtype=np.float64) - self.center
        u = d @ self.right / (self.right @ self.right)
        v = d @ self.up / (self.up @ self.up)
        col = (u + 1.0) * 0.5 * self.image_w
        row = (1.0 - v) * 0.5 * self.image_h
        return row, col

    @property
    def pixel_size(self):
        """Pixel footprint ``(height, width)`` in scene units."""
        return (2.0 * np.linalg.norm(self.up) / self.image_h, 2.0 * np.linalg.norm(self.right) / self.image_w)


@dataclass(frozen=True)
class RenderConfig:
    """Sampling and execution settings for the tracer.

    ``ray_epsilon=None`` means 1e-4 times the scene's bounding-box diagonal.
    ``jobs`` is the number of tile workers; it never changes the result.
    """

    spp: int = 256
    ray_epsilon: float | None = None
    ao_max_distance: float = math.inf
    seed: int = 0
    clamp_radiance: float | None = None
    jobs: int = 1
    tile_pixels: int = 4096
    default_albedo: tuple = (0.8, 0.8, 0.8)

    def __post_init__(self):
        if self.spp < 1:
            raise PreconditionError("spp must be >= 1")
        if self.ray_epsilon is not None and not self.ray_epsilon > 0:
            raise PreconditionError("ray_epsilon must be > 0")
        if not self.ao_max_distance > 0:
            raise PreconditionError("ao_max_distance must be > 0")
        if self.clamp_radiance is not None and not self.clamp_radiance > 0:
            raise PreconditionError("clamp_radiance must be > 0 when set")
        if self.jobs < 1 or self.tile_pixels < 1:
            raise PreconditionError("jobs and tile_pixels must be >= 1")

    def epsilon_for(self, diagonal):
        return self.ray_epsilon if self.ray_epsilon is not None else 1e-4 * max(diagonal, 1e-12)
