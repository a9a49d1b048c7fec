"""Equirectangular HDR environment maps.

Lat-long convention used throughout the package:

* rows run from the north pole (+Y, row 0) to the south pole; the polar
  angle of a pixel center is ``theta = pi * (row + 0.5) / H``;
* columns run in azimuth ``phi = 2 * pi * (col + 0.5) / W``, measured from
  +X toward +Z;
* the direction is ``(sin(theta) cos(phi), cos(theta), sin(theta) sin(phi))``.

Radiance arrays are stored numpy-style as ``(H, W, 3)``.

Spherical harmonics are real and orthonormal over the unit sphere, without
the Condon-Shortley phase, and are expressed in the same polar frame: the
``m = 0`` functions are rotationally symmetric about +Y, so ``Y(1, 0)`` is
proportional to ``y``, ``Y(1, 1)`` to ``x`` and ``Y(1, -1)`` to ``z``.
Coefficient ``(l, m)`` lives at flat index ``l * l + l + m``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

from .errors import DegenerateInputError, PreconditionError, ShapeError

LUMINANCE_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])


@dataclass(frozen=True, eq=False)
class EnvironmentMap:
    """Linear-radiance lat-long panorama, ``radiance`` shaped ``(H, W, 3)``."""

    radiance: np.ndarray

    def __post_init__(self):
        rad = np.array(self.radiance, dtype=np.float64, copy=True)
        if rad.ndim == 2:
            rad = np.repeat(rad[..., None], 3, axis=2)
        if rad.ndim != 3 or rad.shape[2] != 3:
            raise ShapeError(f"radiance must be (H, W, 3), got {rad.shape}")
        if rad.shape[1] < 2 or rad.shape[0] < 1:
            raise ShapeError(f"environment map needs W >= 2 and H >= 1, got W={rad.shape[1]}, H={rad.shape[0]}")
        if not np.all(np.isfinite(rad)) or rad.min() < 0:
            raise PreconditionError("environment radiance must be finite and non-negative")
        rad.setflags(write=False)
        object.__setattr__(self, "radiance", rad)

    @classmethod
    def constant(cls, value, width=64, height=32):
        return cls(np.broadcast_to(np.asarray(value, dtype=np.float64), (height, width, 3)))

    @property
    def width(self) -> int:
        return self.radiance.shape[1]

    @property
    def height(self) -> int:
        return self.radiance.shape[0]

    @cached_property
    def luminance(self) -> np.ndarray:
        return self.radiance @ LUMINANCE_WEIGHTS

    def scaled(self, factor) -> "EnvironmentMap":
        return EnvironmentMap(self.radiance * factor)


def _check_pixel(width, height, row, col):
    row = np.asarray(row)
    col = np.asarray(col)
    if np.any(row < 0) or np.any(row >= height) or np.any(col < 0) or np.any(col >= width):
        raise IndexError(f"pixel outside {height}x{width} map")


def direction_from_pixel(width, height, row, col, offset=(0.5, 0.5)):
    """Unit direction through ``(row, col)`` plus an in-pixel ``(du, dv)`` offset.

    ``offset[0]`` moves along columns (azimuth), ``offset[1]`` along rows.
    Works elementwise on arrays of rows and columns.
    """
    _check_pixel(width, height, row, col)
    theta = np.pi * (np.asarray(row, dtype=np.float64) + offset[1]) / height
    phi = 2.0 * np.pi * (np.asarray(col, dtype=np.float64) + offset[0]) / width
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), np.cos(theta), st * np.sin(phi)], axis=-1)


def pixel_from_direction(width, height, direction):
    """Inverse of :func:`direction_from_pixel`: integer ``(row, col)`` arrays."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[..., 2], d[..., 0]), 2.0 * np.pi)
    row = np.clip(np.floor(theta * height / np.pi).astype(np.int64), 0, height - 1)
    col = np.floor(phi * width / (2.0 * np.pi)).astype(np.int64) % width
    return row, col


def pixel_directions(width, height):
    """Directions of all pixel centers, shaped ``(H, W, 3)``."""
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return direction_from_pixel(width, height, rows, cols)


def solid_angle_weights(width, height):
    """Steradians subtended by each pixel, shaped ``(H, W)``; sums to 4 pi."""
    if width < 2 or height < 1:
        raise ShapeError(f"need W >= 2 and H >= 1, got W={width}, H={height}")
    edges = np.cos(np.pi * np.arange(height + 1) / height)
    per_row = (2.0 * np.pi / width) * (edges[:-1] - edges[1:])
    return np.repeat(per_row[:, None], width, axis=1)


# ---------------------------------------------------------------------------
# Rotation and filtering


def yaw_matrix(degrees):
    """Rotation about +Y matching :func:`rotate_yaw` (azimuth phi -> phi + degrees)."""
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rotate_yaw(env: EnvironmentMap, degrees) -> EnvironmentMap:
    """Rotate the panorama about the vertical axis by shifting columns.

    A feature at azimuth phi moves to phi + degrees.  Shifts that land on a
    whole number of columns are exact permutations; fractional shifts blend
    the two neighboring columns linearly with wraparound.
    """
    shift = env.width * degrees / 360.0
    whole = round(shift)
    if abs(shift - whole) < 1e-9:
        return EnvironmentMap(np.roll(env.radiance, whole, axis=1))
    k = math.floor(shift)
    f = shift - k
    a = np.roll(env.radiance, k, axis=1)
    b = np.roll(env.radiance, k + 1, axis=1)
    return EnvironmentMap((1.0 - f) * a + f * b)


_BINOMIAL = (1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16)


def _blur_reduce(rad):
    h, w = rad.shape[:2]
    # horizontal pass wraps around in azimuth
    x = sum(k * np.roll(rad, 2 - i, axis=1) for i, k in enumerate(_BINOMIAL))
    # vertical pass clamps at the poles
    padded = np.concatenate([x[:1], x[:1], x, x[-1:], x[-1:]], axis=0)
    y = sum(k * padded[i:i + h] for i, k in enumerate(_BINOMIAL))
    return y[0::2, 0::2]


def downsample_pyramid(env: EnvironmentMap, target_w: int, target_h: int) -> EnvironmentMap:
    """Gaussian-pyramid reduction to ``target_w x target_h``.

    Each level blurs with the separable 5-tap binomial kernel [1 4 6 4 1]/16
    and keeps every other row and column.  Both dimensions must be the target
    times the same power of two.
    """
    w, h = env.width, env.height
    if w % target_w or h % target_h or w // target_w != h // target_h:
        raise ShapeError(f"cannot reduce {w}x{h} to {target_w}x{target_h}")
    factor = w // target_w
    if factor & (factor - 1):
        raise ShapeError(f"reduction factor {factor} is not a power of two")
    rad = env.radiance
    while rad.shape[1] > target_w:
        rad = _blur_reduce(rad)
    return EnvironmentMap(np.maximum(rad, 0.0))


# ---------------------------------------------------------------------------
# Spherical harmonics


def sh_count(order):
    return (order + 1) ** 2


def sh_index(l, m):
    return l * l + l + m


def sh_basis(order, directions):
    """Real SH basis up to ``order`` evaluated at unit ``directions``.

    Returns an array shaped ``directions.shape[:-1] + ((order + 1) ** 2,)``.
    """
    d = np.asarray(directions, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    cos_t = np.clip(y, -1.0, 1.0)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    phi = np.arctan2(z, x)
    out = np.empty(d.shape[:-1] + (sh_count(order),))

    # associated Legendre P_l^m(cos theta) without the (-1)^m phase
    legendre = {}
    pmm = np.ones_like(cos_t)
    for m in range(order + 1):
        if m > 0:
            pmm = pmm * (2 * m - 1) * sin_t
        legendre[(m, m)] = pmm
        if m + 1 <= order:
            legendre[(m + 1, m)] = cos_t * (2 * m + 1) * pmm
        for l in range(m + 2, order + 1):
            legendre[(l, m)] = ((2 * l - 1) * cos_t * legendre[(l - 1, m)]
                                - (l + m - 1) * legendre[(l - 2, m)]) / (l - m)

    for l in range(order + 1):
        for m in range(0, l + 1):
            k = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m))
            if m == 0:
                out[..., sh_index(l, 0)] = k * legendre[(l, 0)]
            else:
                base = math.sqrt(2.0) * k * legendre[(l, m)]
                out[..., sh_index(l, m)] = base * np.cos(m * phi)
                out[..., sh_index(l, -m)] = base * np.sin(m * phi)
    return out


def lambertian_band_factors(order):
    """Clamped-cosine convolution factors per band: pi, 2pi/3, pi/4, 0, -pi/24, ..."""
    out = []
    for l in range(order + 1):
        if l == 0:
            out.append(math.pi)
        elif l == 1:
            out.append(2.0 * math.pi / 3.0)
        elif l % 2:
            out.append(0.0)
        else:
            half = l // 2
            out.append(2.0 * math.pi * (-1) ** (half - 1) / ((l + 2) * (l - 1))
                       * math.factorial(l) / (2 ** l * math.factorial(half) ** 2))
    return np.asarray(out)


@dataclass(frozen=True, eq=False)
class SHCoefficients:
    """Per-channel SH coefficients of radiance, ``coeffs`` shaped ``(K, 3)``."""

    order: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64, copy=True)
        if self.order < 0 or c.shape != (sh_count(self.order), 3):
            raise ShapeError(f"order {self.order} needs ({sh_count(self.order)}, 3) coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def truncated(self, order) -> "SHCoefficients":
        if order > self.order:
            raise ShapeError(f"cannot raise SH order {self.order} to {order}")
        return SHCoefficients(order, self.coeffs[: sh_count(order)])

    def to_json(self) -> str:
        rows = []
        for l in range(self.order + 1):
            for m in range(-l, l + 1):
                r, g, b = self.coeffs[sh_index(l, m)]
                rows.append([l, m, float(r), float(g), float(b)])
        return json.dumps(rows)

    @classmethod
    def from_json(cls, text) -> "SHCoefficients":
        rows = json.loads(text)
        order = max(int(r[0]) for r in rows)
        coeffs = np.zeros((sh_count(order), 3))
        seen = set()
        for l, m, *rgb in rows:
            coeffs[sh_index(int(l), int(m))] = rgb
            seen.add((int(l), int(m)))
        if len(seen) != sh_count(order):
            raise ShapeError(f"SH JSON lists {len(seen)} distinct coefficients, order {order} needs {sh_count(order)}")
        return cls(order, coeffs)


def sh_project(env: EnvironmentMap, order: int) -> SHCoefficients:
    """Project radiance onto the SH basis with solid-angle quadrature at pixel centers."""
    basis = sh_basis(order, pixel_directions(env.width, env.height)).reshape(-1, sh_count(order))
    weighted = (env.radiance * solid_angle_weights(env.width, env.height)[..., None]).reshape(-1, 3)
    return SHCoefficients(order, basis.T @ weighted)


def sh_irradiance_shading(coeffs: SHCoefficients, normals, tol=1e-4):
    """Lambertian shading (irradiance / pi) from SH radiance, per unit normal.

    ``normals`` may be a single 3-vector or any ``(..., 3)`` array.  Results
    are clamped at zero.
    """
    n = np.asarray(normals, dtype=np.float64)
    if np.any(np.abs(np.linalg.norm(n, axis=-1) - 1.0) > tol):
        raise PreconditionError("sh_irradiance_shading needs unit normals")
    band = lambertian_band_factors(coeffs.order)
    per_coeff = np.concatenate([np.full(2 * l + 1, band[l]) for l in range(coeffs.order + 1)])
    transfer = coeffs.coeffs * per_coeff[:, None] / math.pi
    return np.maximum(sh_basis(coeffs.order, n) @ transfer, 0.0)


# ---------------------------------------------------------------------------
# Importance sampling


@numba.njit(cache=True, nogil=True)
def _upper_bin(cdf, u):
    # largest i with cdf[i] <= u, restricted to [0, len(cdf) - 2]
    lo, hi = 0, len(cdf) - 2
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if cdf[mid] <= u:
            lo = mid
        else:
            hi = mid - 1
    return lo


@numba.njit(cache=True, nogil=True)
def sample_env(row_cdf, col_cdf, cos_edges, pdf, u1, u2):
    """Warp ``(u1, u2)`` in [0,1)^2 to a direction.

    Returns ``(dx, dy, dz, pdf, row, col)``.  The fractional position of each
    uniform inside its CDF bin is reused for the in-pixel offset, so
    stratified inputs stay stratified on the sphere.
    """
    width = col_cdf.shape[1] - 1
    row = _upper_bin(row_cdf, u1)
    span = row_cdf[row + 1] - row_cdf[row]
    fv = (u1 - row_cdf[row]) / span if span > 0 else 0.5
    ccdf = col_cdf[row]
    col = _upper_bin(ccdf, u2)
    span = ccdf[col + 1] - ccdf[col]
    fu = (u2 - ccdf[col]) / span if span > 0 else 0.5
    fv = min(max(fv, 0.0), 1.0)
    fu = min(max(fu, 0.0), 1.0)
    cos_t = cos_edges[row] - fv * (cos_edges[row] - cos_edges[row + 1])
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    phi = 2.0 * math.pi * (col + fu) / width
    return sin_t * math.cos(phi), cos_t, sin_t * math.sin(phi), pdf[row, col], row, col


@numba.njit(cache=True, nogil=True)
def _sample_many(row_cdf, col_cdf, cos_edges, pdf, u):
    n = u.shape[0]
    dirs = np.empty((n, 3))
    pdfs = np.empty(n)
    rows = np.empty(n, np.int64)
    cols = np.empty(n, np.int64)
    for i in range(n):
        dx, dy, dz, p, r, c = sample_env(row_cdf, col_cdf, cos_edges, pdf, u[i, 0], u[i, 1])
        dirs[i, 0] = dx
        dirs[i, 1] = dy
        dirs[i, 2] = dz
        pdfs[i] = p
        rows[i] = r
        cols[i] = c
    return dirs, pdfs, rows, cols


class EnvSampler:
    """Draws directions with probability proportional to luminance x solid angle.

    ``pdf`` is per steradian and piecewise constant over pixels.  Immutable
    once built.
    """

    def __init__(self, env: EnvironmentMap):
        weights = solid_angle_weights(env.width, env.height)
        mass = np.maximum(env.luminance, 0.0) * weights
        total = mass.sum()
        if not total > 0:
            raise DegenerateInputError("cannot importance-sample an all-black environment map")
        self.env = env
        row_mass = mass.sum(axis=1)
        self.row_cdf = np.concatenate([[0.0], np.cumsum(row_mass)]) / total
        self.row_cdf[-1] = 1.0
        col_cdf = np.zeros((env.height, env.width + 1))
        np.cumsum(mass, axis=1, out=col_cdf[:, 1:])
        nz = row_mass > 0
        col_cdf[nz] /= row_mass[nz, None]
        col_cdf[nz, -1] = 1.0
        # rows without mass are never selected; give them a harmless ramp
        col_cdf[~nz] = np.linspace(0.0, 1.0, env.width + 1)
        self.col_cdf = col_cdf
        self.pmf = mass / total
        self.pdf = self.pmf / weights
        self.cos_edges = np.cos(np.pi * np.arange(env.height + 1) / env.height)
        for a in (self.row_cdf, self.col_cdf, self.pmf, self.pdf, self.cos_edges):
            a.setflags(write=False)

    def sample(self, u):
        """Map ``(n, 2)`` uniforms to ``(directions, pdfs, rows, cols)``."""
        u = np.ascontiguousarray(np.atleast_2d(u), dtype=np.float64)
        return _sample_many(self.row_cdf, self.col_cdf, self.cos_edges, self.pdf, u)

    def draw(self, n, rng=None):
        rng = np.random.default_rng(rng)
        return self.sample(rng.random((n, 2)))

    def pdf_of(self, directions):
        row, col = pixel_from_direction(self.env.width, self.env.height, directions)
        return self.pdf[row, col]


def build_luminance_sampler(env: EnvironmentMap) -> EnvSampler:
    return EnvSampler(env)


# ---------------------------------------------------------------------------
# Synthetic maps for demos and tests


def synthetic_sky(width=256, height=128, sun_direction=(0.4, 0.6, 0.3), sun_radiance=40.0,
                  sun_sharpness=200.0, zenith=(0.25, 0.4, 0.9), horizon=(0.9, 0.85, 0.8),
                  ground=(0.15, 0.12, 0.1)):
    """A smooth sky gradient plus an exponential sun lobe over a dim ground."""
    d = pixel_directions(width, height)
    y = d[..., 1:2]
    t = np.clip(y, 0.0, 1.0)
    sky = (1.0 - t) * np.asarray(horizon) + t * np.asarray(zenith)
    rad = np.where(y > 0, sky, np.asarray(ground) * np.ones_like(sky))
    s = np.asarray(sun_direction, dtype=np.float64)
    s = s / np.linalg.norm(s)
    lobe = np.exp(sun_sharpness * (d @ s - 1.0))[..., None]
    rad = rad + sun_radiance * lobe * np.array([1.0, 0.95, 0.85])
    return EnvironmentMap(rad)


def single_texel_map(width, height, row, col, radiance=1000.0):
    rad = np.zeros((height, width, 3))
    rad[row, col] = radiance
    return EnvironmentMap(rad)
