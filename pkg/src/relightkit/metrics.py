"""Foreground image metrics and the weighted log-L2 lighting loss."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .envlight import EnvironmentMap, downsample_pyramid, solid_angle_weights
from .errors import DegenerateInputError, ShapeError

logger = logging.getLogger(__name__)

MSE_SCALE = 1e3
PSNR_CAP = 99.0
LIGHT_GRID = (32, 16)


@dataclass
class MetricReport:
    mse_scaled: float | None = None
    psnr: float | None = None
    ssim: float | None = None
    pixel_count: int | None = None
    fft_l1: float | None = None
    light_loss: float | None = None

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


def _pixels(x):
    return np.asarray(getattr(x, "pixels", x), dtype=np.float64)


def _prepare(a, b, mask):
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise ShapeError(f"images differ in shape: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if mask is None:
        m = np.ones(a.shape[:2], dtype=bool)
    else:
        m = np.asarray(mask) > 0.5
        if m.shape != a.shape[:2]:
            raise ShapeError(f"mask {m.shape} does not match images {a.shape[:2]}")
    if not m.any():
        raise DegenerateInputError("mask selects no foreground pixels")
    out = []
    for img in (a, b):
        if img.min() < 0.0 or img.max() > 1.0:
            logger.warning("image values outside [0, 1] were clamped")
            img = np.clip(img, 0.0, 1.0)
        out.append(img)
    return out[0], out[1], m


def mse_psnr(a, b, mask=None):
    """``(MSE * 1e3, PSNR in dB)`` over foreground pixels and all channels.

    PSNR assumes a peak of 1.0 and is capped at 99 dB for MSE below 1e-10.
    """
    a, b, m = _prepare(a, b, mask)
    diff = (a - b)[m]
    mse = float(np.mean(diff * diff))
    psnr = PSNR_CAP if mse < 1e-10 else min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))
    return mse * MSE_SCALE, psnr


def gaussian_window(size=11, sigma=1.5):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter(img, window):
    out = correlate1d(img, window, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, window, axis=1, mode="constant", cval=0.0)


def ssim_map(a, b, window_size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Per-pixel SSIM for single-channel images.

    Windows crossing the image border use only the in-image pixels, with the
    Gaussian weights renormalized.
    """
    g = gaussian_window(window_size, sigma)
    norm = _filter(np.ones_like(a), g)

    def mean(x):
        return _filter(x, g) / norm

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a, mu_b = mean(a), mean(b)
    var_a = mean(a * a) - mu_a * mu_a
    var_b = mean(b * b) - mu_b * mu_b
    cov = mean(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, mask=None, **kwargs):
    """Mean SSIM over channels and over windows centered on foreground pixels."""
    a, b, m = _prepare(a, b, mask)
    vals = [ssim_map(a[..., c], b[..., c], **kwargs)[m].mean() for c in range(a.shape[2])]
    return float(np.clip(np.mean(vals), -1.0, 1.0))


def _fft(x):
    x = _pixels(x)
    return np.fft.fft2(x, axes=(0, 1))


def fft_l1(a, b, magnitude=False):
    """L1 distance between 2D FFTs (unnormalized transform), per pixel and channel.

    By default the real and imaginary parts are compared separately, which
    is sensitive to translation.  ``magnitude=True`` compares spectra
    magnitudes only and is shift invariant.
    """
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise ShapeError(f"images differ in shape: {a.shape} vs {b.shape}")
    fa, fb = _fft(a), _fft(b)
    if magnitude:
        total = np.abs(np.abs(fa) - np.abs(fb)).sum()
    else:
        d = fa - fb
        total = np.abs(d.real).sum() + np.abs(d.imag).sum()
    return float(total / a.size)


def fft_sq_l2(a, b):
    """Squared L2 norm of the FFT difference (equals N times the pixel-domain value)."""
    d = _fft(a) - _fft(b)
    return float(np.sum(d.real ** 2 + d.imag ** 2))


def _to_grid(env):
    if not isinstance(env, EnvironmentMap):
        env = EnvironmentMap(env)
    w, h = LIGHT_GRID
    if (env.width, env.height) == (w, h):
        return env
    return downsample_pyramid(env, w, h)


def light_loss(est, gt, asymmetric=False):
    """Solid-angle weighted log-L2 distance between two environment maps.

    Both maps are reduced to 32x16 with the Gaussian pyramid, then
    ``sum w * (log(1 + est) - log(1 + gt))^2`` over pixels and channels.
    With ``asymmetric=True`` the weight multiplies only the estimate's log,
    ``sum (w * log(1 + est) - log(1 + gt))^2``.
    """
    e = _to_grid(est).radiance
    g = _to_grid(gt).radiance
    w = solid_angle_weights(*LIGHT_GRID)[..., None]
    if asymmetric:
        return float(np.sum((w * np.log1p(e) - np.log1p(g)) ** 2))
    return float(np.sum(w * (np.log1p(e) - np.log1p(g)) ** 2))


def evaluate(a, b, mask=None, metrics=("mse", "psnr", "ssim")) -> MetricReport:
    report = MetricReport()
    metrics = set(metrics)
    if metrics & {"mse", "psnr", "ssim"}:
        # clamp and validate once so the range warning is emitted at most once
        pa, pb, m = _prepare(a, b, mask)
        report.pixel_count = int(m.sum())
        if metrics & {"mse", "psnr"}:
            mse, psnr = mse_psnr(pa, pb, m)
            if "mse" in metrics:
                report.mse_scaled = mse
            if "psnr" in metrics:
                report.psnr = psnr
        if "ssim" in metrics:
            report.ssim = ssim(pa, pb, m)
    if "fft" in metrics:
        report.fft_l1 = fft_l1(a, b)
    if "light" in metrics:
        report.light_loss = light_loss(a, b)
    return report
