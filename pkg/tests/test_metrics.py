import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from relightkit.envlight import EnvironmentMap, rotate_yaw
from relightkit.errors import DegenerateInputError, ShapeError
from relightkit.metrics import evaluate, fft_l1, fft_sq_l2, light_loss, mse_psnr, ssim, ssim_map


def textured(h=48, w=64, seed=0):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:h, 0:w]
    base = 0.5 + 0.3 * np.sin(x / 5.0)[..., None] * np.cos(y / 7.0)[..., None] * np.array([1.0, 0.7, 0.4])
    return np.clip(base + 0.05 * rng.normal(size=(h, w, 3)), 0, 1)


def test_identical_images():
    a = textured()
    mse, psnr = mse_psnr(a, a)
    assert mse == 0 and psnr == 99.0
    assert ssim(a, a) == 1.0
    assert fft_l1(a, a) == 0


def test_constant_offset():
    a = np.random.default_rng(1).uniform(0, 0.9, size=(32, 32, 3))
    mse, psnr = mse_psnr(a, a + 0.1)
    assert abs(mse - 10.0) <= 1e-6
    assert abs(psnr - 20.0) <= 1e-4


def test_difference_outside_mask_is_ignored():
    a = textured()
    b = a.copy()
    mask = np.zeros(a.shape[:2])
    mask[:, :32] = 1
    b[:, 32:] = 1 - b[:, 32:]
    assert mse_psnr(a, b, mask)[0] == 0


def test_empty_mask_is_degenerate():
    with pytest.raises(DegenerateInputError):
        mse_psnr(textured(), textured(), np.zeros((48, 64)))


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        mse_psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


def test_out_of_range_values_are_clamped(caplog):
    a = np.full((8, 8, 3), 0.5)
    b = np.full((8, 8, 3), 1.5)
    assert mse_psnr(a, b)[0] == pytest.approx(250.0)
    assert "clamped" in caplog.text


def test_constant_images_ssim_closed_form():
    for d in (0.05, 0.2, -0.3):
        a = np.full((24, 24, 3), 0.5)
        c1 = 1e-4
        expected = (2 * 0.5 * (0.5 + d) + c1) / (0.5 ** 2 + (0.5 + d) ** 2 + c1)
        assert ssim(a, a + d) == pytest.approx(expected, abs=1e-9)


def test_ssim_matches_reference_implementation_in_interior():
    a = textured(seed=2)[..., 0]
    b = np.clip(a + 0.08 * np.random.default_rng(3).normal(size=a.shape), 0, 1)
    _, ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                   data_range=1.0, full=True)
    mine = ssim_map(a, b)
    assert np.allclose(mine[5:-5, 5:-5], ref[5:-5, 5:-5], atol=1e-9)


def test_inverted_texture_has_low_ssim():
    a = textured(seed=4)
    assert ssim(a, 1 - a) < 0.5
    ref = structural_similarity(a, 1 - a, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                data_range=1.0, channel_axis=2)
    assert ref < 0.5


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_symmetry(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(size=(2, 16, 16, 3))
    m = rng.uniform(size=(16, 16)) > 0.3
    assert mse_psnr(a, b, m) == mse_psnr(b, a, m)
    assert ssim(a, b, m) == pytest.approx(ssim(b, a, m), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_zero_iff_identical(seed, same):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(12, 12, 3))
    b = a.copy() if same else np.clip(a + rng.normal(scale=0.05, size=a.shape), 0, 1)
    mse, _ = mse_psnr(a, b)
    assert (mse < 1e-12) == same
    assert (1 - ssim(a, b) < 1e-12) == same


def test_psnr_falls_with_noise():
    a = textured(seed=5)
    means = []
    for sigma in (0.01, 0.02, 0.05):
        vals = [mse_psnr(a, np.clip(a + np.random.default_rng(s).normal(scale=sigma, size=a.shape), 0, 1))[1]
                for s in range(10)]
        means.append(np.mean(vals))
    assert means[0] > means[1] > means[2]


def test_fft_shift_sensitivity():
    a = textured(seed=6)
    b = np.roll(a, (3, 5), axis=(0, 1))
    assert fft_l1(a, b) > 0
    assert fft_l1(a, b, magnitude=True) == pytest.approx(0, abs=1e-9)


def test_parseval_normalization():
    a, b = textured(seed=7), textured(seed=8)
    n = a.shape[0] * a.shape[1]
    assert fft_sq_l2(a, b) == pytest.approx(n * np.sum((a - b) ** 2), rel=1e-10)


def test_light_loss_identity_and_closed_form():
    gt = EnvironmentMap.constant(2.5, 128, 64)
    assert light_loss(gt, gt) == 0
    zero = EnvironmentMap(np.zeros((64, 128, 3)))
    assert light_loss(zero, gt) == pytest.approx(4 * math.pi * 3 * math.log1p(2.5) ** 2, rel=1e-4)


def test_light_loss_not_scale_equivariant():
    rng = np.random.default_rng(9)
    est = EnvironmentMap(rng.gamma(1, 1, size=(16, 32, 3)))
    gt = EnvironmentMap(rng.gamma(1, 1, size=(16, 32, 3)))
    assert light_loss(est.scaled(2), gt.scaled(2)) != pytest.approx(light_loss(est, gt), rel=1e-3)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(-31, 31))
def test_light_loss_nonnegative_and_yaw_invariant(seed, k):
    rng = np.random.default_rng(seed)
    est = EnvironmentMap(rng.gamma(1, 1, size=(64, 128, 3)))
    gt = EnvironmentMap(rng.gamma(1, 1, size=(64, 128, 3)))
    base = light_loss(est, gt)
    assert base >= 0
    deg = k * 360.0 / 32
    assert light_loss(rotate_yaw(est, deg), rotate_yaw(gt, deg)) == pytest.approx(base, rel=1e-12)


def test_asymmetric_variant():
    gt = EnvironmentMap.constant(1.0, 32, 16)
    assert light_loss(gt, gt, asymmetric=True) > 0


def test_evaluate_report():
    a = textured(seed=10)
    rep = evaluate(a, a, metrics=("mse", "psnr", "ssim", "fft"))
    assert rep.to_dict() == {"mse_scaled": 0.0, "psnr": 99.0, "ssim": 1.0, "fft_l1": 0.0,
                             "pixel_count": a.shape[0] * a.shape[1]}
