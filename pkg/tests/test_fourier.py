import numpy as np
import pytest

from kinoguide.fourier import fuse, low_pass_mask
from kinoguide.tensor import fft2


def brute_force_kept_bins(hw, gamma):
    h, w = hw
    count = 0
    for i in range(h):
        for j in range(w):
            fi = i if i <= h // 2 else i - h
            fj = j if j <= w // 2 else j - w
            # Match fftfreq: for even n the Nyquist bin carries -n/2.
            if h % 2 == 0 and i == h // 2:
                fi = -h // 2
            if w % 2 == 0 and j == w // 2:
                fj = -w // 2
            r = np.sqrt((fi / (h / 2)) ** 2 + (fj / (w / 2)) ** 2)
            if r <= gamma + 1e-12:
                count += 1
    return count


def test_mask_gamma_one_keeps_all():
    np.testing.assert_array_equal(low_pass_mask((8, 8), 1.0), np.ones((8, 8)))


def test_mask_gamma_zero_keeps_dc_only():
    m = low_pass_mask((8, 8), 0.0)
    assert m[0, 0] == 1.0
    assert m.sum() == 1.0


def test_mask_count_matches_brute_force():
    for hw in [(8, 8), (16, 12), (9, 7)]:
        for gamma in (0.25, 0.5, 0.6, 0.9):
            m = low_pass_mask(hw, gamma)
            assert m.sum() == brute_force_kept_bins(hw, gamma), (hw, gamma)


def test_mask_conjugate_symmetric():
    for hw in [(8, 8), (10, 6), (9, 5)]:
        m = low_pass_mask(hw, 0.6)
        h, w = hw
        for i in range(h):
            for j in range(w):
                assert m[i, j] == m[(-i) % h, (-j) % w]


def test_mask_rejects_gamma_outside_range():
    with pytest.raises(ValueError):
        low_pass_mask((8, 8), 1.5)
    with pytest.raises(ValueError):
        low_pass_mask((8, 8), -0.1)


def test_fuse_partition_of_unity():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((16, 16))
    for gamma in (0.0, 0.3, 0.6, 1.0):
        np.testing.assert_allclose(fuse(x, x, gamma), x, atol=1e-5)


def test_fuse_gamma_limits():
    rng = np.random.default_rng(1)
    x_star, x = rng.standard_normal((2, 16, 16))
    np.testing.assert_allclose(fuse(x_star, x, 1.0), x_star, atol=1e-5)
    # gamma=0 swaps in only the DC component of x_star.
    expect = x + (x_star.mean() - x.mean())
    np.testing.assert_allclose(fuse(x_star, x, 0.0), expect, atol=1e-5)


def test_fuse_linear_in_x_star():
    rng = np.random.default_rng(2)
    a_star, b_star, x = rng.standard_normal((3, 16, 16))
    lhs = fuse(2.0 * a_star + 3.0 * b_star, x, 0.5)
    rhs = (
        2.0 * fuse(a_star, x, 0.5)
        + 3.0 * fuse(b_star, x, 0.5)
        - 4.0 * fuse(np.zeros_like(x), x, 0.5)
    )
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_fuse_low_band_equals_x_star_low_band():
    rng = np.random.default_rng(3)
    x_star, x = rng.standard_normal((2, 16, 16))
    gamma = 0.6
    mask = low_pass_mask((16, 16), gamma)
    fused = fuse(x_star, x, gamma)
    np.testing.assert_allclose(
        fft2(fused) * mask, fft2(x_star) * mask, atol=1e-5
    )


def test_fuse_energy_bound():
    rng = np.random.default_rng(4)
    x_star, x = rng.standard_normal((2, 16, 16))
    fused = fuse(x_star, x, 0.6)
    assert np.sum(fused**2) <= np.sum(x_star**2) + np.sum(x**2)


def test_fuse_monotone_influence():
    rng = np.random.default_rng(5)
    x_star, x = rng.standard_normal((2, 16, 16))
    gammas = np.linspace(0.0, 1.0, 11)
    kept = [low_pass_mask((16, 16), g).sum() for g in gammas]
    dist = [np.linalg.norm(fuse(x_star, x, g) - x_star) for g in gammas]
    # More kept bins never increases the distance to x_star.
    for (k1, d1), (k2, d2) in zip(zip(kept, dist), zip(kept[1:], dist[1:])):
        if k2 > k1:
            assert d2 <= d1 + 1e-9
    assert dist[-1] <= 1e-9


def test_fuse_batched_slices_match_single():
    rng = np.random.default_rng(6)
    x_star = rng.standard_normal((3, 2, 8, 8))
    x = rng.standard_normal((3, 2, 8, 8))
    fused = fuse(x_star, x, 0.5)
    for i in range(3):
        for j in range(2):
            np.testing.assert_allclose(
                fused[i, j], fuse(x_star[i, j], x[i, j], 0.5), atol=1e-12
            )


def test_fuse_float32_inputs_stay_float32():
    rng = np.random.default_rng(7)
    x_star = rng.standard_normal((8, 8)).astype(np.float32)
    x = rng.standard_normal((8, 8)).astype(np.float32)
    out = fuse(x_star, x, 0.6)
    assert out.dtype == np.float32
    np.testing.assert_allclose(fuse(x, x, 0.6), x, atol=1e-5)


def test_fuse_shape_mismatch():
    with pytest.raises(ValueError):
        fuse(np.zeros((4, 4)), np.zeros((5, 5)), 0.5)
