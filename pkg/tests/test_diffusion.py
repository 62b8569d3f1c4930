import numpy as np
import pytest

from kinoguide.diffusion import (
    GuidancePair,
    NoiseSchedule,
    cfg_compose,
    ddim_step,
    forward_noise,
    guidance_field,
)
from kinoguide.tensor import Tensor, tsum, mul

from helpers import gradcheck


@pytest.fixture(scope="module")
def sched():
    return NoiseSchedule(T=50)


def test_schedule_monotone(sched):
    ab = sched.alpha_bars
    assert ab[0] == 1.0
    assert np.all(np.diff(ab) < 0)
    assert 0.0 < ab[-1] < ab[1] <= 1.0


def test_schedule_bad_t(sched):
    with pytest.raises(ValueError):
        sched.alpha_bar(51)
    with pytest.raises(ValueError):
        sched.alpha_bar(-1)


def test_forward_noise_t0_is_identity(sched):
    z0 = np.random.default_rng(0).standard_normal((2, 1, 4, 4))
    eps = np.random.default_rng(1).standard_normal((2, 1, 4, 4))
    np.testing.assert_array_equal(forward_noise(z0, 0, eps, sched), z0)


def test_forward_noise_zero_signal(sched):
    eps = np.random.default_rng(2).standard_normal((3, 3))
    zt = forward_noise(np.zeros((3, 3)), 10, eps, sched)
    np.testing.assert_allclose(zt, np.sqrt(1 - sched.alpha_bar(10)) * eps)


def test_forward_noise_variance_monte_carlo(sched):
    # Var(z_t) over noise draws matches 1 - alpha_bar for z0 = 0.
    rng = np.random.default_rng(3)
    t = 25
    draws = rng.standard_normal((10_000, 4))
    zt = forward_noise(np.zeros((10_000, 4)), t, draws, sched)
    var = zt.var()
    expected = 1 - sched.alpha_bar(t)
    assert abs(var - expected) / expected < 0.05


def test_ddim_inverts_known_noise(sched):
    rng = np.random.default_rng(4)
    z0 = rng.standard_normal((2, 1, 4, 4))
    eps = rng.standard_normal((2, 1, 4, 4))
    t = 37
    zt = forward_noise(z0, t, eps, sched)
    # One step with the oracle noise lands exactly on forward_noise at t-1.
    zprev = ddim_step(zt, eps, t, sched)
    np.testing.assert_allclose(zprev, forward_noise(z0, t - 1, eps, sched), atol=1e-12)


def test_ddim_full_rollout_recovers_z0(sched):
    rng = np.random.default_rng(5)
    z0 = rng.standard_normal((2, 1, 8, 8))
    eps = rng.standard_normal((2, 1, 8, 8))
    z = forward_noise(z0, sched.T, eps, sched)
    for t in range(sched.T, 0, -1):
        z = ddim_step(z, eps, t, sched)
    assert np.abs(z - z0).max() <= 1e-4


def test_ddim_rejects_t0(sched):
    with pytest.raises(ValueError):
        ddim_step(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), 0, sched)


def test_ddim_gradcheck_wrt_eps(sched):
    rng = np.random.default_rng(6)
    zt = rng.standard_normal((1, 4, 4))
    eps = rng.standard_normal((1, 4, 4))
    w = rng.standard_normal((1, 4, 4))

    def loss_fn(ts):
        out = ddim_step(Tensor(zt), ts[0], 30, sched)
        return tsum(mul(out, Tensor(w)))

    gradcheck(loss_fn, [eps])


def test_ddim_linear_superposition(sched):
    rng = np.random.default_rng(7)
    t = 20
    z1, z2, e1, e2 = rng.standard_normal((4, 2, 3, 3))
    combined = ddim_step(2.0 * z1 - z2, 3.0 * e1 + 0.5 * e2, t, sched)
    parts = (
        2.0 * ddim_step(z1, np.zeros_like(e1), t, sched)
        - ddim_step(z2, np.zeros_like(e1), t, sched)
        + 3.0 * ddim_step(np.zeros_like(z1), e1, t, sched)
        + 0.5 * ddim_step(np.zeros_like(z1), e2, t, sched)
    )
    np.testing.assert_allclose(combined, parts, atol=1e-10)


def test_cfg_limits():
    rng = np.random.default_rng(8)
    c, u = rng.standard_normal((2, 3, 3))
    pair = GuidancePair.from_predictions(c, u)
    np.testing.assert_array_equal(cfg_compose(pair.eps_uncond, pair.field, 0.0), u)
    np.testing.assert_array_equal(
        cfg_compose(pair.eps_uncond, pair.field, 1.0), pair.eps_cond
    )


def test_cfg_arithmetic():
    u = np.zeros((2, 2))
    d = np.ones((2, 2))
    np.testing.assert_array_equal(cfg_compose(u, d, 2.0), np.full((2, 2), 2.0))


def test_guidance_field_zero_for_equal():
    x = np.random.default_rng(9).standard_normal((4, 4))
    np.testing.assert_array_equal(guidance_field(x, x), np.zeros((4, 4)))


def test_guidance_pair_reconstruction_bit_exact():
    rng = np.random.default_rng(10)
    c, u = rng.standard_normal((2, 16, 16))
    pair = GuidancePair.from_predictions(c, u)
    np.testing.assert_array_equal(pair.eps_uncond + pair.field, pair.eps_cond)
    # Canonicalized conditional stays within one ulp of the raw prediction.
    assert np.abs(pair.eps_cond - c).max() <= np.finfo(np.float64).eps * 8
