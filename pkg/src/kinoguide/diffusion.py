"""Noise schedule, forward corruption, deterministic DDIM stepping, and
classifier-free-guidance composition.

The DDIM step is written over autodiff Tensors because the guidance-field
rectification stage differentiates through it; plain arrays are accepted
and wrapped. Timesteps are 1-based: ``alpha_bar(0) == 1`` so t=0 is the
clean-data boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, add, mul, sub


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta discrete schedule with cumulative products alpha_bar."""

    T: int = 50
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    betas: np.ndarray = field(init=False, repr=False)
    alpha_bars: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("schedule needs at least one step")
        betas = np.linspace(self.beta_start, self.beta_end, self.T, dtype=np.float64)
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ValueError("betas must lie in (0, 1)")
        alpha_bars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    def alpha_bar(self, t: int) -> float:
        if not (0 <= t <= self.T):
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return float(self.alpha_bars[t])


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def forward_noise(z0, t: int, eps, schedule: NoiseSchedule) -> np.ndarray:
    """z_t = sqrt(ab_t) * z0 + sqrt(1 - ab_t) * eps."""
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    if z0.shape != eps.shape:
        raise ValueError("noise must match the sample shape")
    ab = schedule.alpha_bar(t)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def ddim_step(z_t, eps_hat, t: int, schedule: NoiseSchedule):
    """Deterministic (eta=0) DDIM update from t to t-1.

    Recovers the clean estimate from the noise prediction, then re-noises
    at level t-1. Differentiable with respect to both inputs; returns a
    Tensor when either input is one, else a numpy array.
    """
    if t < 1:
        raise ValueError("ddim_step needs t >= 1")
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    tensor_in = isinstance(z_t, Tensor) or isinstance(eps_hat, Tensor)
    zt = _as_tensor(z_t)
    eh = _as_tensor(eps_hat)
    inv_sqrt_ab = 1.0 / np.sqrt(ab_t)
    z0_hat = mul(sub(zt, mul(eh, np.sqrt(1.0 - ab_t))), inv_sqrt_ab)
    out = add(mul(z0_hat, np.sqrt(ab_prev)), mul(eh, np.sqrt(1.0 - ab_prev)))
    return out if tensor_in else out.data


def guidance_field(eps_cond, eps_uncond) -> np.ndarray:
    """d = eps_cond - eps_uncond, the directional control force."""
    eps_cond = np.asarray(eps_cond)
    eps_uncond = np.asarray(eps_uncond)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError("prediction pair shapes differ")
    return eps_cond - eps_uncond


@dataclass(frozen=True)
class GuidancePair:
    """Conditional/unconditional prediction pair plus their difference.

    The stored conditional prediction is canonicalized to
    ``eps_uncond + field`` so that recomposition from (eps_uncond, field)
    reproduces it bit-exactly (raw float subtraction is lossy by up to
    one ulp).
    """

    eps_cond: np.ndarray
    eps_uncond: np.ndarray
    field: np.ndarray

    @classmethod
    def from_predictions(cls, eps_cond, eps_uncond) -> "GuidancePair":
        d = guidance_field(eps_cond, eps_uncond)
        return cls(np.asarray(eps_uncond) + d, np.asarray(eps_uncond), d)


def cfg_compose(eps_uncond, d, w: float) -> np.ndarray:
    """eps_final = eps_uncond + w * d."""
    eps_uncond = np.asarray(eps_uncond)
    d = np.asarray(d)
    if eps_uncond.shape != d.shape:
        raise ValueError("guidance field shape differs from prediction")
    return eps_uncond + w * d
