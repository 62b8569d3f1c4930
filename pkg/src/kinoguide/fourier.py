"""Spectral fusion: keep the low-frequency band of an optimized signal and
the high-frequency band of the original, via an ideal low-pass mask.

The mask is radially symmetric in centered frequency coordinates, so fusing
two real signals yields a real result (enforced with a small residue
assertion). Transforms run in float64 regardless of input dtype.
"""

from __future__ import annotations

import numpy as np

from .tensor import fft2, ifft2


def low_pass_mask(hw, gamma: float) -> np.ndarray:
    """Binary mask over fft2 bins: keep when the centered normalized radius
    sqrt((fi/(H/2))^2 + (fj/(W/2))^2) is <= gamma.

    gamma=0 keeps only the DC bin; gamma=1 keeps every bin (corner bins have
    radius up to sqrt(2), so the keep-all contract overrides the radius rule
    there).
    """
    if not (0.0 <= gamma <= 1.0):
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    h, w = hw
    if gamma >= 1.0:
        return np.ones((h, w))
    fi = np.fft.fftfreq(h) * h  # centered integer frequencies
    fj = np.fft.fftfreq(w) * w
    ri = fi / max(h / 2.0, 1.0)
    rj = fj / max(w / 2.0, 1.0)
    radius = np.sqrt(ri[:, None] ** 2 + rj[None, :] ** 2)
    return (radius <= gamma + 1e-12).astype(np.float64)


def fuse(x_star: np.ndarray, x: np.ndarray, gamma: float) -> np.ndarray:
    """ifft2( fft2(x*) . H + fft2(x) . (1 - H) ), per trailing 2D slice."""
    x_star = np.asarray(x_star)
    x = np.asarray(x)
    if x_star.shape != x.shape:
        raise ValueError(f"fuse shape mismatch: {x_star.shape} vs {x.shape}")
    mask = low_pass_mask(x.shape[-2:], gamma)
    spectrum = fft2(x_star) * mask + fft2(x) * (1.0 - mask)
    out = ifft2(spectrum)
    return out.astype(x.dtype, copy=False)
