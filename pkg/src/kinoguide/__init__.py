"""kinoguide: zero-shot trajectory-guided video diffusion sampling at desk
scale, built on a small numpy autodiff core with numba-accelerated kernels."""

__version__ = "0.1.0"
