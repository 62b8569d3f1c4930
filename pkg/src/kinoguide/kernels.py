"""Hot numeric kernels: same-padded 2D cross-correlation forward/backward.

Two interchangeable implementations are provided: numba ``@njit`` loops and a
pure-numpy im2col path. Selection: ``KINOGUIDE_BACKEND=numba|numpy`` in the
environment. The default is numpy: on single-core hosts the BLAS-backed
im2col path measures faster end to end (see ``benchmarks/bench_kernels.py``
to re-measure on your machine). Both paths are deterministic.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_backward_input",
    "conv2d_backward_kernel",
]


def _np_windows(xpad: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Strided (N,Cin,H,W,kh,kw) view over a padded (N,Cin,Hp,Wp) array."""
    n, c, hp, wp = xpad.shape
    h, w = hp - kh + 1, wp - kw + 1
    sn, sc, sh, sw = xpad.strides
    return np.lib.stride_tricks.as_strided(
        xpad, shape=(n, c, h, w, kh, kw), strides=(sn, sc, sh, sw, sh, sw)
    )


def _np_conv2d_forward(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    kh, kw = k.shape[2], k.shape[3]
    ph, pw = kh // 2, kw // 2
    xpad = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = _np_windows(xpad, kh, kw)
    out = np.tensordot(win, k, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _np_conv2d_backward_input(grad: np.ndarray, k: np.ndarray) -> np.ndarray:
    # Correlating the output gradient with the transposed, spatially
    # flipped kernel yields dL/dx under same padding.
    kt = np.ascontiguousarray(k.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    return _np_conv2d_forward(grad, kt)


def _np_conv2d_backward_kernel(
    grad: np.ndarray, x: np.ndarray, kh: int, kw: int
) -> np.ndarray:
    ph, pw = kh // 2, kw // 2
    xpad = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = _np_windows(xpad, kh, kw)
    return np.einsum("nohw,nchwij->ocij", grad, win, optimize=True)


_IMPLS = {
    "numpy": (
        _np_conv2d_forward,
        _np_conv2d_backward_input,
        _np_conv2d_backward_kernel,
    )
}

try:
    import numba

    @numba.njit(cache=True, fastmath=True)
    def _nb_pad(x, ph, pw):
        n, c, h, w = x.shape
        xpad = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
        xpad[:, :, ph : ph + h, pw : pw + w] = x
        return xpad

    @numba.njit(cache=True, fastmath=True)
    def _nb_conv2d_forward(x, k):
        n, cin, h, w = x.shape
        cout, _, kh, kw = k.shape
        ph, pw = kh // 2, kw // 2
        xpad = _nb_pad(x, ph, pw)
        out = np.zeros((n, cout, h, w), dtype=x.dtype)
        for b in range(n):
            for co in range(cout):
                for ci in range(cin):
                    for i in range(kh):
                        for j in range(kw):
                            kv = k[co, ci, i, j]
                            for y in range(h):
                                dst = out[b, co, y]
                                src = xpad[b, ci, y + i]
                                for xx in range(w):
                                    dst[xx] += kv * src[xx + j]
        return out

    @numba.njit(cache=True, fastmath=True)
    def _nb_conv2d_backward_kernel(grad, x, kh, kw):
        n, cout, h, w = grad.shape
        cin = x.shape[1]
        ph, pw = kh // 2, kw // 2
        xpad = _nb_pad(x, ph, pw)
        dk = np.zeros((cout, cin, kh, kw), dtype=x.dtype)
        for b in range(n):
            for co in range(cout):
                for ci in range(cin):
                    for i in range(kh):
                        for j in range(kw):
                            acc = 0.0
                            for y in range(h):
                                grow = grad[b, co, y]
                                src = xpad[b, ci, y + i]
                                for xx in range(w):
                                    acc += grow[xx] * src[xx + j]
                            dk[co, ci, i, j] += acc
        return dk

    def _nb_conv2d_backward_input(grad: np.ndarray, k: np.ndarray) -> np.ndarray:
        kt = np.ascontiguousarray(k.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
        return _nb_conv2d_forward(grad, kt)

    _IMPLS["numba"] = (
        _nb_conv2d_forward,
        _nb_conv2d_backward_input,
        _nb_conv2d_backward_kernel,
    )
except ImportError:  # pragma: no cover - numba is a declared dependency
    pass

_DEFAULT = "numpy"

BACKEND = os.environ.get("KINOGUIDE_BACKEND", _DEFAULT).lower()
if BACKEND not in _IMPLS:
    raise RuntimeError(
        f"KINOGUIDE_BACKEND={BACKEND!r} not available; choose from {sorted(_IMPLS)}"
    )

conv2d_forward, conv2d_backward_input, conv2d_backward_kernel = _IMPLS[BACKEND]


def get_impls(backend: str):
    """Explicit access to one backend's kernel triple (used by benchmarks)."""
    return _IMPLS[backend]


def available_backends() -> list[str]:
    return sorted(_IMPLS)
