"""Reverse-mode automatic differentiation over dense numpy arrays.

A ``Tensor`` wraps a numpy array plus an optional gradient buffer and a
recorded backward closure; ``backward`` on a scalar loss walks the tape in
reverse topological order, visiting each node once. ``detach`` is a hard
stop-gradient barrier. Every operation validates that its result is finite
and raises ``NumericsError`` otherwise, so NaN/Inf never propagate silently.

Convolution inner loops live in :mod:`kinoguide.kernels` (numba or numpy,
selected by ``KINOGUIDE_BACKEND``). 2D Fourier transforms are forward-only
helpers, not differentiated.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels


class NumericsError(ArithmeticError):
    """Raised when an operation produces NaN or Inf."""


def _finite_or_raise(data: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(data).all():
        raise NumericsError(f"non-finite values produced by {op}")
    return data


class Tensor:
    """A dense array node in the autodiff tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = np.ascontiguousarray(arr)
        _finite_or_raise(self.data, "tensor construction")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Copy with requires_grad=False; gradients never flow through it."""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate .grad on every reachable requires_grad node.

        The tape is acyclic; a reverse topological walk applies each node's
        recorded closure exactly once.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # Operator sugar; the module-level functions carry the semantics.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, k):
        if not isinstance(k, int):
            raise TypeError("only integer leading-axis indexing is supported")
        return take_frame(self, k)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        if g.shape != t.data.shape:
            g = np.broadcast_to(g, t.data.shape)
        t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad = t.grad + g.astype(t.data.dtype, copy=False)


def _node(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], None] | None,
    op: str,
) -> Tensor:
    _finite_or_raise(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data if data.flags["C_CONTIGUOUS"] else np.ascontiguousarray(data)
    out.grad = None
    needs = any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    else:
        out._parents = ()
        out._backward_fn = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a: Tensor, b) -> Tensor:
    a, b = a, _wrap(b, a)
    data = a.data + b.data

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), backward_fn, "add")


def sub(a: Tensor, b) -> Tensor:
    a, b = a, _wrap(b, a)
    data = a.data - b.data

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(data, (a, b), backward_fn, "sub")


def mul(a: Tensor, b) -> Tensor:
    a, b = a, _wrap(b, a)
    data = a.data * b.data

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), backward_fn, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul inner dimensions differ: {a.data.shape} vs {b.data.shape}"
        )
    data = a.data @ b.data

    def backward_fn(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(data, (a, b), backward_fn, "matmul")


def conv2d(x: Tensor, kernel: Tensor) -> Tensor:
    """Same-padded 2D cross-correlation; input [C,H,W] or [N,C,H,W]."""
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or kernel.data.ndim != 4:
        raise ValueError("conv2d expects [N,C,H,W] input and [Co,Ci,kh,kw] kernel")
    co, ci, kh, kw = kernel.data.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d kernel size must be odd, got {kh}x{kw}")
    if xd.shape[1] != ci:
        raise ValueError(f"conv2d channel mismatch: input {xd.shape[1]}, kernel {ci}")
    data = kernels.conv2d_forward(xd, kernel.data)

    def backward_fn(g):
        g4 = g[None] if squeeze else g
        g4 = np.ascontiguousarray(g4)
        if x.requires_grad:
            gx = kernels.conv2d_backward_input(g4, kernel.data)
            _accumulate(x, gx[0] if squeeze else gx)
        if kernel.requires_grad:
            _accumulate(kernel, kernels.conv2d_backward_kernel(g4, xd, kh, kw))

    return _node(data[0] if squeeze else data, (x, kernel), backward_fn, "conv2d")


def full_image_box(hw: tuple[int, int]) -> tuple[float, float, float, float]:
    """The rectangle covered by an image whose pixel centers sit at integers."""
    h, w = hw
    return (-0.5, -0.5, w - 0.5, h - 0.5)


def _bilinear_grid(lo: float, hi: float, n_out: int, size: int):
    coords = lo + (np.arange(n_out, dtype=np.float64) + 0.5) * (hi - lo) / n_out
    i0 = np.floor(coords).astype(np.int64)
    frac = coords - i0
    i0c = np.clip(i0, 0, size - 1)
    i1c = np.clip(i0 + 1, 0, size - 1)
    return i0c, i1c, frac


def crop_and_resize(x: Tensor, box, out_hw: tuple[int, int]) -> Tensor:
    """Bilinearly resample the boxed region of [C,H,W] to out_hw.

    ``box`` is (u_min, v_min, u_max, v_max) in the integer-center pixel
    frame; sampling uses clamp-to-edge. Differentiable with respect to x
    (the box is a constant).
    """
    if x.data.ndim != 3:
        raise ValueError("crop_and_resize expects a [C,H,W] tensor")
    c, h, w = x.data.shape
    oh, ow = out_hw
    if oh < 1 or ow < 1:
        raise ValueError("crop_and_resize output size must be at least 1x1")
    u0, v0, u1, v1 = (float(b) for b in box)
    if not (u1 > u0 and v1 > v0):
        raise ValueError(f"degenerate crop box {box}")
    iu0, iv0, iu1, iv1 = full_image_box((h, w))
    if u1 <= iu0 or u0 >= iu1 or v1 <= iv0 or v0 >= iv1:
        raise ValueError(f"crop box {box} does not intersect the image")
    r0, r1, rf = _bilinear_grid(v0, v1, oh, h)
    c0, c1, cf = _bilinear_grid(u0, u1, ow, w)
    rf = rf[:, None]
    cf = cf[None, :]
    w00 = (1 - rf) * (1 - cf)
    w01 = (1 - rf) * cf
    w10 = rf * (1 - cf)
    w11 = rf * cf
    xd = x.data
    data = (
        w00 * xd[:, r0[:, None], c0[None, :]]
        + w01 * xd[:, r0[:, None], c1[None, :]]
        + w10 * xd[:, r1[:, None], c0[None, :]]
        + w11 * xd[:, r1[:, None], c1[None, :]]
    ).astype(xd.dtype)

    def backward_fn(g):
        gx = np.zeros_like(xd)
        rows = {0: r0, 1: r1}
        cols = {0: c0, 1: c1}
        weights = {(0, 0): w00, (0, 1): w01, (1, 0): w10, (1, 1): w11}
        for (ri, ci), wgt in weights.items():
            flat = (rows[ri][:, None] * w + cols[ci][None, :]).ravel()
            contrib = (g * wgt).reshape(c, -1).astype(xd.dtype)
            for ch in range(c):
                np.add.at(gx[ch].ravel(), flat, contrib[ch])
        _accumulate(x, gx)

    return _node(data, (x,), backward_fn, "crop_and_resize")


def mean_pool(x: Tensor) -> Tensor:
    """Spatial mean of a [C,h,w] tensor, per channel."""
    if x.data.ndim != 3:
        raise ValueError("mean_pool expects a [C,h,w] tensor")
    c, h, w = x.data.shape
    data = x.data.mean(axis=(1, 2))

    def backward_fn(g):
        _accumulate(
            x, np.broadcast_to(g[:, None, None] / (h * w), x.data.shape).astype(x.dtype)
        )

    return _node(data, (x,), backward_fn, "mean_pool")


def tsum(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def backward_fn(g):
        _accumulate(x, np.broadcast_to(g, x.data.shape).astype(x.dtype))

    return _node(data.reshape(()), (x,), backward_fn, "sum")


def reshape(x: Tensor, shape) -> Tensor:
    data = x.data.reshape(shape)

    def backward_fn(g):
        _accumulate(x, g.reshape(x.data.shape))

    return _node(data, (x,), backward_fn, "reshape")


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(idx)])

    return _node(data, tuple(parts), backward_fn, "concat")


def take_frame(x: Tensor, k: int) -> Tensor:
    """Select index k on the leading axis."""
    if not (0 <= k < x.data.shape[0]):
        raise IndexError(f"frame {k} out of range for leading axis {x.data.shape[0]}")
    data = x.data[k]

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        gx[k] = g
        _accumulate(x, gx)

    return _node(data, (x,), backward_fn, "take_frame")


def silu(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))
    data = x.data * s

    def backward_fn(g):
        _accumulate(x, g * s * (1.0 + x.data * (1.0 - s)))

    return _node(data, (x,), backward_fn, "silu")


def frobenius_sq(x: Tensor) -> Tensor:
    """Sum of squared entries (squared Frobenius norm)."""
    return tsum(mul(x, x))


class Adam:
    """Adam with bias correction over a list of Tensors.

    Fresh state starts at zero moments; a zero gradient therefore leaves
    parameters unchanged. Raises NumericsError on NaN gradients.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            if not np.isfinite(g).all():
                raise NumericsError("NaN/Inf gradient in Adam step")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (self.lr * (m / bc1)) / (np.sqrt(v / bc2) + self.eps)
            p.data -= update.astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def fft2(x: np.ndarray) -> np.ndarray:
    """2D DFT over the two trailing axes (forward-only, float64 internally)."""
    return np.fft.fft2(np.asarray(x, dtype=np.float64), axes=(-2, -1))


def ifft2(spectrum: np.ndarray, residue_tol: float = 1e-6) -> np.ndarray:
    """Inverse 2D DFT; asserts the imaginary residue is negligible and
    returns the real part."""
    out = np.fft.ifft2(spectrum, axes=(-2, -1))
    scale = max(1.0, float(np.abs(out.real).max(initial=0.0)))
    residue = float(np.abs(out.imag).max(initial=0.0))
    if residue > residue_tol * scale:
        raise NumericsError(
            f"ifft2 imaginary residue {residue:.3e} exceeds {residue_tol:.1e}"
        )
    return np.ascontiguousarray(out.real)
