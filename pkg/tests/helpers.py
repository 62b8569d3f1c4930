"""Shared test utilities: the central finite-difference gradient oracle."""

import numpy as np

from kinoguide.tensor import Tensor


def numeric_grad(fn, values, wrt, step=1e-5):
    """Central finite differences of scalar fn at values, wrt one index.

    ``fn`` maps a list of float64 numpy arrays to a float. Returns an array
    shaped like ``values[wrt]``.
    """
    base = [v.copy() for v in values]
    g = np.zeros_like(base[wrt])
    flat = base[wrt].reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = fn(base)
        flat[i] = orig - step
        fm = fn(base)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return g


def max_rel_err(analytic, numeric):
    """Elementwise |a-n| / max(1, |a|, |n|), reduced with max."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float((np.abs(a - n) / denom).max())


def gradcheck(build_loss, arrays, tol=1e-4, step=1e-5):
    """Check analytic grads of ``build_loss`` against finite differences.

    ``build_loss`` maps a list of Tensors to a scalar Tensor. All input
    arrays must be float64. Returns the worst relative error seen.
    """
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_loss(tensors)
    loss.backward()

    def as_float(vals):
        consts = [Tensor(v.copy(), requires_grad=False) for v in vals]
        return build_loss(consts).item()

    worst = 0.0
    for idx, t in enumerate(tensors):
        num = numeric_grad(as_float, [a.copy() for a in arrays], idx, step=step)
        ana = t.grad if t.grad is not None else np.zeros_like(arrays[idx])
        err = max_rel_err(ana, num)
        worst = max(worst, err)
        assert err <= tol, f"gradcheck failed on input {idx}: rel err {err:.3e}"
    return worst
