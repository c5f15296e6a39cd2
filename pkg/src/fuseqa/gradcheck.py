"""Central-difference verification of tape gradients."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tape, Tensor


def finite_diff_check(f, params: dict[str, np.ndarray], h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f(leaves)`` must run one forward pass where ``leaves`` maps parameter
    names to Tensors sharing a tape, and return the scalar loss Tensor.
    Relative error per entry is |a - b| / max(|a|, |b|, 1e-8).
    """
    if h <= 0:
        raise ValueError("step h must be positive")

    def run(values: dict[str, np.ndarray], want_grads: bool):
        tape = Tape()
        leaves = {name: Tensor(v, tape=tape) for name, v in values.items()}
        loss = f(leaves)
        if loss.data.size != 1:
            raise ValueError("objective must return a scalar")
        value = float(loss.data.reshape(-1)[0])
        if not math.isfinite(value):
            raise ValueError("objective returned a non-finite value")
        if not want_grads:
            return value, None
        tape.backward(loss)
        grads = {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in leaves.items()
        }
        return value, grads

    _, analytic = run(params, want_grads=True)

    max_err = 0.0
    work = {name: v.astype(np.float64).copy() for name, v in params.items()}
    for name, arr in work.items():
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp, _ = run(work, want_grads=False)
            flat[i] = orig - h
            fm, _ = run(work, want_grads=False)
            flat[i] = orig
            numeric = (fp - fm) / (2 * h)
            a = float(analytic[name].reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            max_err = max(max_err, err)
    return max_err
