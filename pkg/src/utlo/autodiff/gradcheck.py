"""Central finite-difference oracle for checking backward rules.

Both the analytic and the numeric gradient are evaluated in float64 so the
comparison measures the backward rule, not float32 round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class GradcheckResult:
    max_rel_error: float
    worst_input: int
    worst_index: tuple
    checked: int

    def ok(self, tol: float = 1e-3) -> bool:
        return self.max_rel_error <= tol


def relative_error(analytic, numeric, floor: float = 1e-3) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradient(fn, arrays, which: int, h: float = 1e-3, indices=None) -> np.ndarray:
    """Central differences of scalar ``fn(*tensors)`` w.r.t. ``arrays[which]``."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[which]
    grad = np.zeros_like(target)
    it = indices if indices is not None else np.ndindex(target.shape)
    for idx in it:
        orig = target[idx]
        target[idx] = orig + h
        fp = float(fn(*[Tensor(a) for a in base]).data)
        target[idx] = orig - h
        fm = float(fn(*[Tensor(a) for a in base]).data)
        target[idx] = orig
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def analytic_gradients(fn, arrays) -> list[np.ndarray]:
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    loss = fn(*tensors)
    loss.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def gradcheck(fn, arrays, h: float = 1e-3, floor: float = 1e-3, skip=None) -> GradcheckResult:
    """Compare analytic and numeric gradients of ``fn`` for every input.

    ``skip(which, array) -> bool mask`` excludes elements, e.g. inputs sitting
    on a kink of a piecewise-linear activation.
    """
    analytic = analytic_gradients(fn, arrays)
    worst = (0.0, -1, ())
    checked = 0
    for which, arr in enumerate(arrays):
        numeric = numeric_gradient(fn, arrays, which, h)
        err = relative_error(analytic[which], numeric, floor)
        if skip is not None:
            err = np.where(skip(which, np.asarray(arr)), 0.0, err)
        checked += err.size
        if err.size and err.max() > worst[0]:
            worst = (float(err.max()), which, np.unravel_index(int(err.argmax()), err.shape))
    return GradcheckResult(worst[0], worst[1], tuple(int(i) for i in worst[2]), checked)
