"""Finite-difference verification of analytic gradients.

Run checks on float64 tensors: the engine executes identically in double
precision, and central differences at eps=1e-3 would otherwise be noise
against float32 rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_input: list[float]
    passed: bool
    tol: float

    def __str__(self):
        marks = ", ".join(f"{e:.2e}" for e in self.per_input)
        return (f"grad_check: max_rel_error={self.max_rel_error:.3e} "
                f"tol={self.tol:.1e} [{marks}] -> {'pass' if self.passed else 'FAIL'}")


def _rel_error(a: np.ndarray, n: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float((np.abs(a - n) / denom).max()) if a.size else 0.0


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor],
               eps: float = 1e-3, tol: float = 1e-3) -> GradCheckReport:
    """Compare analytic gradients of a scalar-valued `fn` against central differences.

    Checks every input with requires_grad set. Inputs should be float64.
    """
    for t in inputs:
        t.grad = None
    loss = fn(*inputs)
    loss.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for t in inputs]

    errors = []
    for idx, t in enumerate(inputs):
        if not t.requires_grad:
            errors.append(0.0)
            continue
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = fn(*inputs).item()
            flat[i] = orig - eps
            down = fn(*inputs).item()
            flat[i] = orig
            num_flat[i] = (up - down) / (2 * eps)
        errors.append(_rel_error(analytic[idx], numeric))

    worst = max(errors) if errors else 0.0
    return GradCheckReport(worst, errors, worst <= tol, tol)
