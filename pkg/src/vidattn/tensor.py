"""Dense float64 matrix helpers and a finite-difference gradient checker.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The helpers
here add the shape and finiteness checks the rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class NonFiniteError(ValueError):
    """A NaN or Inf appeared where only finite values are allowed."""


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Return ``x`` as a finite 2-D float64 array with at least one row and column."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name}: expected a non-empty 2-D matrix, got shape {a.shape}")
    check_finite(a, name)
    return a


def check_finite(a: np.ndarray, name: str = "array") -> None:
    if not np.all(np.isfinite(a)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(a))[0])
        raise NonFiniteError(f"{name}: non-finite value at index {bad}")


def matmul(a, b) -> np.ndarray:
    """Matrix product with a fixed left-to-right accumulation over the inner index.

    Every output element is ``((a[i,0]*b[0,j] + a[i,1]*b[1,j]) + ...)``, so the
    result does not depend on the BLAS build or thread count.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ ({a.shape} vs {b.shape})")
    out = a[:, 0:1] * b[0:1, :]
    for k in range(1, a.shape[1]):
        out = out + a[:, k : k + 1] * b[k : k + 1, :]
    check_finite(out, "matmul result")
    return out


def softmax(v, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax along ``axis``."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ShapeError("softmax of an empty vector")
    check_finite(v, "softmax input")
    e = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(v, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ShapeError("log_softmax of an empty vector")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


# --------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_parameter_index: tuple  # (group name, flat index)
    tolerance: float
    passed: bool
    group_errors: dict = field(default_factory=dict)
    message: str = ""

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} max_rel_err={self.max_relative_error:.3e} "
            f"at {self.worst_parameter_index} (tol={self.tolerance:g}) {self.message}"
        ).rstrip()


def _named_arrays(obj: Any) -> dict[str, np.ndarray]:
    if isinstance(obj, np.ndarray):
        return {"x": obj}
    if isinstance(obj, dict):
        return obj
    if hasattr(obj, "arrays"):
        return obj.arrays()
    raise TypeError(f"cannot enumerate parameters of {type(obj).__name__}")


def _copy(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.astype(np.float64, copy=True)
    if isinstance(obj, dict):
        return {k: np.array(v, dtype=np.float64) for k, v in obj.items()}
    return obj.copy()


def grad_check(
    loss_fn: Callable[[Any], float],
    grad_fn: Callable[[Any], Any],
    params: Any,
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare ``grad_fn(params)`` with central differences of ``loss_fn``.

    ``params`` may be an ndarray, a dict of ndarrays, or any object exposing
    ``arrays()`` (name -> array view) and ``copy()``; the gradient must have the
    same structure. Relative error per coordinate is
    ``|a - n| / max(1e-12, |a| + |n|)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    work = _copy(params)
    arrays = _named_arrays(work)
    analytic = _named_arrays(grad_fn(_copy(params)))

    worst = -1.0
    worst_idx: tuple = ()
    group_errors: dict[str, float] = {}
    for name, arr in arrays.items():
        g = np.asarray(analytic[name], dtype=np.float64)
        if g.shape != arr.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {arr.shape}")
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        group_worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(loss_fn(work))
            flat[i] = orig - eps
            f_minus = float(loss_fn(work))
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                group_errors[name] = float("inf")
                return GradCheckReport(
                    float("inf"), (name, i), tol, False, group_errors,
                    message="non-finite loss at perturbed point",
                )
            num = (f_plus - f_minus) / (2.0 * eps)
            a = gflat[i]
            rel = abs(a - num) / max(1e-12, abs(a) + abs(num))
            group_worst = max(group_worst, rel)
            if rel > worst:
                worst, worst_idx = rel, (name, i)
        group_errors[name] = group_worst
    worst = max(worst, 0.0)
    return GradCheckReport(worst, worst_idx, tol, worst <= tol, group_errors)
