"""Random tiny network instances and a full-network gradient check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import PARAM_GROUPS, Labels, ModelDims, ModelParams, backward, init_params, loss_value
from .tensor import GradCheckReport, grad_check


@dataclass
class TinyInstance:
    features: np.ndarray
    params: ModelParams
    labels: Labels
    lambda_act: float
    lambda_div: float


def tiny_instance(seed: int, param_scale: float = 0.5) -> TinyInstance:
    """T in [3, 6], D in [2, 4], H in [2, 6], A in [2, 4], R in [2, 3].

    Weights are N(0, param_scale^2) rather than the small training init so
    attention is far from uniform and every parameter group carries gradient.
    """
    rng = np.random.default_rng(seed)
    T = int(rng.integers(3, 7))
    D = int(rng.integers(2, 5))
    H = int(rng.integers(2, 7))
    A = int(rng.integers(2, 5))
    R = int(rng.integers(2, 4))
    params = init_params(ModelDims(D, H, A, R), seed)
    for v in params.arrays().values():
        v[...] = rng.normal(scale=param_scale, size=v.shape)
    x = rng.normal(size=(T, D))
    k = int(rng.integers(1, A + 1))
    labels = Labels(int(rng.integers(R)), frozenset(int(a) for a in rng.choice(A, k, replace=False)))
    return TinyInstance(x, params, labels, 1.0, 0.5)


def check_instance(inst: TinyInstance, eps: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    def loss_fn(p):
        return loss_value(inst.features, p, inst.labels, inst.lambda_act, inst.lambda_div)

    def grad_fn(p):
        return backward(inst.features, p, inst.labels, inst.lambda_act, inst.lambda_div)[1]

    return grad_check(loss_fn, grad_fn, inst.params, eps, tol)


def group_errors(report: GradCheckReport) -> dict[str, float]:
    """Collapse per-field errors into the named parameter groups."""
    return {g: max(report.group_errors.get(f, 0.0) for f in names) for g, names in PARAM_GROUPS.items()}
