"""GRU encoder with temporal action attention and a recipe attention head.

Data flow for one video with features ``x`` (T x D)::

    hidden = GRU(x)                                   T x H   (dropout on outputs)
    E      = hidden @ W_a.T + b_a                     T x A   per-frame action scores
    P      = softmax over time of each column of E    A x T   temporal attention
    F      = P @ hidden                               A x H   action features
    alpha  = softmax(F @ w_q)                         A       recipe attention
    g      = alpha @ F                                H
    recipe_probs = softmax(W_o @ g + b_o)             R

Action presence is the max over time of each column of ``E``. Everything is
float64 and the backward pass is written out by hand.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .tensor import NonFiniteError, ShapeError, log_softmax, sigmoid, softmax, softplus

PARAM_FIELDS = (
    "W_z", "W_r", "W_h",
    "U_z", "U_r", "U_h",
    "b_z", "b_r", "b_h",
    "W_a", "b_a",
    "w_q", "W_o", "b_o",
)

# gradcheck reporting groups
PARAM_GROUPS = {
    "gru_input": ("W_z", "W_r", "W_h"),
    "gru_recurrent": ("U_z", "U_r", "U_h"),
    "gru_bias": ("b_z", "b_r", "b_h"),
    "action_attention": ("W_a", "b_a"),
    "recipe_attention": ("w_q",),
    "recipe_output": ("W_o", "b_o"),
}


@dataclass(frozen=True)
class ModelDims:
    feat_dim: int
    hidden: int = 64
    num_actions: int = 48
    num_recipes: int = 10

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if int(v) != v or v < 1:
                raise ValueError(f"ModelDims.{f.name} must be a positive integer, got {v!r}")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        D, H, A, R = self.feat_dim, self.hidden, self.num_actions, self.num_recipes
        return {
            "W_z": (H, D), "W_r": (H, D), "W_h": (H, D),
            "U_z": (H, H), "U_r": (H, H), "U_h": (H, H),
            "b_z": (H,), "b_r": (H,), "b_h": (H,),
            "W_a": (A, H), "b_a": (A,),
            "w_q": (H,), "W_o": (R, H), "b_o": (R,),
        }


@dataclass
class ModelParams:
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray
    W_a: np.ndarray
    b_a: np.ndarray
    w_q: np.ndarray
    W_o: np.ndarray
    b_o: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        """Name -> array, in the canonical field order. Arrays are live references."""
        return {name: getattr(self, name) for name in PARAM_FIELDS}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.arrays().items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.arrays().items()})

    @property
    def dims(self) -> ModelDims:
        H, D = self.W_z.shape
        return ModelDims(D, H, self.W_a.shape[0], self.W_o.shape[0])

    def num_values(self) -> int:
        return sum(v.size for v in self.arrays().values())

    def allclose(self, other: "ModelParams", **kw) -> bool:
        return all(np.allclose(a, b, **kw) for a, b in zip(self.arrays().values(), other.arrays().values()))

    def equal(self, other: "ModelParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays().values(), other.arrays().values()))


# gradients share the parameter container
Gradients = ModelParams


def init_params(dims: ModelDims, seed: int = 0) -> ModelParams:
    """Uniform(-s, s) weights with s = sqrt(1 / fan_in); zero biases."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in dims.shapes().items():
        if name.startswith("b_"):
            arrays[name] = np.zeros(shape)
        else:
            fan_in = shape[-1] if len(shape) == 2 else shape[0]
            s = np.sqrt(1.0 / fan_in)
            arrays[name] = rng.uniform(-s, s, size=shape)
    return ModelParams(**arrays)


class Labels(NamedTuple):
    recipe: int
    action_set: frozenset


@dataclass
class ModelOutput:
    hidden_states: np.ndarray   # T x H, after dropout
    frame_scores: np.ndarray    # T x A
    attention: np.ndarray       # A x T, rows sum to 1
    action_features: np.ndarray  # A x H
    presence_logits: np.ndarray  # A
    recipe_logits: np.ndarray   # R
    recipe_probs: np.ndarray    # R
    recipe_attention: np.ndarray  # A

    def frame_predictions(self) -> np.ndarray:
        return np.argmax(self.frame_scores, axis=1)

    def frame_log_probs(self) -> np.ndarray:
        """Per-frame log-softmax over actions of the frame scores."""
        return log_softmax(self.frame_scores, axis=1)


@dataclass
class LossBreakdown:
    total: float
    recipe_ce: float
    action_bce: float
    diversity: float
    lambda_act: float
    lambda_div: float


def _features(sample) -> np.ndarray:
    x = getattr(sample, "features", sample)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"features must be T x D with T >= 1, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("features contain non-finite values")
    return x


def _labels(sample, labels) -> Labels:
    if labels is not None:
        if isinstance(labels, Labels):
            return labels
        r, s = labels
        return Labels(int(r), frozenset(int(a) for a in s))
    return Labels(int(sample.recipe), frozenset(int(a) for a in sample.action_set))


def dropout_mask(shape, p: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: kept units scaled by 1 / (1 - p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if p == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= p
    return keep / (1.0 - p)


# --------------------------------------------------------------------------
# forward pieces


def _gru(x, params, h0=None):
    T, D = x.shape
    H = params.W_z.shape[0]
    if params.W_z.shape[1] != D:
        raise ShapeError(f"feature dim {D} does not match model feat_dim {params.W_z.shape[1]}")
    xz = x @ params.W_z.T + params.b_z
    xr = x @ params.W_r.T + params.b_r
    xh = x @ params.W_h.T + params.b_h
    h_prev = np.zeros(H) if h0 is None else np.asarray(h0, dtype=np.float64)
    hs = np.empty((T, H))
    hprevs = np.empty((T, H))
    zs = np.empty((T, H))
    rs = np.empty((T, H))
    cs = np.empty((T, H))
    for t in range(T):
        z = sigmoid(xz[t] + params.U_z @ h_prev)
        r = sigmoid(xr[t] + params.U_r @ h_prev)
        c = np.tanh(xh[t] + params.U_h @ (r * h_prev))
        h = (1.0 - z) * h_prev + z * c
        hprevs[t], zs[t], rs[t], cs[t], hs[t] = h_prev, z, r, c, h
        h_prev = h
    return hs, (hprevs, zs, rs, cs)


def gru_forward(x, params: ModelParams, dropout_p: float = 0.0, mode: str = "eval",
                rng: np.random.Generator | None = None, h0=None, mask=None) -> np.ndarray:
    """Run the GRU from ``h0`` (zeros by default) and return T x H outputs.

    In ``"train"`` mode inverted dropout is applied to each output; the
    recurrence itself always uses the undropped state. ``mask`` overrides the
    sampled dropout mask.
    """
    x = _features(x)
    hs, _ = _gru(x, params, h0)
    m = _mask(hs.shape, dropout_p, mode, rng, mask)
    return hs if m is None else hs * m


def _mask(shape, p, mode, rng, mask):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval":
        return None
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != shape:
            raise ShapeError(f"dropout mask shape {mask.shape} != {shape}")
        return mask
    if p == 0.0:
        return None
    if rng is None:
        raise ValueError("train mode with dropout requires an rng")
    return dropout_mask(shape, p, rng)


def action_attention(hidden_states, params: ModelParams):
    """Per-frame action scores (T x A) and temporal attention (A x T)."""
    E = hidden_states @ params.W_a.T + params.b_a
    P = softmax(E, axis=0).T.copy()
    return E, P


def pool_and_recipe(P, hidden_states, params: ModelParams, frame_scores=None):
    """Attention-weighted action features, presence logits and recipe head.

    Returns ``(F, presence_logits, recipe_logits, recipe_probs, alpha)``.
    ``frame_scores`` defaults to recomputing ``E`` from ``hidden_states``.
    """
    if frame_scores is None:
        frame_scores = hidden_states @ params.W_a.T + params.b_a
    F = P @ hidden_states
    presence = frame_scores.max(axis=0)
    alpha = softmax(F @ params.w_q)
    g = alpha @ F
    logits = params.W_o @ g + params.b_o
    return F, presence, logits, softmax(logits), alpha


def _forward(x, params, mode, rng, dropout_p, mask=None):
    hs_raw, gru_cache = _gru(x, params)
    m = _mask(hs_raw.shape, dropout_p, mode, rng, mask)
    hs = hs_raw if m is None else hs_raw * m
    E, P = action_attention(hs, params)
    F, presence, logits, probs, alpha = pool_and_recipe(P, hs, params, E)
    out = ModelOutput(hs, E, P, F, presence, logits, probs, alpha)
    return out, (hs_raw, m, gru_cache)


def forward(sample, params: ModelParams, mode: str = "eval",
            rng: np.random.Generator | None = None, dropout_p: float = 0.0, mask=None) -> ModelOutput:
    """Full forward pass. ``sample`` is a VideoSample or a raw T x D array."""
    out, _ = _forward(_features(sample), params, mode, rng, dropout_p, mask)
    return out


# --------------------------------------------------------------------------
# loss


def diversity_penalty(P) -> float:
    """Squared Frobenius distance of P P^T from the identity."""
    G = P @ P.T - np.eye(P.shape[0])
    return float(np.sum(G * G))


def compute_loss(out: ModelOutput, labels, lambda_act: float = 1.0, lambda_div: float = 0.0) -> LossBreakdown:
    r, S = _labels(None, labels)
    R = out.recipe_probs.shape[0]
    A = out.presence_logits.shape[0]
    if not 0 <= r < R:
        raise ValueError(f"recipe label {r} out of range [0, {R})")
    if any(not 0 <= a < A for a in S):
        raise ValueError(f"action set {sorted(S)} out of range [0, {A})")
    recipe_ce = float(-log_softmax(out.recipe_logits)[r])
    y = _presence_targets(S, A)
    x = out.presence_logits
    action_bce = float(np.mean(softplus(x) - y * x))
    div = diversity_penalty(out.attention)
    total = recipe_ce + lambda_act * action_bce + lambda_div * div
    return LossBreakdown(total, recipe_ce, action_bce, div, lambda_act, lambda_div)


def _presence_targets(S, A):
    y = np.zeros(A)
    for a in S:
        y[a] = 1.0
    return y


# --------------------------------------------------------------------------
# backward


def _check(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite value in {name}")


def backward(sample, params: ModelParams, labels=None, lambda_act: float = 1.0, lambda_div: float = 0.0,
             mode: str = "eval", rng: np.random.Generator | None = None, dropout_p: float = 0.0,
             mask=None) -> tuple[LossBreakdown, Gradients]:
    """Loss and exact gradient for one video.

    Pass the same ``mask`` (or an rng seeded identically) to reproduce the
    dropout pattern of a previous forward call.
    """
    x = _features(sample)
    lab = _labels(sample, labels)
    out, (hs_raw, m, (hprev, zs, rs, cs)) = _forward(x, params, mode, rng, dropout_p, mask)
    loss = compute_loss(out, lab, lambda_act, lambda_div)
    _check("loss", np.array([loss.total]))

    hs, E, P, F = out.hidden_states, out.frame_scores, out.attention, out.action_features
    alpha = out.recipe_attention
    A, T = P.shape
    g_vec = alpha @ F

    # recipe head
    dlogits = out.recipe_probs.copy()
    dlogits[lab.recipe] -= 1.0
    dW_o = np.outer(dlogits, g_vec)
    db_o = dlogits
    dg = params.W_o.T @ dlogits
    dF = np.outer(alpha, dg)
    dalpha = F @ dg
    ds = alpha * (dalpha - alpha @ dalpha)
    dF += np.outer(ds, params.w_q)
    dw_q = F.T @ ds

    # presence (max over time)
    dE = np.zeros_like(E)
    if lambda_act != 0.0:
        y = _presence_targets(lab.action_set, A)
        dpres = lambda_act * (sigmoid(out.presence_logits) - y) / A
        tmax = np.argmax(E, axis=0)
        dE[tmax, np.arange(A)] += dpres

    # attention
    dP = dF @ hs.T
    if lambda_div != 0.0:
        G = P @ P.T - np.eye(A)
        dP += lambda_div * 4.0 * (G @ P)
    dhs = P.T @ dF
    dscore = P * (dP - np.sum(P * dP, axis=1, keepdims=True))
    dE += dscore.T
    dW_a = dE.T @ hs
    db_a = dE.sum(axis=0)
    dhs += dE @ params.W_a
    _check("attention gradients", dhs)

    if m is not None:
        dhs = dhs * m

    # GRU, backprop through time
    H = hs_raw.shape[1]
    daz = np.empty((T, H))
    dar = np.empty((T, H))
    dah = np.empty((T, H))
    dh_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        dh = dhs[t] + dh_next
        z, r, c, hp = zs[t], rs[t], cs[t], hprev[t]
        dz = dh * (c - hp)
        da_h = dh * z * (1.0 - c * c)
        dh_prev = dh * (1.0 - z)
        drh = params.U_h.T @ da_h
        da_r = drh * hp * r * (1.0 - r)
        dh_prev += drh * r
        da_z = dz * z * (1.0 - z)
        dh_prev += params.U_r.T @ da_r + params.U_z.T @ da_z
        daz[t], dar[t], dah[t] = da_z, da_r, da_h
        dh_next = dh_prev
    _check("GRU gradients", dh_next)

    grads = Gradients(
        W_z=daz.T @ x, W_r=dar.T @ x, W_h=dah.T @ x,
        U_z=daz.T @ hprev, U_r=dar.T @ hprev, U_h=dah.T @ (rs * hprev),
        b_z=daz.sum(axis=0), b_r=dar.sum(axis=0), b_h=dah.sum(axis=0),
        W_a=dW_a, b_a=db_a, w_q=dw_q, W_o=dW_o, b_o=db_o,
    )
    return loss, grads


def loss_value(sample, params: ModelParams, labels=None, lambda_act: float = 1.0, lambda_div: float = 0.0,
               mode: str = "eval", rng=None, dropout_p: float = 0.0, mask=None) -> float:
    out = forward(sample, params, mode, rng, dropout_p, mask)
    return compute_loss(out, _labels(sample, labels), lambda_act, lambda_div).total
