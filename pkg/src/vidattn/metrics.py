"""Recipe accuracy, frame accuracy, frame-level macro F1 and the attention score."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .data import BACKGROUND
from .net import compute_loss, forward

CSV_COLUMNS = (
    "recipe_accuracy",
    "frame_action_accuracy",
    "action_f1",
    "mean_attention_score",
    "mean_attention_score_normalized",
    "mean_uniform_attention_score",
    "num_videos",
)


def recipe_accuracy(predictions, truths) -> float:
    p = np.asarray(predictions)
    t = np.asarray(truths)
    if p.shape != t.shape or p.ndim != 1 or p.size < 1:
        raise ValueError(f"need equal-length non-empty sequences, got {p.shape} and {t.shape}")
    return float(np.mean(p == t))


def _pooled(pred_labels, true_labels):
    pred_labels = list(pred_labels)
    true_labels = list(true_labels)
    if len(pred_labels) != len(true_labels):
        raise ValueError(f"{len(pred_labels)} predicted videos vs {len(true_labels)} true videos")
    ps, ts = [], []
    for i, (p, t) in enumerate(zip(pred_labels, true_labels)):
        p, t = np.asarray(p, dtype=np.int64), np.asarray(t, dtype=np.int64)
        if p.shape != t.shape:
            raise ValueError(f"video {i}: {p.size} predicted frames vs {t.size} true frames")
        ps.append(p)
        ts.append(t)
    if not ps:
        raise ValueError("no videos")
    return np.concatenate(ps), np.concatenate(ts)


def frame_action_accuracy(pred_labels, true_labels) -> float:
    """Micro-averaged frame accuracy over all frames of all videos."""
    p, t = _pooled(pred_labels, true_labels)
    if p.size == 0:
        raise ValueError("no frames")
    return float(np.mean(p == t))


def action_f1(pred_labels, true_labels, num_actions: int, background: int | None = BACKGROUND) -> float:
    """Frame-level macro F1 over classes seen in prediction or truth.

    Frames are pooled across videos. ``background`` (if not None) is left out
    of the macro average.
    """
    p, t = _pooled(pred_labels, true_labels)
    if (p.size and (p.min() < 0 or p.max() >= num_actions)) or (t.size and (t.min() < 0 or t.max() >= num_actions)):
        raise ValueError(f"labels must lie in [0, {num_actions})")
    scores = []
    for c in range(num_actions):
        if c == background:
            continue
        tp = int(np.sum((p == c) & (t == c)))
        n_pred = int(np.sum(p == c))
        n_true = int(np.sum(t == c))
        if n_pred == 0 and n_true == 0:
            continue
        scores.append(2.0 * tp / (n_pred + n_true))
    if not scores:
        raise ValueError("no action class present in predictions or truths")
    return float(np.mean(scores))


def attention_score(P, frame_labels, actions=None) -> float:
    """Mean over annotated actions of (1/T) * <one-hot frames of the action, attention row>.

    Row ``i`` of ``P`` is the attention of action ``actions[i]`` (default: row
    index = action id).
    """
    P = np.asarray(P, dtype=np.float64)
    labels = np.asarray(frame_labels)
    if P.ndim != 2:
        raise ValueError("attention map must be 2-D")
    A_v, T = P.shape
    if labels.shape != (T,):
        raise ValueError(f"attention has {T} frames but labels have {labels.size}")
    actions = np.arange(A_v) if actions is None else np.asarray(actions)
    if actions.shape != (A_v,):
        raise ValueError(f"{A_v} attention rows but {actions.size} actions")
    onehot = (labels[None, :] == actions[:, None]).astype(np.float64)  # A_v x T
    return float(np.mean(np.sum(onehot * P, axis=1) / T))


def uniform_attention_score(frame_labels, actions) -> float:
    """Attention score of a uniform map: (1/A) * sum_i n_i / T^2."""
    labels = np.asarray(frame_labels)
    T = labels.size
    return attention_score(np.full((len(actions), T), 1.0 / T), labels, actions)


def offdiag_mass(P) -> float:
    """Mean off-diagonal entry of P P^T."""
    G = P @ P.T
    A = G.shape[0]
    if A < 2:
        return 0.0
    return float((G.sum() - np.trace(G)) / (A * (A - 1)))


@dataclass
class EvalReport:
    recipe_accuracy: float
    frame_action_accuracy: float
    action_f1: float
    mean_attention_score: float
    mean_attention_score_normalized: float
    mean_uniform_attention_score: float
    num_videos: int
    per_video_scores: list = field(default_factory=list)  # (id, score, normalized, uniform)
    mean_offdiag_mass: float = 0.0
    mean_loss: float = float("nan")

    def csv_header(self) -> str:
        return ",".join(CSV_COLUMNS)

    def csv_row(self) -> str:
        d = asdict(self)
        return ",".join(repr(d[c]) if isinstance(d[c], float) else str(d[c]) for c in CSV_COLUMNS)

    def to_text(self) -> str:
        lines = [f"{c}={getattr(self, c)!r}" for c in CSV_COLUMNS]
        lines.append(f"mean_offdiag_mass={self.mean_offdiag_mass!r}")
        for vid, s, n, u in self.per_video_scores:
            lines.append(f"video={vid},{s!r},{n!r},{u!r}")
        return "\n".join(lines) + "\n"


def evaluate_params(params, videos, num_actions: int | None = None, loss_weights=None) -> EvalReport:
    """Eval-mode forward over ``videos`` and aggregate all metrics.

    With ``loss_weights=(lambda_act, lambda_div)`` the mean training loss over
    the videos is filled in as well.
    """
    videos = list(videos)
    if not videos:
        raise ValueError("cannot evaluate an empty split")
    dims = params.dims
    if num_actions is not None and num_actions != dims.num_actions:
        raise ValueError(f"checkpoint has {dims.num_actions} actions, dataset has {num_actions}")
    preds, truths, fpred, ftrue, per_video, offd, losses = [], [], [], [], [], [], []
    for v in videos:
        if v.features.shape[1] != dims.feat_dim:
            raise ValueError(f"video {v.id}: feature dim {v.features.shape[1]} != checkpoint {dims.feat_dim}")
        if v.frame_labels is None:
            raise ValueError(f"video {v.id} has no frame-level ground truth")
        out = forward(v, params, "eval")
        preds.append(int(np.argmax(out.recipe_probs)))
        truths.append(int(v.recipe))
        fpred.append(out.frame_predictions())
        ftrue.append(v.frame_labels)
        acts = v.annotated_actions()
        if acts:
            s = attention_score(out.attention[acts], v.frame_labels, acts)
            u = uniform_attention_score(v.frame_labels, acts)
            per_video.append((v.id, s, s * v.num_frames, u))
        offd.append(offdiag_mass(out.attention))
        if loss_weights is not None:
            losses.append(compute_loss(out, (v.recipe, v.action_set), *loss_weights).total)
    scores = np.array([s for _, s, _, _ in per_video]) if per_video else np.zeros(1)
    norm = np.array([n for _, _, n, _ in per_video]) if per_video else np.zeros(1)
    unif = np.array([u for _, _, _, u in per_video]) if per_video else np.zeros(1)
    return EvalReport(
        recipe_accuracy=recipe_accuracy(preds, truths),
        frame_action_accuracy=frame_action_accuracy(fpred, ftrue),
        action_f1=action_f1(fpred, ftrue, dims.num_actions),
        mean_attention_score=float(scores.mean()),
        mean_attention_score_normalized=float(norm.mean()),
        mean_uniform_attention_score=float(unif.mean()),
        num_videos=len(videos),
        per_video_scores=per_video,
        mean_offdiag_mass=float(np.mean(offd)),
        mean_loss=float(np.mean(losses)) if losses else float("nan"),
    )


def evaluate(checkpoint, videos) -> EvalReport:
    num_actions = getattr(videos, "num_actions", None)
    if num_actions is not None and num_actions != checkpoint.dims.num_actions:
        raise ValueError(f"checkpoint has {checkpoint.dims.num_actions} actions, dataset has {num_actions}")
    weights = (checkpoint.config.lambda_act, checkpoint.config.lambda_div)
    return evaluate_params(checkpoint.params, videos, num_actions, loss_weights=weights)
