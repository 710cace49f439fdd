"""SGD / Adam with coupled L2 weight decay, batching and the training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .net import Gradients, ModelDims, ModelParams, backward, init_params
from .tensor import NonFiniteError

log = logging.getLogger(__name__)

SELECTION_METRICS = ("recipe_accuracy", "action_f1", "val_loss")


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}" + (f": {detail}" if detail else ""))


@dataclass
class TrainConfig:
    epochs: int = 10000
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    weight_decay: float = 0.0
    dropout_p: float = 0.0
    lambda_act: float = 1.0
    lambda_div: float = 0.0
    seed: int = 0
    eval_every: int = 1
    selection_metric: str = "val_loss"
    train_fraction: float = 0.8
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("epochs, batch_size and eval_every must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.selection_metric not in SELECTION_METRICS:
            raise ValueError(f"selection_metric must be one of {SELECTION_METRICS}")

    def to_lines(self) -> list[str]:
        return [f"{f.name}={getattr(self, f.name)!r}" if isinstance(getattr(self, f.name), float)
                else f"{f.name}={getattr(self, f.name)}" for f in fields(self)]

    @classmethod
    def from_mapping(cls, values: dict, base: "TrainConfig | None" = None) -> "TrainConfig":
        """Build a config from string (or typed) values, on top of ``base``."""
        base = base or cls()
        kwargs = {f.name: getattr(base, f.name) for f in fields(cls)}
        for key, raw in values.items():
            if key not in kwargs:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(type(kwargs[key]), raw, key)
        return cls(**kwargs)


def _coerce(kind, raw, key):
    try:
        if kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        return kind(raw)
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot interpret {raw!r} as {kind.__name__}") from None


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected key=value")
        values[key.strip()] = value.strip()
    return TrainConfig.from_mapping(values, base)


# --------------------------------------------------------------------------
# optimizers


@dataclass
class OptimState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(params: ModelParams, grads: Gradients, state: OptimState, config: TrainConfig):
    """One update with L2 decay folded into the gradient (``g + wd * theta``).

    Returns fresh ``(params, state)``; the inputs are not modified.
    """
    garr = grads.arrays()
    for name, g in garr.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in {name}")
    lr, wd = config.learning_rate, config.weight_decay
    new = {}
    step = state.step + 1
    m_new, v_new = {}, {}
    for name, theta in params.arrays().items():
        g = garr[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient {name} has shape {g.shape}, expected {theta.shape}")
        g = g + wd * theta if wd else g
        if config.optimizer == "sgd":
            new[name] = theta - lr * g
            continue
        b1, b2 = config.beta1, config.beta2
        m = b1 * state.m.get(name, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** step)
        v_hat = v / (1.0 - b2 ** step)
        new[name] = theta - lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        m_new[name], v_new[name] = m, v
    return ModelParams(**new), OptimState(step, m_new, v_new)


def batch_iter(dataset, batch_size: int, seed: int, epoch: int):
    """Shuffled batches for one epoch; the order depends only on (seed, epoch)."""
    items = list(dataset)
    if not items:
        raise ValueError("cannot batch an empty dataset")
    order = np.random.default_rng([seed, epoch]).permutation(len(items))
    for start in range(0, len(items), batch_size):
        yield [items[i] for i in order[start:start + batch_size]]


def _accumulate(total: dict, grads: Gradients) -> None:
    for name, g in grads.arrays().items():
        total[name] = total[name] + g if name in total else g.copy()


# --------------------------------------------------------------------------
# training


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_recipe_accuracy: float
    val: dict | None = None  # metric name -> value on the validation split


def _selection_key(val: dict, metric: str) -> tuple:
    if metric == "val_loss":
        return (-val["loss"], 0.0)
    return (val[metric], -val["loss"])


def train(train_set, val_set, dims: ModelDims, config: TrainConfig, callback=None):
    """Train from ``init_params(dims, config.seed)`` and keep the best validation checkpoint.

    Gradients within a batch are summed in batch order, then averaged. The
    kept checkpoint has the lowest validation loss (``selection_metric="val_loss"``)
    or the highest validation accuracy / F1, ties going to the lower validation
    loss, then to the earlier epoch. Returns
    ``(best_checkpoint, history)``; the checkpoint carries the full run history.
    """
    from .checkpoint import Checkpoint
    from .metrics import evaluate_params

    train_videos = list(train_set)
    val_videos = list(val_set)
    if not train_videos or not val_videos:
        raise ValueError("train and val splits must be non-empty")
    index = {id(v): i for i, v in enumerate(train_videos)}
    params = init_params(dims, config.seed)
    state = OptimState()
    history: list[EpochRecord] = []
    flat: list[tuple] = []
    best_params, best_epoch, best_key = None, 0, (-np.inf, -np.inf)
    mode = "train" if config.dropout_p > 0 else "eval"

    for epoch in range(1, config.epochs + 1):
        loss_sum = 0.0
        for batch in batch_iter(train_videos, config.batch_size, config.seed, epoch):
            total: dict = {}
            for v in batch:
                rng = np.random.default_rng([config.seed, epoch, index[id(v)]])
                try:
                    loss, grads = backward(
                        v, params, None, config.lambda_act, config.lambda_div,
                        mode, rng, config.dropout_p,
                    )
                except NonFiniteError as exc:
                    raise DivergenceError(epoch, str(exc)) from None
                if not np.isfinite(loss.total):
                    raise DivergenceError(epoch, "non-finite loss")
                loss_sum += loss.total
                _accumulate(total, grads)
            avg = ModelParams(**{k: g / len(batch) for k, g in total.items()})
            try:
                params, state = optimizer_step(params, avg, state, config)
            except NonFiniteError as exc:
                raise DivergenceError(epoch, str(exc)) from None
        rec = EpochRecord(epoch, loss_sum / len(train_videos), float("nan"))
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            tr_report = evaluate_params(params, train_videos)
            report = evaluate_params(params, val_videos, loss_weights=(config.lambda_act, config.lambda_div))
            rec.train_recipe_accuracy = tr_report.recipe_accuracy
            rec.val = {
                "recipe_accuracy": report.recipe_accuracy,
                "frame_action_accuracy": report.frame_action_accuracy,
                "action_f1": report.action_f1,
                "attention_score": report.mean_attention_score,
                "loss": report.mean_loss,
            }
            key = _selection_key(rec.val, config.selection_metric)
            if key > best_key:
                best_key, best_epoch, best_params = key, epoch, params.copy()
        history.append(rec)
        flat.append((epoch, "train", "loss", rec.train_loss))
        if rec.val is not None:
            flat.append((epoch, "train", "recipe_accuracy", rec.train_recipe_accuracy))
            for name, value in rec.val.items():
                flat.append((epoch, "val", name, value))
        if callback is not None:
            callback(rec, params)
        log.debug("epoch %d loss %.6f val %s", epoch, rec.train_loss, rec.val)

    best = Checkpoint(best_params, dims, config, best_epoch, flat)
    return best, history
