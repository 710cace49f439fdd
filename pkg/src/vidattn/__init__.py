"""Weakly supervised action attention for recipe videos, in numpy.

A GRU encodes per-frame features; per-action temporal attention pools them
into action features, which a second attention combines into a recipe
prediction. Training uses only the video-level recipe label and the set of
actions present.
"""

from .align import best_transcript, viterbi_align
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import Dataset, SynthConfig, VideoSample, load_dataset, save_dataset, split, synth_generate
from .metrics import EvalReport, attention_score, evaluate, evaluate_params
from .net import ModelDims, ModelParams, backward, compute_loss, forward, init_params
from .optim import TrainConfig, train
from .tensor import grad_check

__all__ = [
    "best_transcript", "viterbi_align",
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "Dataset", "SynthConfig", "VideoSample", "load_dataset", "save_dataset", "split", "synth_generate",
    "EvalReport", "attention_score", "evaluate", "evaluate_params",
    "ModelDims", "ModelParams", "backward", "compute_loss", "forward", "init_params",
    "TrainConfig", "train", "grad_check",
]
