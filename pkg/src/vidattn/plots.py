"""CSV and SVG exports: training curves and attention heatmaps."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# byte-stable SVG output
plt.rcParams["svg.hashsalt"] = "vidattn"
plt.rcParams["svg.fonttype"] = "path"
_SVG_META = {"Date": None, "Creator": None}


def _save_svg(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata=_SVG_META)
    plt.close(fig)
    Path(path).write_bytes(buf.getvalue())


def attention_csv(P, path) -> None:
    """One row per action, one column per frame, ``repr`` floats."""
    P = np.asarray(P, dtype=np.float64)
    lines = [",".join(repr(float(x)) for x in row) for row in P]
    Path(path).write_text("\n".join(lines) + "\n")


def read_attention_csv(path) -> np.ndarray:
    rows = [line for line in Path(path).read_text().splitlines() if line.strip()]
    return np.array([[float(x) for x in row.split(",")] for row in rows])


def attention_svg(P, actions, frame_labels, path, title: str = "") -> None:
    """Two panels: the attention heatmap and, below it, the ground-truth frames.

    Each panel has its own colour scale so small attention values stay legible.
    """
    P = np.asarray(P, dtype=np.float64)
    labels = np.asarray(frame_labels)
    fig, (ax_att, ax_gt) = plt.subplots(2, 1, figsize=(8, 1.2 + 0.5 * len(actions)), sharex=True)
    im = ax_att.imshow(P, aspect="auto", interpolation="nearest", cmap="viridis")
    ax_att.set_yticks(range(len(actions)), [str(a) for a in actions])
    ax_att.set_ylabel("action")
    if title:
        ax_att.set_title(title)
    fig.colorbar(im, ax=ax_att, fraction=0.03)
    truth = (labels[None, :] == np.asarray(actions)[:, None]).astype(float)
    ax_gt.imshow(truth, aspect="auto", interpolation="nearest", cmap="Greys")
    ax_gt.set_yticks(range(len(actions)), [str(a) for a in actions])
    ax_gt.set_ylabel("truth")
    ax_gt.set_xlabel("frame")
    fig.tight_layout()
    _save_svg(fig, path)


def curves_csv(series: dict, path) -> None:
    """``series``: label -> (epochs, values). Long format: label,epoch,value."""
    lines = ["series,epoch,value"]
    for label in sorted(series):
        epochs, values = series[label]
        lines += [f"{label},{int(e)},{float(v)!r}" for e, v in zip(epochs, values)]
    Path(path).write_text("\n".join(lines) + "\n")


def curves_svg(series: dict, path, ylabel: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in sorted(series):
        epochs, values = series[label]
        if len(epochs):
            ax.plot(epochs, values, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    ax.legend(loc="best")
    fig.tight_layout()
    _save_svg(fig, path)
