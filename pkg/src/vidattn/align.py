"""Transcript-constrained Viterbi alignment and grammar search.

Frame scores are log-probabilities (T x A). An alignment assigns each frame
a transcript position so that positions are non-decreasing, start at 0, end
at L - 1, and every position covers at least one frame. No duration model.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class InfeasibleError(ValueError):
    """No monotone segmentation exists (transcript longer than the video)."""


@dataclass
class Alignment:
    frame_labels: np.ndarray  # length T, action ids
    log_score: float
    positions: np.ndarray | None = None  # transcript index per frame


Transcript = tuple  # ordered action ids
Grammar = dict  # recipe id -> list of Transcript


def viterbi_align(frame_log_probs, transcript) -> Alignment:
    """Best monotone segmentation of ``transcript`` over the frames.

    Predecessor of (t, j) is either (t-1, j) "stay" or (t-1, j-1) "advance".
    On ties a segment keeps its frames for as long as possible, i.e. boundaries
    are placed as late as possible.
    """
    lp = np.asarray(frame_log_probs, dtype=np.float64)
    tr = np.asarray(transcript, dtype=np.int64)
    if lp.ndim != 2:
        raise ValueError(f"frame_log_probs must be T x A, got shape {lp.shape}")
    if tr.ndim != 1 or tr.size < 1:
        raise ValueError("transcript must be a non-empty sequence of action ids")
    if not np.all(np.isfinite(lp)):
        raise ValueError("frame_log_probs must be finite")
    T, A = lp.shape
    L = tr.size
    if np.any(tr < 0) or np.any(tr >= A):
        raise ValueError(f"transcript ids must lie in [0, {A})")
    if T < L:
        raise InfeasibleError(f"transcript of length {L} cannot align to {T} frames")

    emit = lp[:, tr]  # T x L
    score = np.full((T, L), -np.inf)
    advanced = np.zeros((T, L), dtype=bool)
    score[0, 0] = emit[0, 0]
    for t in range(1, T):
        stay = score[t - 1]
        adv = np.full(L, -np.inf)
        adv[1:] = score[t - 1, :-1]
        take_adv = adv >= stay
        score[t] = np.where(take_adv, adv, stay) + emit[t]
        advanced[t] = take_adv

    pos = np.empty(T, dtype=np.int64)
    j = L - 1
    for t in range(T - 1, -1, -1):
        pos[t] = j
        if t > 0 and advanced[t, j]:
            j -= 1
    return Alignment(tr[pos], float(score[T - 1, L - 1]), pos)


def best_transcript(frame_log_probs, grammar: Grammar):
    """Highest-scoring (recipe, transcript, alignment) over the grammar.

    Ties resolve to the lowest recipe id, then the earliest transcript.
    """
    T = np.shape(frame_log_probs)[0]
    best = None
    for recipe in sorted(grammar):
        for tr in grammar[recipe]:
            if len(tr) > T:
                continue
            al = viterbi_align(frame_log_probs, tr)
            if best is None or al.log_score > best[2].log_score:
                best = (recipe, tuple(tr), al)
    if best is None:
        raise InfeasibleError(f"no transcript in the grammar fits {T} frames")
    return best


def framewise_ce(frame_log_probs, labels, atol: float = 1e-9) -> float:
    """Mean negative log-probability of ``labels`` under row-normalized frame distributions."""
    lp = np.asarray(frame_log_probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    T, A = lp.shape
    if labels.shape != (T,):
        raise ValueError(f"expected {T} labels, got {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= A):
        raise ValueError(f"labels must lie in [0, {A})")
    sums = np.exp(lp).sum(axis=1)
    if np.any(np.abs(sums - 1.0) > atol):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"row {bad} of exp(frame_log_probs) sums to {sums[bad]!r}, not 1")
    return float(-lp[np.arange(T), labels].mean())


# --------------------------------------------------------------------------
# grammar files: "recipe_id: a0 a1 a2 ..." per line, '#' starts a comment


def parse_grammar(text: str) -> Grammar:
    grammar: Grammar = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, body = line.partition(":")
        if not sep:
            raise ValueError(f"grammar line {lineno}: missing ':'")
        try:
            recipe = int(head)
            actions = tuple(int(tok) for tok in body.split())
        except ValueError as exc:
            raise ValueError(f"grammar line {lineno}: {exc}") from None
        if not actions:
            raise ValueError(f"grammar line {lineno}: empty transcript")
        grammar.setdefault(recipe, []).append(actions)
    return grammar


def format_grammar(grammar: Grammar) -> str:
    lines = []
    for recipe in sorted(grammar):
        for tr in grammar[recipe]:
            lines.append(f"{recipe}: " + " ".join(str(a) for a in tr))
    return "\n".join(lines) + "\n"


def read_grammar(path) -> Grammar:
    return parse_grammar(Path(path).read_text())


def write_grammar(grammar: Grammar, path) -> None:
    Path(path).write_text(format_grammar(grammar))
