import itertools

import numpy as np
import pytest

from vidattn.align import (
    InfeasibleError, best_transcript, format_grammar, framewise_ce, parse_grammar, viterbi_align,
)
from vidattn.tensor import log_softmax


def brute_force_align(lp, transcript):
    """Enumerate every placement of L-1 boundaries among T-1 gaps."""
    T, L = lp.shape[0], len(transcript)
    best = None
    for cuts in itertools.combinations(range(1, T), L - 1):
        bounds = (0,) + cuts + (T,)
        labels = np.concatenate([[transcript[j]] * (bounds[j + 1] - bounds[j]) for j in range(L)])
        score = float(np.sum(lp[np.arange(T), labels]))
        if best is None or score > best[1]:
            best = (labels, score)
    return best


def test_forced_alignments():
    lp = np.log(np.full((2, 3), 1 / 3))
    np.testing.assert_array_equal(viterbi_align(lp, [1, 2]).frame_labels, [1, 2])
    lp3 = np.zeros((3, 2))
    al = viterbi_align(lp3, [1])
    np.testing.assert_array_equal(al.frame_labels, [1, 1, 1])
    assert al.log_score == 0.0


def test_infeasible():
    with pytest.raises(InfeasibleError):
        viterbi_align(np.zeros((2, 3)), [0, 1, 2])


def test_ties_place_boundaries_late():
    # all-zero scores: staying on the first segment as long as possible
    al = viterbi_align(np.zeros((4, 2)), [0, 1])
    np.testing.assert_array_equal(al.frame_labels, [0, 0, 0, 1])


@pytest.mark.parametrize("seed", range(100))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 9))
    L = int(rng.integers(1, min(T, 4) + 1))
    A = 5
    lp = log_softmax(rng.normal(size=(T, A)), axis=1)
    tr = [int(a) for a in rng.integers(0, A, size=L)]
    al = viterbi_align(lp, tr)
    labels, score = brute_force_align(lp, tr)
    np.testing.assert_array_equal(al.frame_labels, labels)
    assert abs(al.log_score - score) <= 1e-9


@pytest.mark.parametrize("seed", range(20))
def test_alignment_invariants_and_row_shift(seed):
    rng = np.random.default_rng(seed)
    T, A = 8, 4
    lp = rng.normal(size=(T, A))
    tr = [0, 2, 1]
    al = viterbi_align(lp, tr)
    pos = al.positions
    assert pos[0] == 0 and pos[-1] == len(tr) - 1
    assert np.all(np.diff(pos) >= 0) and np.all(np.diff(pos) <= 1)
    shift = rng.normal(size=(T, 1))
    shifted = viterbi_align(lp + shift, tr)
    np.testing.assert_array_equal(shifted.frame_labels, al.frame_labels)
    assert shifted.log_score == pytest.approx(al.log_score + shift.sum(), abs=1e-9)


def test_best_transcript_single_feasible():
    lp = np.zeros((3, 4))
    grammar = {0: [(0, 1, 2, 3)], 1: [(2, 1)]}
    recipe, tr, al = best_transcript(lp, grammar)
    assert (recipe, tr) == (1, (2, 1))


def test_best_transcript_dominance():
    lp = np.full((5, 4), -1e9)
    lp[:, [0, 1]] = 0.0
    grammar = {0: [(2, 3)], 1: [(0, 1)]}
    recipe, tr, _ = best_transcript(lp, grammar)
    assert (recipe, tr) == (1, (0, 1))


def test_best_transcript_ties_lowest_recipe():
    grammar = {2: [(0,)], 1: [(1,)], 3: [(0,)]}
    recipe, tr, _ = best_transcript(np.zeros((3, 2)), grammar)
    assert recipe == 1


def test_best_transcript_none_feasible():
    with pytest.raises(InfeasibleError):
        best_transcript(np.zeros((1, 3)), {0: [(0, 1)]})


@pytest.mark.parametrize("seed", range(30))
def test_best_transcript_brute_force(seed):
    rng = np.random.default_rng(seed)
    T, A = 6, 5
    lp = log_softmax(rng.normal(size=(T, A)), axis=1)
    grammar = {r: [tuple(int(a) for a in rng.integers(0, A, size=int(rng.integers(1, 5)))) for _ in range(2)]
               for r in range(3)}
    recipe, tr, al = best_transcript(lp, grammar)
    scored = [(brute_force_align(lp, t)[1], r, t) for r in grammar for t in grammar[r]]
    best_score = max(s for s, _, _ in scored)
    assert abs(al.log_score - best_score) <= 1e-9
    assert tr in [t for s, r, t in scored if s == best_score and r == recipe]


def test_framewise_ce_cases():
    perfect = np.log(np.eye(3)[[0, 2, 1]] + 0.0, where=np.eye(3)[[0, 2, 1]] > 0, out=np.full((3, 3), -800.0))
    assert framewise_ce(perfect, [0, 2, 1]) == 0.0
    A = 4
    assert framewise_ce(np.full((5, A), -np.log(A)), [0, 1, 2, 3, 0]) == pytest.approx(np.log(A), abs=1e-15)
    probs = np.array([[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]])
    expected = -(np.log(0.7) + np.log(0.8) + np.log(0.5)) / 3
    assert framewise_ce(np.log(probs), [0, 1, 1]) == pytest.approx(expected, abs=1e-15)


def test_framewise_ce_rejects_unnormalised():
    with pytest.raises(ValueError):
        framewise_ce(np.log(np.array([[0.5, 0.6]])), [0])


def test_grammar_text_roundtrip():
    text = "# breakfast\n0: 1 2 3\n0: 1 3\n2: 4  # trailing\n\n"
    g = parse_grammar(text)
    assert g == {0: [(1, 2, 3), (1, 3)], 2: [(4,)]}
    assert parse_grammar(format_grammar(g)) == g
    with pytest.raises(ValueError):
        parse_grammar("0 1 2")
