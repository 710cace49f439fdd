"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line (shown in the terminal summary)
before asserting, so a failing criterion still reports its numbers.
"""

import itertools
import struct
import time

import numpy as np
import pytest

from vidattn.align import best_transcript, viterbi_align
from vidattn.checkpoint import (
    BadMagicError, TruncatedCheckpointError, VersionMismatchError, load_checkpoint, save_checkpoint,
)
from vidattn.cli import run
from vidattn.data import (
    FeatureLengthError, LabelRangeError, ManifestMissingError, MissingFileError,
    SynthConfig, load_dataset, save_dataset, split, synth_generate,
)
from vidattn.metrics import attention_score, evaluate
from vidattn.net import ModelDims, forward, init_params
from vidattn.optim import TrainConfig, train
from vidattn.tensor import log_softmax
from vidattn.verify import check_instance, group_errors, tiny_instance

# the synthetic task: 4 recipes, 6 actions + background, D=16, 40/10/10 videos
TASK = dict(num_recipes=4, num_actions=7, feat_dim=16, videos_per_recipe=15, noise_std=0.05, seed=0)
TRAIN_FRACTION = 2 / 3
EPOCHS = 300


def _task(**overrides):
    ds = synth_generate(SynthConfig(**{**TASK, **overrides}))
    tr, va, te = split(ds, TRAIN_FRACTION, 0)
    return ds, tr, va, te


def _fit(tr, va, ds, **config):
    dims = ModelDims(ds.feat_dim, 64, ds.num_actions, ds.num_recipes)
    best, _ = train(tr, va, dims, TrainConfig(epochs=EPOCHS, train_fraction=TRAIN_FRACTION, **config))
    return best


@pytest.fixture(scope="module")
def task():
    return _task()


# ---------------------------------------------------------------- 1

def test_criterion_1_gradient_correctness(acceptance):
    t0 = time.perf_counter()
    worst: dict[str, float] = {}
    failed = []
    for seed in range(20):
        inst = tiny_instance(seed)
        T, D = inst.features.shape
        d = inst.params.dims
        assert T <= 6 and D <= 4 and d.hidden <= 6 and d.num_actions <= 4 and d.num_recipes <= 3
        report = check_instance(inst, eps=1e-5, tol=1e-4)
        for g, err in group_errors(report).items():
            worst[g] = max(worst.get(g, 0.0), err)
        if not report.passed:
            failed.append(seed)
    elapsed = time.perf_counter() - t0
    ok = not failed and all(e <= 1e-4 for e in worst.values()) and elapsed < 30
    detail = ", ".join(f"{g}={e:.1e}" for g, e in worst.items())
    acceptance(1, "gradient check, 20 tiny instances", ok,
               f"max rel err per group {detail}; failed instances {failed}; {elapsed:.1f}s (limit 30s)")
    assert ok


# ---------------------------------------------------------------- 2

def _enumerate_alignments(lp, transcript):
    T, L = lp.shape[0], len(transcript)
    best = None
    for cuts in itertools.combinations(range(1, T), L - 1):
        bounds = (0,) + cuts + (T,)
        labels = np.concatenate([[transcript[j]] * (bounds[j + 1] - bounds[j]) for j in range(L)])
        score = float(np.sum(lp[np.arange(T), labels]))
        if best is None or score > best[1]:
            best = (labels, score)
    return best


def test_criterion_2_viterbi_oracle(acceptance):
    mismatches, worst = 0, 0.0
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        T = int(rng.integers(4, 9))
        A = int(rng.integers(2, 6))
        lp = log_softmax(rng.normal(size=(T, A)), axis=1)
        R = int(rng.integers(1, 4))
        grammar = {
            r: [tuple(int(a) for a in rng.integers(0, A, size=int(rng.integers(1, 5)))) for _ in range(2)]
            for r in range(R)
        }
        # single transcript
        tr = grammar[0][0]
        al = viterbi_align(lp, tr)
        labels, score = _enumerate_alignments(lp, tr)
        worst = max(worst, abs(al.log_score - score))
        if not np.array_equal(al.frame_labels, labels) or abs(al.log_score - score) > 1e-9:
            mismatches += 1
            continue
        # whole grammar: best score, lowest recipe then earliest transcript on ties
        scored = [(r, i, _enumerate_alignments(lp, t)) for r in sorted(grammar) for i, t in enumerate(grammar[r])]
        top = max(s[1] for _, _, s in scored)
        r_best, i_best, (lab_best, _) = next((r, i, s) for r, i, s in scored if s[1] == top)
        recipe, transcript, al = best_transcript(lp, grammar)
        worst = max(worst, abs(al.log_score - top))
        if (recipe, transcript) != (r_best, grammar[r_best][i_best]) or not np.array_equal(al.frame_labels, lab_best) \
                or abs(al.log_score - top) > 1e-9:
            mismatches += 1
    ok = mismatches == 0
    acceptance(2, "Viterbi vs exhaustive enumeration, 100 instances", ok,
               f"{mismatches} mismatches; max |log_score diff| {worst:.1e} (limit 1e-9)")
    assert ok


# ---------------------------------------------------------------- 3

def test_criterion_3_normalization(acceptance):
    worst_att = worst_rec = worst_alpha = 0.0
    nondeterministic = 0
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        T, D, H = (int(rng.integers(1, 13)), int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        A, R = int(rng.integers(1, 8)), int(rng.integers(1, 5))
        params = init_params(ModelDims(D, H, A, R), seed)
        for v in params.arrays().values():
            v[...] = rng.normal(scale=float(rng.choice([0.1, 1.0, 3.0])), size=v.shape)
        x = rng.normal(scale=float(rng.choice([1.0, 10.0])), size=(T, D))
        out = forward(x, params, "eval")
        worst_att = max(worst_att, float(np.max(np.abs(out.attention.sum(axis=1) - 1.0))))
        worst_rec = max(worst_rec, abs(float(out.recipe_probs.sum()) - 1.0))
        worst_alpha = max(worst_alpha, abs(float(out.recipe_attention.sum()) - 1.0))
        again = forward(x, params, "eval")
        if out.attention.tobytes() != again.attention.tobytes() or out.recipe_probs.tobytes() != again.recipe_probs.tobytes():
            nondeterministic += 1
    ok = max(worst_att, worst_rec, worst_alpha) <= 1e-9 and nondeterministic == 0
    acceptance(3, "normalization over 1000 forward passes", ok,
               f"max |row sum - 1|: attention {worst_att:.1e}, recipe_probs {worst_rec:.1e}, "
               f"recipe attention {worst_alpha:.1e}; {nondeterministic} non-bit-identical eval reruns")
    assert ok


# ---------------------------------------------------------------- 4

def test_criterion_4_attention_score(acceptance):
    cases = [
        (attention_score([[1.0, 0.0]], [1, 0], [1]), 0.5),
        (attention_score([[1.0, 0.0]], [0, 1], [1]), 0.0),
        (attention_score(np.full((2, 4), 0.25), [1, 1, 2, 2], [1, 2]), 0.125),
    ]
    exact = all(got == want for got, want in cases)
    worst = 0.0
    rng = np.random.default_rng(4)
    for _ in range(500):
        A, T = int(rng.integers(1, 6)), int(rng.integers(1, 12))
        labels = rng.integers(0, A + 1, size=T)
        acts = list(range(A))
        P1 = rng.dirichlet(np.ones(T), size=A)
        P2 = rng.dirichlet(np.ones(T), size=A)
        a = float(rng.uniform())
        lhs = attention_score(a * P1 + (1 - a) * P2, labels, acts)
        rhs = a * attention_score(P1, labels, acts) + (1 - a) * attention_score(P2, labels, acts)
        worst = max(worst, abs(lhs - rhs))
    ok = exact and worst <= 1e-12
    acceptance(4, "attention score worked cases and linearity", ok,
               f"worked cases {[g for g, _ in cases]} (want 0.5, 0, 0.125); max linearity error {worst:.1e} (limit 1e-12)")
    assert ok


# ---------------------------------------------------------------- 5

def test_criterion_5_synthetic_learning(acceptance, task):
    ds, tr, va, te = task
    assert (len(tr), len(va), len(te)) == (40, 10, 10)
    t0 = time.perf_counter()
    best = _fit(tr, va, ds)
    report = evaluate(best, te)
    elapsed = time.perf_counter() - t0
    above = sum(s > u for _, s, _, u in report.per_video_scores)
    ok = (report.recipe_accuracy >= 0.95
          and report.mean_attention_score > report.mean_uniform_attention_score
          and elapsed < 300)
    acceptance(5, "synthetic learning on held-out (test) videos", ok,
               f"recipe acc {report.recipe_accuracy:.2f} (>= 0.95); attention score {report.mean_attention_score:.4f} "
               f"vs uniform {report.mean_uniform_attention_score:.4f} ({above}/{len(report.per_video_scores)} videos above); "
               f"best epoch {best.epoch}/{EPOCHS}; {elapsed:.0f}s (limit 300s)")
    assert ok


# ---------------------------------------------------------------- 6

def test_criterion_6_regularization_direction(acceptance):
    ds, tr, va, te = _task(noise_dims=16)
    f1 = {wd: evaluate(_fit(tr, va, ds, weight_decay=wd), te).action_f1 for wd in (1e-4, 0.1)}

    # dropout is train-only: eval is bit-identical whatever p was used in training
    _, tr2, va2, te2 = _task()
    identical = True
    for p in (0.0, 0.5):
        dims = ModelDims(16, 16, 7, 4)
        best, _ = train(tr2, va2, dims, TrainConfig(epochs=3, dropout_p=p, train_fraction=TRAIN_FRACTION))
        r1, r2 = evaluate(best, te2), evaluate(best, te2)
        identical &= r1.csv_row() == r2.csv_row() and r1.per_video_scores == r2.per_video_scores
        for v in te2.videos:
            a = forward(v, best.params, "eval", rng=np.random.default_rng(1), dropout_p=p)
            b = forward(v, best.params, "eval", rng=np.random.default_rng(2), dropout_p=p)
            identical &= a.recipe_probs.tobytes() == b.recipe_probs.tobytes()
            identical &= a.attention.tobytes() == b.attention.tobytes()
    ok = f1[0.1] < f1[1e-4] and identical
    acceptance(6, "weight decay lowers action F1; eval ignores dropout", ok,
               f"test action F1 wd=1e-4 {f1[1e-4]:.4f} vs wd=0.1 {f1[0.1]:.4f} (with 16 noise dims); "
               f"eval reruns bit-identical for dropout_p in (0, 0.5): {identical}")
    assert ok


# ---------------------------------------------------------------- 7

def test_criterion_7_diversity_penalty(acceptance, task):
    ds, tr, va, te = task
    mass = {ld: evaluate(_fit(tr, va, ds, lambda_div=ld), te).mean_offdiag_mass for ld in (0.0, 1.0)}
    ok = mass[1.0] < mass[0.0]
    acceptance(7, "diversity penalty reduces attention overlap", ok,
               f"mean off-diagonal (P P^T) on test videos: lambda_div=0 {mass[0.0]:.5f} vs lambda_div=1 {mass[1.0]:.5f}")
    assert ok


# ---------------------------------------------------------------- 8

def test_criterion_8_persistence(acceptance, task, tmp_path):
    ds, tr, va, _ = task
    problems = []

    # dataset: bit-exact round trip
    d1, d2 = tmp_path / "d1", tmp_path / "d2"
    save_dataset(ds, d1)
    back = load_dataset(d1)
    save_dataset(back, d2)
    for f in sorted(p.relative_to(d1) for p in d1.rglob("*") if p.is_file()):
        if (d1 / f).read_bytes() != (d2 / f).read_bytes():
            problems.append(f"dataset file {f} differs after round trip")
    for a, b in zip(ds.videos, back.videos):
        if a.features.tobytes() != b.features.tobytes() or not np.array_equal(a.frame_labels, b.frame_labels):
            problems.append(f"video {a.id} differs after round trip")

    # checkpoint: bit-exact round trip
    dims = ModelDims(ds.feat_dim, 8, ds.num_actions, ds.num_recipes)
    best, _ = train(tr, va, dims, TrainConfig(epochs=2, weight_decay=1e-4, dropout_p=0.25))
    path = tmp_path / "m.ckpt"
    save_checkpoint(best, path)
    loaded = load_checkpoint(path)
    if not loaded.params.equal(best.params) or loaded.metric_history != best.metric_history \
            or loaded.config != best.config or loaded.dims != best.dims or loaded.epoch != best.epoch:
        problems.append("checkpoint fields differ after round trip")
    raw = path.read_bytes()

    # corrupted files map to distinct error types, and the CLI exits 1 rather than crashing
    bad = {
        "magic": (b"XXXX" + raw[4:], BadMagicError),
        "version": (raw[:4] + struct.pack("<I", 99) + raw[8:], VersionMismatchError),
        "truncated": (raw[:-9], TruncatedCheckpointError),
    }
    for name, (blob, err) in bad.items():
        p = tmp_path / f"{name}.ckpt"
        p.write_bytes(blob)
        try:
            load_checkpoint(p)
            problems.append(f"{name} checkpoint loaded without error")
        except err:
            pass
        except Exception as exc:  # noqa: BLE001
            problems.append(f"{name} checkpoint raised {type(exc).__name__}")
        if run(["eval", "--ckpt", str(p), "--data", str(d1), "--split", "test"]).exit_code != 1:
            problems.append(f"cli eval on {name} checkpoint did not exit 1")

    first = ds.videos[0].id
    corruptions = {
        "manifest": (lambda d: (d / "manifest.json").unlink(), ManifestMissingError),
        "missing features": (lambda d: (d / "features" / f"{first}.f64").unlink(), MissingFileError),
        "short features": (lambda d: (d / "features" / f"{first}.f64").write_bytes(
            (d / "features" / f"{first}.f64").read_bytes()[:-8]), FeatureLengthError),
        "label range": (lambda d: (d / "labels" / f"{first}.u16").write_bytes(
            np.full(ds.videos[0].num_frames, 999, dtype="<u2").tobytes()), LabelRangeError),
    }
    seen_types = set()
    for i, (name, (corrupt, err)) in enumerate(corruptions.items()):
        d = tmp_path / f"bad{i}"
        save_dataset(ds, d)
        corrupt(d)
        try:
            load_dataset(d)
            problems.append(f"{name}: dataset loaded without error")
        except err as exc:
            seen_types.add(type(exc))
        except Exception as exc:  # noqa: BLE001
            problems.append(f"{name}: raised {type(exc).__name__}")
        if run(["eval", "--ckpt", str(path), "--data", str(d), "--split", "test"]).exit_code != 1:
            problems.append(f"cli eval on {name} dataset did not exit 1")
    if len(seen_types) != len(corruptions):
        problems.append("dataset corruptions did not map to distinct error types")

    ok = not problems
    acceptance(8, "persistence round trips and corruption errors", ok,
               "dataset + checkpoint bit-exact; 3 checkpoint and 4 dataset corruptions rejected with distinct errors"
               if ok else "; ".join(problems))
    assert ok
