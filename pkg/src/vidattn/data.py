"""Video samples, the on-disk dataset layout, a synthetic generator and splits.

On disk a dataset directory holds::

    manifest.json          dims + one record per video
    grammar.txt            recipe -> transcript lines (see ``align``)
    features/<id>.f64      T*D little-endian float64, row-major
    labels/<id>.u16        T little-endian uint16 frame labels

Action id 0 is the background class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import format_grammar, parse_grammar

BACKGROUND = 0
MANIFEST_VERSION = 1


class DatasetError(Exception):
    pass


class ManifestMissingError(DatasetError):
    pass


class MissingFileError(DatasetError):
    pass


class FeatureLengthError(DatasetError):
    pass


class LabelRangeError(DatasetError):
    pass


@dataclass
class VideoSample:
    id: str
    features: np.ndarray
    recipe: int
    action_set: frozenset
    transcript: tuple
    frame_labels: np.ndarray | None = None

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    def annotated_actions(self, include_background: bool = False) -> list[int]:
        """Action ids present in the video, sorted; background dropped by default."""
        return sorted(a for a in self.action_set if include_background or a != BACKGROUND)


@dataclass
class Dataset:
    feat_dim: int
    num_actions: int
    num_recipes: int
    videos: list = field(default_factory=list)
    grammar: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.videos)

    def __iter__(self):
        return iter(self.videos)

    def subset(self, videos) -> "Dataset":
        return Dataset(self.feat_dim, self.num_actions, self.num_recipes, list(videos), self.grammar)

    def by_id(self, video_id: str) -> VideoSample:
        for v in self.videos:
            if v.id == video_id:
                return v
        raise KeyError(f"no video with id {video_id!r}")


# --------------------------------------------------------------------------
# synthetic generator


@dataclass
class SynthConfig:
    num_recipes: int = 10
    num_actions: int = 48  # including background id 0
    feat_dim: int = 16
    videos_per_recipe: int = 10
    min_segment: int = 3
    max_segment: int = 8
    noise_std: float = 0.1
    background_prob: float = 0.3
    min_transcript: int = 3
    max_transcript: int = 6
    noise_dims: int = 0  # extra label-irrelevant feature dimensions
    noise_dim_std: float = 1.0
    seed: int = 0


def _check_synth(cfg: SynthConfig) -> None:
    if min(cfg.num_recipes, cfg.num_actions, cfg.feat_dim, cfg.videos_per_recipe) < 1:
        raise ValueError("num_recipes, num_actions, feat_dim and videos_per_recipe must be >= 1")
    if not 1 <= cfg.min_segment <= cfg.max_segment:
        raise ValueError("need 1 <= min_segment <= max_segment")
    if not 1 <= cfg.min_transcript <= cfg.max_transcript:
        raise ValueError("need 1 <= min_transcript <= max_transcript")
    if cfg.noise_std < 0 or cfg.noise_dim_std < 0 or cfg.noise_dims < 0:
        raise ValueError("noise settings must be non-negative")
    if not 0.0 <= cfg.background_prob <= 1.0:
        raise ValueError("background_prob must be in [0, 1]")
    if cfg.num_actions < cfg.max_transcript + 1:
        raise ValueError(
            f"num_actions={cfg.num_actions} cannot hold transcripts of {cfg.max_transcript} "
            "distinct actions plus background"
        )


def _draw_transcripts(cfg: SynthConfig, rng: np.random.Generator) -> list[tuple]:
    pool = np.arange(1, cfg.num_actions)
    out = []
    for _ in range(cfg.num_recipes):
        L = int(rng.integers(cfg.min_transcript, cfg.max_transcript + 1))
        out.append(tuple(int(a) for a in rng.choice(pool, size=L, replace=False)))
    return out


def _identifiable(transcripts: list[tuple]) -> bool:
    # distinct action sets, and no action present in every recipe (an action
    # in every video carries no video-level localisation signal)
    sets = [frozenset(t) for t in transcripts]
    if len(set(sets)) < len(sets):
        return False
    return len(sets) < 2 or not frozenset.intersection(*sets)


def _recipe_transcripts(cfg: SynthConfig, rng: np.random.Generator, tries: int = 1000) -> list[tuple]:
    """Per-recipe transcripts, redrawn until identifiable (best effort)."""
    for _ in range(tries):
        transcripts = _draw_transcripts(cfg, rng)
        if _identifiable(transcripts):
            return transcripts
    return transcripts


def synth_generate(cfg: SynthConfig) -> Dataset:
    """Deterministic breakfast-like dataset with separable action centroids.

    Each recipe gets one fixed transcript of distinct non-background actions.
    Every video follows its recipe's transcript, with background segments
    inserted before, between and after actions with ``background_prob``.
    Frames are the action centroid (unit sphere) plus Gaussian noise, followed
    by ``noise_dims`` columns of pure noise.
    """
    _check_synth(cfg)
    rng = np.random.default_rng(cfg.seed)
    transcripts = _recipe_transcripts(cfg, rng)
    centroids = rng.normal(size=(cfg.num_actions, cfg.feat_dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)

    videos = []
    for recipe, base in enumerate(transcripts):
        for k in range(cfg.videos_per_recipe):
            seq: list[int] = []
            for a in base:
                if rng.random() < cfg.background_prob:
                    seq.append(BACKGROUND)
                seq.append(a)
            if rng.random() < cfg.background_prob:
                seq.append(BACKGROUND)
            lengths = rng.integers(cfg.min_segment, cfg.max_segment + 1, size=len(seq))
            labels = np.repeat(np.asarray(seq, dtype=np.int64), lengths)
            T = labels.size
            feats = centroids[labels] + rng.normal(scale=cfg.noise_std, size=(T, cfg.feat_dim)) \
                if cfg.noise_std > 0 else centroids[labels].copy()
            if cfg.noise_dims:
                extra = rng.normal(scale=cfg.noise_dim_std, size=(T, cfg.noise_dims))
                feats = np.concatenate([feats, extra], axis=1)
            videos.append(VideoSample(
                id=f"r{recipe:02d}_v{k:03d}",
                features=feats,
                recipe=recipe,
                action_set=frozenset(seq),
                transcript=tuple(seq),
                frame_labels=labels,
            ))
    grammar = {r: [tr] for r, tr in enumerate(transcripts)}
    return Dataset(cfg.feat_dim + cfg.noise_dims, cfg.num_actions, cfg.num_recipes, videos, grammar)


def collapse_runs(labels) -> tuple:
    """Run-length collapse of a frame labelling into its transcript."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return ()
    keep = np.concatenate([[True], labels[1:] != labels[:-1]])
    return tuple(int(a) for a in labels[keep])


# --------------------------------------------------------------------------
# persistence


def save_dataset(ds: Dataset, directory) -> None:
    root = Path(directory)
    (root / "features").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    records = []
    for v in ds.videos:
        feat_name = f"features/{v.id}.f64"
        label_name = f"labels/{v.id}.u16" if v.frame_labels is not None else None
        (root / feat_name).write_bytes(np.ascontiguousarray(v.features, dtype="<f8").tobytes())
        if label_name:
            (root / label_name).write_bytes(np.asarray(v.frame_labels, dtype="<u2").tobytes())
        records.append({
            "id": v.id,
            "recipe": int(v.recipe),
            "action_set": sorted(int(a) for a in v.action_set),
            "transcript": [int(a) for a in v.transcript],
            "T": int(v.num_frames),
            "features": feat_name,
            "labels": label_name,
        })
    manifest = {
        "version": MANIFEST_VERSION,
        "feat_dim": ds.feat_dim,
        "num_actions": ds.num_actions,
        "num_recipes": ds.num_recipes,
        "videos": records,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    (root / "grammar.txt").write_text(format_grammar(ds.grammar))


def load_dataset(directory) -> Dataset:
    root = Path(directory)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise ManifestMissingError(f"no manifest.json in {root}")
    try:
        manifest = json.loads(mpath.read_text())
        D, A, R = int(manifest["feat_dim"]), int(manifest["num_actions"]), int(manifest["num_recipes"])
        records = manifest["videos"]
    except (ValueError, KeyError, TypeError) as exc:
        raise DatasetError(f"malformed manifest {mpath}: {exc}") from None
    gpath = root / "grammar.txt"
    grammar = parse_grammar(gpath.read_text()) if gpath.is_file() else {}

    videos = []
    for rec in records:
        vid, T = rec["id"], int(rec["T"])
        fpath = root / rec["features"]
        if not fpath.is_file():
            raise MissingFileError(f"video {vid}: feature file {rec['features']} not found")
        raw = fpath.read_bytes()
        expected = T * D * 8
        if len(raw) != expected:
            raise FeatureLengthError(
                f"video {vid}: feature file has {len(raw)} bytes, expected {expected} (T={T}, D={D})"
            )
        feats = np.frombuffer(raw, dtype="<f8").reshape(T, D).astype(np.float64)
        labels = None
        if rec.get("labels"):
            lpath = root / rec["labels"]
            if not lpath.is_file():
                raise MissingFileError(f"video {vid}: label file {rec['labels']} not found")
            lraw = lpath.read_bytes()
            if len(lraw) != T * 2:
                raise FeatureLengthError(
                    f"video {vid}: label file has {len(lraw)} bytes, expected {T * 2}"
                )
            labels = np.frombuffer(lraw, dtype="<u2").astype(np.int64)
            if labels.size and labels.max() >= A:
                raise LabelRangeError(f"video {vid}: frame label {int(labels.max())} >= num_actions {A}")
        recipe = int(rec["recipe"])
        ids = list(rec["transcript"]) + list(rec["action_set"])
        if not 0 <= recipe < R:
            raise LabelRangeError(f"video {vid}: recipe {recipe} outside [0, {R})")
        if any(not 0 <= int(a) < A for a in ids):
            raise LabelRangeError(f"video {vid}: action id outside [0, {A})")
        videos.append(VideoSample(
            id=vid,
            features=feats,
            recipe=recipe,
            action_set=frozenset(int(a) for a in rec["action_set"]),
            transcript=tuple(int(a) for a in rec["transcript"]),
            frame_labels=labels,
        ))
    return Dataset(D, A, R, videos, grammar)


# --------------------------------------------------------------------------
# splitting


def split(ds: Dataset, train_fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified train/val/test split.

    Per recipe, ``floor(train_fraction * n)`` videos (clamped to leave two)
    go to train and the rest is halved. When the remainder is odd the spare
    video alternates between val and test from one recipe to the next, so
    overall val and test sizes stay balanced.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    groups: dict[int, list] = {}
    for v in ds.videos:
        groups.setdefault(v.recipe, []).append(v)
    train, val, test = [], [], []
    odd = 0
    for recipe in sorted(groups):
        vids = groups[recipe]
        if len(vids) < 3:
            raise ValueError(f"recipe {recipe} has {len(vids)} videos; need at least 3 to stratify")
        order = rng.permutation(len(vids))
        n = len(vids)
        n_train = min(max(1, int(np.floor(train_fraction * n + 1e-9))), n - 2)
        rest = n - n_train
        n_val = rest // 2
        if rest % 2:
            n_val += 1 - odd
            odd ^= 1
        picked = [vids[i] for i in order]
        train += picked[:n_train]
        val += picked[n_train:n_train + n_val]
        test += picked[n_train + n_val:]
    return ds.subset(train), ds.subset(val), ds.subset(test)
