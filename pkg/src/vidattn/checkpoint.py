"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"WATN"                      magic
    uint32 format_version
    uint32 text_length
    text_length bytes UTF-8      key=value lines: dims.*, config.*, epoch, history
    float64[...]                 parameters in ``net.PARAM_FIELDS`` order, row-major

History lines are ``history=<epoch>,<split>,<name>,<value>`` with ``repr``
floats, so every number round-trips exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .net import PARAM_FIELDS, ModelDims, ModelParams
from .optim import TrainConfig

MAGIC = b"WATN"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    def __init__(self, expected: int, actual: int):
        self.expected, self.actual = expected, actual
        super().__init__(f"checkpoint truncated: expected {expected} bytes, found {actual}")


@dataclass
class Checkpoint:
    params: ModelParams
    dims: ModelDims
    config: TrainConfig
    epoch: int
    metric_history: list = field(default_factory=list)  # (epoch, split, name, value)
    format_version: int = FORMAT_VERSION

    def history_series(self, split: str, name: str) -> tuple[np.ndarray, np.ndarray]:
        rows = [(e, v) for e, s, n, v in self.metric_history if s == split and n == name]
        if not rows:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        e, v = zip(*rows)
        return np.asarray(e), np.asarray(v, dtype=np.float64)


def _text_block(ckpt: Checkpoint) -> str:
    lines = [f"dims.{f.name}={getattr(ckpt.dims, f.name)}" for f in fields(ModelDims)]
    lines += [f"config.{line}" for line in ckpt.config.to_lines()]
    lines.append(f"epoch={ckpt.epoch}")
    for epoch, split, name, value in ckpt.metric_history:
        lines.append(f"history={int(epoch)},{split},{name},{float(value)!r}")
    return "\n".join(lines) + "\n"


def to_bytes(ckpt: Checkpoint) -> bytes:
    text = _text_block(ckpt).encode("utf-8")
    parts = [_HEADER.pack(MAGIC, ckpt.format_version, len(text)), text]
    arrays = ckpt.params.arrays()
    shapes = ckpt.dims.shapes()
    for name in PARAM_FIELDS:
        arr = arrays[name]
        if arr.shape != shapes[name]:
            raise CheckpointError(f"parameter {name} has shape {arr.shape}, dims say {shapes[name]}")
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def from_bytes(raw: bytes) -> Checkpoint:
    if len(raw) < 4:
        raise TruncatedCheckpointError(_HEADER.size, len(raw))
    if raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedCheckpointError(_HEADER.size, len(raw))
    _, version, text_len = _HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    text_end = _HEADER.size + text_len
    if len(raw) < text_end:
        raise TruncatedCheckpointError(text_end, len(raw))
    try:
        text = raw[_HEADER.size:text_end].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"corrupt text block: {exc}") from None

    dims_kw, config_kw, history, epoch = {}, {}, [], None
    try:
        for line in text.splitlines():
            key, sep, value = line.partition("=")
            if not sep:
                raise CheckpointError(f"corrupt text line {line!r}")
            if key.startswith("dims."):
                dims_kw[key[5:]] = int(value)
            elif key.startswith("config."):
                config_kw[key[7:]] = value
            elif key == "epoch":
                epoch = int(value)
            elif key == "history":
                e, split, name, v = value.split(",")
                history.append((int(e), split, name, float(v)))
            else:
                raise CheckpointError(f"unknown checkpoint key {key!r}")
    except ValueError as exc:
        raise CheckpointError(f"corrupt text block: {exc}") from None
    try:
        dims = ModelDims(**dims_kw)
        config = TrainConfig.from_mapping(config_kw)
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from None
    if epoch is None:
        raise CheckpointError("checkpoint has no epoch field")

    shapes = dims.shapes()
    expected = text_end + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(raw) != expected:
        if len(raw) < expected:
            raise TruncatedCheckpointError(expected, len(raw))
        raise CheckpointError(f"checkpoint has {len(raw) - expected} trailing bytes")
    arrays, offset = {}, text_end
    for name in PARAM_FIELDS:
        n = int(np.prod(shapes[name]))
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shapes[name]).astype(np.float64)
        offset += 8 * n
    return Checkpoint(ModelParams(**arrays), dims, config, epoch, history, version)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint {p} not found")
    return from_bytes(p.read_bytes())
