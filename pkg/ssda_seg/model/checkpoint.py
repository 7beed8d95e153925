"""Binary checkpoint holding the student and teacher parameter sets.

Layout (little-endian): magic ``SSDACKPT``, u32 version, u32 tensor count,
then per tensor: u16 name length, UTF-8 name, u8 rank, u64 dims, u8 dtype
tag (0 = f32) and the raw f32 data. Names carry a ``student.`` or
``teacher.`` prefix; norm running statistics are stored as
``<norm>.running_mean`` / ``<norm>.running_var``.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from pathlib import Path

import numpy as np

from ssda_seg.diffcore import ParamSet, RunningStats
from ssda_seg.errors import IntegrityError, StateError

from .ema import ModelPair

log = logging.getLogger(__name__)

MAGIC = b"SSDACKPT"
VERSION = 1
DTYPE_F32 = 0
ROLES = ("student", "teacher")
STAT_SUFFIXES = (".running_mean", ".running_var")


def _tensors(params: ParamSet) -> list[tuple[str, np.ndarray]]:
    entries = [(name, tensor.data) for name, tensor in params.items()]
    for norm, stats in sorted(params.stats.items()):
        entries.append((f"{norm}.running_mean", stats.mean))
        entries.append((f"{norm}.running_var", stats.var))
    return entries


def encode_checkpoint(pair: ModelPair) -> bytes:
    entries = [
        (f"{role}.{name}", data)
        for role, params in zip(ROLES, (pair.student, pair.teacher), strict=True)
        for name, data in _tensors(params)
    ]
    chunks = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, data in entries:
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<B", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        chunks.append(struct.pack("<B", DTYPE_F32))
        chunks.append(np.ascontiguousarray(data, dtype="<f4").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.payload):
            msg = f"checkpoint truncated at byte {self.offset}"
            raise IntegrityError(msg)
        chunk = self.payload[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple[int, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(payload: bytes) -> ModelPair:
    reader = _Reader(payload)
    if reader.take(len(MAGIC)) != MAGIC:
        msg = "not a checkpoint: bad magic"
        raise IntegrityError(msg)
    version, count = reader.unpack("<II")
    if version != VERSION:
        msg = f"unsupported checkpoint version {version}"
        raise IntegrityError(msg)

    sets = {role: ParamSet() for role in ROLES}
    pending_stats: dict[tuple[str, str], dict[str, np.ndarray]] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        dims = reader.unpack(f"<{rank}Q")
        (tag,) = reader.unpack("<B")
        if tag != DTYPE_F32:
            msg = f"tensor {name}: unknown dtype tag {tag}"
            raise IntegrityError(msg)
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(reader.take(4 * size), dtype="<f4").astype(np.float32)
        data = data.reshape(dims)

        role, _, local = name.partition(".")
        if role not in sets:
            msg = f"tensor {name}: prefix must be one of {', '.join(ROLES)}"
            raise IntegrityError(msg)
        suffix = next((s for s in STAT_SUFFIXES if local.endswith(s)), None)
        if suffix is None:
            sets[role].add(local, data)
        else:
            norm = local[: -len(suffix)]
            pending_stats.setdefault((role, norm), {})[suffix] = data

    for (role, norm), parts in pending_stats.items():
        if set(parts) != set(STAT_SUFFIXES):
            msg = f"{role}.{norm}: incomplete running statistics"
            raise IntegrityError(msg)
        sets[role].stats[norm] = RunningStats(
            parts[".running_mean"], parts[".running_var"]
        )

    sets["student"].check_compatible(sets["teacher"])
    sets["teacher"].requires_grad_(False)
    return ModelPair(sets["student"], sets["teacher"])


def save_checkpoint(path: Path, pair: ModelPair) -> str:
    """Write the checkpoint atomically; returns its sha256 hex digest."""
    payload = encode_checkpoint(pair)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)
    digest = hashlib.sha256(payload).hexdigest()
    log.info(f"wrote checkpoint {path} (sha256 {digest[:12]})")
    return digest


def load_checkpoint(path: Path) -> ModelPair:
    if not path.exists():
        msg = f"checkpoint {path} does not exist"
        raise StateError(msg)
    return decode_checkpoint(path.read_bytes())


def checkpoint_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()
