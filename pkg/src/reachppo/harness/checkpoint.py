"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    magic        8 bytes   b"REACHPPO"
    version      uint32    FORMAT_VERSION
    meta_len     uint32    length of the UTF-8 JSON metadata block
    meta         bytes     JSON: obs_dim, act_dim, hidden, variant, task, ppo config
    n_arrays     uint32
    shape table  per array: uint16 name length, name (UTF-8), uint8 ndim, ndim x uint32 dims
    payload      float64 little-endian values of every array, in table order
    crc32        uint32    zlib.crc32 of everything above

No RNG state is stored; a checkpoint describes parameters only.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..netcore import GaussianPolicy, Mlp
from ..ppo import PpoAgent, PpoConfig, RunningNorm

MAGIC = b"REACHPPO"
FORMAT_VERSION = 1
LAYER_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


class CheckpointFormatError(ValueError):
    """The file is not a readable checkpoint, or does not fit the task."""


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def obs_dim(self) -> int:
        return int(self.meta["obs_dim"])


def checkpoint_from_agent(agent: PpoAgent, **meta) -> Checkpoint:
    arrays = {}
    for name, a in zip(LAYER_NAMES, agent.actor.mean_net.arrays()):
        arrays[f"actor.{name}"] = a.copy()
    arrays["actor.log_spread"] = agent.actor.log_spread.copy()
    for name, a in zip(LAYER_NAMES, agent.critic.arrays()):
        arrays[f"critic.{name}"] = a.copy()
    if agent.norm is not None:
        arrays["norm.mean"] = agent.norm.mean.copy()
        arrays["norm.var"] = agent.norm.var.copy()
        arrays["norm.count"] = np.array([agent.norm.count])
        arrays["norm.clip"] = np.array([agent.norm.clip])
    info = {
        "obs_dim": agent.obs_dim,
        "act_dim": agent.act_dim,
        "hidden": agent.config.hidden,
        "ppo": agent.config.to_dict(),
        "action_low": agent.low.tolist(),
        "action_high": agent.high.tolist(),
    }
    info.update(meta)
    return Checkpoint(arrays, info)


def agent_from_checkpoint(ckpt: Checkpoint, obs_dim: int | None = None) -> PpoAgent:
    """Rebuild an agent; ``obs_dim`` guards against loading into the wrong task."""
    if obs_dim is not None and obs_dim != ckpt.obs_dim:
        raise CheckpointFormatError(
            f"checkpoint expects {ckpt.obs_dim}-wide observations but the task produces {obs_dim}")
    cfg = PpoConfig(**ckpt.meta["ppo"])
    agent = PpoAgent(ckpt.obs_dim, int(ckpt.meta["act_dim"]), cfg, rng=np.random.default_rng(0),
                     low=ckpt.meta.get("action_low", -3.14), high=ckpt.meta.get("action_high", 3.14))
    a = ckpt.arrays
    try:
        actor = Mlp([a["actor.W1"], a["actor.W2"], a["actor.W3"]], [a["actor.b1"], a["actor.b2"], a["actor.b3"]])
        agent.actor = GaussianPolicy(actor, a["actor.log_spread"])
        agent.critic = Mlp([a["critic.W1"], a["critic.W2"], a["critic.W3"]],
                           [a["critic.b1"], a["critic.b2"], a["critic.b3"]])
    except (KeyError, ValueError) as exc:
        raise CheckpointFormatError(f"checkpoint arrays inconsistent: {exc}") from exc
    if actor.in_dim != ckpt.obs_dim:
        raise CheckpointFormatError("actor input width disagrees with metadata")
    if "norm.mean" in a:
        agent.norm = RunningNorm(ckpt.obs_dim, clip=float(a["norm.clip"][0]))
        agent.norm.mean, agent.norm.var = a["norm.mean"], a["norm.var"]
        agent.norm.count = float(a["norm.count"][0])
    else:
        agent.norm = None
    agent.reset_optimizers()
    return agent


def checkpoint_save(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    meta = json.dumps(ckpt.meta, sort_keys=True).encode("utf-8")
    head = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta)), meta,
            struct.pack("<I", len(ckpt.arrays))]
    payload = []
    for name, arr in ckpt.arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        nb = name.encode("utf-8")
        head.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim)
                    + struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload.append(arr.astype("<f8").tobytes())
    blob = b"".join(head + payload)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob + struct.pack("<I", zlib.crc32(blob)))
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError("checkpoint truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def checkpoint_load(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint (bad magic)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    r = _Reader(body)
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported format version {version}")
    if zlib.crc32(body) != crc:
        raise CheckpointFormatError(f"{path}: checksum mismatch (truncated or corrupt)")
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable metadata") from exc
    (n,) = r.unpack("<I")
    table = []
    for _ in range(n):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode("utf-8")
        (ndim,) = r.unpack("<B")
        table.append((name, r.unpack(f"<{ndim}I")))
    arrays = {}
    for name, shape in table:
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(body):
        raise CheckpointFormatError(f"{path}: trailing bytes after payload")
    return Checkpoint(arrays, meta)


def describe(ckpt: Checkpoint) -> str:
    """Human-readable summary of a checkpoint's metadata and shape table."""
    lines = [f"format version {FORMAT_VERSION}"]
    for k in sorted(ckpt.meta):
        if k != "ppo":
            lines.append(f"{k}: {ckpt.meta[k]}")
    lines.append("ppo: " + ", ".join(f"{k}={v}" for k, v in sorted(ckpt.meta.get("ppo", {}).items())))
    total = 0
    for name, arr in ckpt.arrays.items():
        lines.append(f"  {name:18s} {'x'.join(map(str, arr.shape)) or 'scalar'}")
        total += arr.size
    lines.append(f"total parameters: {total}")
    return "\n".join(lines)
