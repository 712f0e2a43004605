"""Binary checkpoint format for a :class:`DQNAgent`.

Layout (little-endian): magic ``SPAGT1``, u32 version, u32 count + u32 layer
sizes, then f64 blobs for the online weights, target weights, Adam first and
second moments (each in parameter declaration order), u64 Adam step,
u64 global step, f64 epsilon.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..binio import Reader
from .dqn import AgentConfig, DQNAgent
from .network import PARAM_NAMES, QNetwork, param_shapes

CHECKPOINT_MAGIC = b"SPAGT1"
CHECKPOINT_VERSION = 1


def _blob(params: dict[str, np.ndarray]) -> bytes:
    return b"".join(params[k].astype("<f8").tobytes() for k in PARAM_NAMES)


def save_checkpoint(agent: DQNAgent, path) -> None:
    sizes = agent.net.sizes
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack(f"<I{len(sizes)}I", len(sizes), *sizes),
        _blob(agent.net.params),
        _blob(agent.target.params),
        _blob(agent.opt.m),
        _blob(agent.opt.v),
        struct.pack("<Q", agent.opt.t),
        struct.pack("<Q", agent.global_step),
        struct.pack("<d", agent.epsilon),
    ]
    Path(path).write_bytes(b"".join(parts))


def _read_params(r: Reader, sizes) -> dict[str, np.ndarray]:
    out = {}
    for name, shape in param_shapes(sizes).items():
        out[name] = r.array("<f8", int(np.prod(shape))).reshape(shape)
    return out


def load_checkpoint(path, cfg: AgentConfig | None = None, with_buffer: bool = False) -> DQNAgent:
    """Rebuild an agent; ``cfg`` must agree with the stored hidden widths."""
    r = Reader(Path(path).read_bytes())
    if r.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    (version,) = r.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (n,) = r.unpack("<I")
    if n != 4:
        raise FormatError(f"unexpected architecture descriptor of length {n}")
    sizes = r.unpack(f"<{n}I")
    net_p = _read_params(r, sizes)
    tgt_p = _read_params(r, sizes)
    m = _read_params(r, sizes)
    v = _read_params(r, sizes)
    (adam_t,) = r.unpack("<Q")
    (global_step,) = r.unpack("<Q")
    (eps,) = r.unpack("<d")
    r.done()

    cfg = cfg or AgentConfig(hidden=(sizes[1], sizes[2]))
    if tuple(cfg.hidden) != (sizes[1], sizes[2]):
        raise FormatError(f"checkpoint hidden widths {sizes[1:3]} differ from config {cfg.hidden}")
    agent = DQNAgent(cfg, sizes[0], net=QNetwork(sizes, net_p), with_buffer=with_buffer)
    agent.target = QNetwork(sizes, tgt_p)
    agent.opt.m = m
    agent.opt.v = v
    agent.opt.t = int(adam_t)
    agent.global_step = int(global_step)
    agent.epsilon = float(eps)
    return agent
