"""Demonstrations from a greedy geometric oracle and behavior-cloning pretraining."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .agent.dqn import encode_state
from .agent.network import Adam, QNetwork, param_shapes
from .binio import Reader
from .env import ACTIONS, Action, EnvConfig, PlaneEnv, StartSampler
from .errors import EmptyDemoSet, FormatError
from .geom import TangentPoint
from .volume import Volume

DEMO_MAGIC = b"SPDEM1"


def oracle_action(cur: TangentPoint, target: TangentPoint, step_size: float) -> Action:
    """Action whose move leaves the tangent point closest to the target.

    Ties go to the earliest action in X+, X-, Y+, Y-, Z+, Z- order.
    """
    c = cur.as_array()
    g = target.as_array()
    best, best_d = ACTIONS[0], np.inf
    for a in ACTIONS:
        nxt = c.copy()
        nxt[a.axis] += a.sign * step_size
        d = float(np.linalg.norm(nxt - g))
        if d < best_d:
            best, best_d = a, d
    return best


@dataclass
class Demonstration:
    tangents: list = field(default_factory=list)  # tangent point before each action
    step_sizes: list = field(default_factory=list)
    observations: list = field(default_factory=list)  # encoded network inputs
    actions: list = field(default_factory=list)  # action indices
    final_tangent: TangentPoint | None = None

    def __len__(self) -> int:
        return len(self.actions)


def run_oracle_episode(env: PlaneEnv, start: TangentPoint, factor: int, pose_scale: float,
                       max_steps: int | None = None) -> Demonstration:
    """Follow the oracle from ``start``; shrink the step whenever nothing improves."""
    cfg = env.cfg
    goal = env.vol.gt_tangent
    g = goal.as_array()
    limit = cfg.max_steps if max_steps is None else max_steps
    state = env.reset(start)
    demo = Demonstration()
    while state.step_index < limit:
        t = state.tangent.as_array()
        dist = float(np.linalg.norm(t - g))
        if dist <= cfg.step_floor:
            break
        a = oracle_action(state.tangent, goal, state.step_size)
        nxt = env.move(state.tangent, a, state.step_size).as_array()
        if not np.linalg.norm(nxt - g) < dist:
            if state.step_size <= cfg.step_floor:
                break
            state = env.with_step_size(state, state.step_size * cfg.step_shrink)
            continue
        demo.tangents.append(state.tangent)
        demo.step_sizes.append(state.step_size)
        demo.observations.append(encode_state(state, factor, pose_scale))
        demo.actions.append(a.index)
        state = env.step(state, a).state
    demo.final_tangent = state.tangent
    return demo


def generate_demos(vol: Volume, count: int, seed: int, sampler: StartSampler,
                   env_cfg: EnvConfig | None = None, factor: int = 2,
                   pose_scale: float = 32.0) -> list[Demonstration]:
    env = PlaneEnv(vol, env_cfg)
    rng = np.random.default_rng(seed)
    return [run_oracle_episode(env, sampler.sample(rng), factor, pose_scale) for _ in range(count)]


def demo_arrays(demos) -> tuple[np.ndarray, np.ndarray]:
    obs = [o for d in demos for o in d.observations]
    acts = [a for d in demos for a in d.actions]
    if not obs:
        raise EmptyDemoSet("no state-action pairs in the demonstrations")
    return np.stack(obs).astype(np.float64), np.asarray(acts, dtype=np.int64)


def cross_entropy(logits: np.ndarray, actions: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(len(actions))
    loss = float(-logp[rows, actions].mean())
    grad = np.exp(logp)
    grad[rows, actions] -= 1.0
    return loss, grad / len(actions)


def pretrain(net: QNetwork, demos, epochs: int = 10, lr: float = 1e-3, batch: int = 32,
             seed: int = 0, callback: Callable[[int, float], None] | None = None) -> QNetwork:
    """Behavior cloning on the Q-outputs treated as class logits; returns a trained copy."""
    if not demos:
        raise EmptyDemoSet("pretraining needs at least one demonstration")
    obs, acts = demo_arrays(demos)
    out = net.copy()
    opt = Adam(param_shapes(out.sizes), lr)
    rng = np.random.default_rng(seed)
    zeros = np.zeros(batch)
    for epoch in range(epochs):
        order = rng.permutation(len(acts))
        total = 0.0
        for lo in range(0, len(order), batch):
            idx = order[lo : lo + batch]
            _, _, q, _, cache = out.heads(obs[idx])
            loss, dq = cross_entropy(q, acts[idx])
            grads = out.backward(cache, dq, zeros[: len(idx)])
            opt.step(out.params, grads)
            total += loss * len(idx)
        if callback is not None:
            callback(epoch, total / len(acts))
    return out


def agreement(net: QNetwork, demos) -> float:
    """Fraction of demo pairs where the network's argmax matches the oracle."""
    obs, acts = demo_arrays(demos)
    q, _ = net.forward(obs)
    return float(np.mean(np.argmax(q, axis=1) == acts))


# ---------------------------------------------------------------------------
# sidecar file


def save_demos(demos, path) -> None:
    dim = len(demos[0].observations[0]) if demos and demos[0].observations else 0
    parts = [DEMO_MAGIC, struct.pack("<II", len(demos), dim)]
    for d in demos:
        parts.append(struct.pack("<I", len(d)))
        for t, s, o, a in zip(d.tangents, d.step_sizes, d.observations, d.actions):
            parts.append(struct.pack("<4d", *t.as_array(), s))
            parts.append(np.asarray(o, dtype="<f4").tobytes())
            parts.append(struct.pack("<B", a))
    Path(path).write_bytes(b"".join(parts))


def load_demos(path) -> list[Demonstration]:
    r = Reader(Path(path).read_bytes())
    if r.take(len(DEMO_MAGIC)) != DEMO_MAGIC:
        raise FormatError("not a demonstration file (bad magic)")
    count, dim = r.unpack("<II")
    demos = []
    for _ in range(count):
        (n,) = r.unpack("<I")
        d = Demonstration()
        for _ in range(n):
            tx, ty, tz, s = r.unpack("<4d")
            d.tangents.append(TangentPoint(tx, ty, tz))
            d.step_sizes.append(s)
            d.observations.append(r.array("<f4", dim))
            (a,) = r.unpack("<B")
            if a >= len(ACTIONS):
                raise FormatError(f"invalid action id {a}")
            d.actions.append(a)
        demos.append(d)
    r.done()
    return demos
