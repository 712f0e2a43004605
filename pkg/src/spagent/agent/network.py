"""Compact dueling Q-network with an auxiliary similarity head, in plain numpy.

Architecture: input -> FC(h1) -> ReLU -> FC(h2) -> ReLU -> three heads
(value: 1, advantage: n_actions, aux: 1 squashed by tanh).
Gradients are written out by hand; see ``backward``.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch

PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wv", "bv", "Wa", "ba", "Ws", "bs")


def param_shapes(sizes) -> dict[str, tuple[int, ...]]:
    n_in, h1, h2, n_act = (int(s) for s in sizes)
    return {
        "W1": (n_in, h1),
        "b1": (h1,),
        "W2": (h1, h2),
        "b2": (h2,),
        "Wv": (h2, 1),
        "bv": (1,),
        "Wa": (h2, n_act),
        "ba": (n_act,),
        "Ws": (h2, 1),
        "bs": (1,),
    }


class QNetwork:
    def __init__(self, sizes, params: dict[str, np.ndarray] | None = None, rng=None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) != 4:
            raise ShapeMismatch(f"expected (n_in, h1, h2, n_actions), got {self.sizes}")
        shapes = param_shapes(self.sizes)
        if params is None:
            rng = np.random.default_rng(0) if rng is None else rng
            params = {}
            for name in PARAM_NAMES:
                shape = shapes[name]
                if name.startswith("b"):
                    params[name] = np.zeros(shape)
                elif name in ("W1", "W2"):
                    params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[0]), size=shape)
                else:
                    params[name] = rng.normal(0.0, np.sqrt(1.0 / shape[0]), size=shape)
        self.params = {}
        for name in PARAM_NAMES:
            p = np.array(params[name], dtype=np.float64)
            if p.shape != shapes[name]:
                raise ShapeMismatch(f"{name}: expected {shapes[name]}, got {p.shape}")
            self.params[name] = p

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_actions(self) -> int:
        return self.sizes[3]

    def copy(self) -> "QNetwork":
        return QNetwork(self.sizes, {k: v.copy() for k, v in self.params.items()})

    def load_from(self, other: "QNetwork") -> None:
        if other.sizes != self.sizes:
            raise ShapeMismatch(f"architectures differ: {other.sizes} vs {self.sizes}")
        for k in PARAM_NAMES:
            np.copyto(self.params[k], other.params[k])

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_inputs:
            raise ShapeMismatch(f"expected input of width {self.n_inputs}, got {x.shape}")
        return x

    def heads(self, x):
        """Return (value, advantage, q, score, cache) for a batch."""
        p = self.params
        x = self._check_input(x)
        z1 = x @ p["W1"] + p["b1"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ p["W2"] + p["b2"]
        h2 = np.maximum(z2, 0.0)
        value = h2 @ p["Wv"] + p["bv"]
        adv = h2 @ p["Wa"] + p["ba"]
        q = value + adv - adv.mean(axis=1, keepdims=True)
        score = np.tanh((h2 @ p["Ws"] + p["bs"])[:, 0])
        return value[:, 0], adv, q, score, (x, z1, h1, z2, h2, score)

    def forward(self, x):
        """(q, score) for a batch (or a single input, returned without batch axis)."""
        single = np.ndim(x) == 1
        _, _, q, score, _ = self.heads(x)
        if single:
            return q[0], float(score[0])
        return q, score

    def backward(self, cache, dq: np.ndarray, dscore: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given upstream gradients on q (B, A) and score (B,)."""
        p = self.params
        x, z1, h1, z2, h2, score = cache
        dq = np.asarray(dq, dtype=np.float64)
        dscore = np.asarray(dscore, dtype=np.float64).reshape(-1)
        # q_a = v + a_a - mean(a)
        dv = dq.sum(axis=1, keepdims=True)
        da = dq - dq.mean(axis=1, keepdims=True)
        dzs = (dscore * (1.0 - score * score))[:, None]
        g = {
            "Wv": h2.T @ dv,
            "bv": dv.sum(axis=0),
            "Wa": h2.T @ da,
            "ba": da.sum(axis=0),
            "Ws": h2.T @ dzs,
            "bs": dzs.sum(axis=0),
        }
        dh2 = dv @ p["Wv"].T + da @ p["Wa"].T + dzs @ p["Ws"].T
        dz2 = dh2 * (z2 > 0)
        g["W2"] = h1.T @ dz2
        g["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ p["W2"].T
        dz1 = dh1 * (z1 > 0)
        g["W1"] = x.T @ dz1
        g["b1"] = dz1.sum(axis=0)
        return g


class Adam:
    def __init__(self, shapes: dict[str, tuple], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for k in PARAM_NAMES:
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[k] -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)
