"""Proportional prioritized replay over a fixed-capacity ring."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientData


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool
    aux_target: float
    priority: float = 1.0


class ReplayBuffer:
    """Sampling probability of item i is p_i^alpha / sum_j p_j^alpha.

    With ``uniform=True`` every stored item is equally likely and importance
    weights are all one.
    """

    def __init__(self, capacity: int, obs_dim: int, alpha: float = 0.6, p_min: float = 1e-3,
                 uniform: bool = False):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.alpha = float(alpha)
        self.p_min = float(p_min)
        self.uniform = bool(uniform)
        self.obs = np.zeros((self.capacity, self.obs_dim), dtype=np.float32)
        self.next_obs = np.zeros((self.capacity, self.obs_dim), dtype=np.float32)
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity, dtype=np.float64)
        self.dones = np.zeros(self.capacity, dtype=bool)
        self.aux = np.zeros(self.capacity, dtype=np.float64)
        self.priorities = np.zeros(self.capacity, dtype=np.float64)
        self.size = 0
        self.cursor = 0
        self.max_priority = 1.0

    def __len__(self) -> int:
        return self.size

    def push(self, obs, action: int, reward: float, next_obs, done: bool, aux_target: float,
             priority: float | None = None) -> int:
        i = self.cursor
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.actions[i] = int(action)
        self.rewards[i] = float(reward)
        self.dones[i] = bool(done)
        self.aux[i] = float(aux_target)
        p = self.max_priority if priority is None else float(priority)
        if not p > 0:
            raise ValueError("priority must be positive")
        self.priorities[i] = p
        self.max_priority = max(self.max_priority, p)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def add(self, t: Transition) -> int:
        return self.push(t.state, t.action, t.reward, t.next_state, t.done, t.aux_target, t.priority)

    def get(self, i: int) -> Transition:
        return Transition(
            self.obs[i].copy(), int(self.actions[i]), float(self.rewards[i]),
            self.next_obs[i].copy(), bool(self.dones[i]), float(self.aux[i]),
            float(self.priorities[i]),
        )

    def probabilities(self) -> np.ndarray:
        n = self.size
        if self.uniform:
            return np.full(n, 1.0 / n)
        w = self.priorities[:n] ** self.alpha
        return w / w.sum()

    def sample(self, batch: int, rng: np.random.Generator, beta: float = 0.4):
        """Draw ``batch`` indices with replacement; return (indices, importance weights)."""
        if self.size < batch or self.size == 0:
            raise InsufficientData(f"buffer holds {self.size} items, batch needs {batch}")
        probs = self.probabilities()
        idx = rng.choice(self.size, size=batch, replace=True, p=probs)
        if self.uniform:
            return idx, np.ones(batch)
        w = (self.size * probs[idx]) ** (-beta)
        w_max = (self.size * probs.min()) ** (-beta)
        return idx, w / w_max

    def update_priorities(self, idx, td_errors) -> None:
        p = np.abs(np.asarray(td_errors, dtype=np.float64)) + self.p_min
        self.priorities[np.asarray(idx)] = p
        self.max_priority = max(self.max_priority, float(p.max()))


def buffer_sample(buffer: ReplayBuffer, batch: int, rng: np.random.Generator, beta: float = 0.4):
    idx, w = buffer.sample(batch, rng, beta)
    return [buffer.get(i) for i in idx], w
