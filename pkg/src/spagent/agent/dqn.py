"""Dueling double DQN with prioritized replay and the NCC-regression auxiliary loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import N_ACTIONS, N_FRAMES, ACTIONS, Action, EnvState
from ..errors import ConfigError, InsufficientData
from ..imaging import downsample
from .network import Adam, QNetwork, param_shapes
from .replay import ReplayBuffer, Transition


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.85
    delta: float = 0.5  # weight of the auxiliary loss
    lr: float = 5e-5
    batch: int = 32
    target_sync: int = 1800  # gradient steps between target copies
    eps_start: float = 0.6
    eps_end: float = 0.05
    eps_decay_steps: int = 10_000
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    p_min: float = 1e-3
    capacity: int = 15_000
    hidden: tuple[int, int] = (128, 128)
    downsample: int = 2
    pose_scale: float = 32.0  # mm; tangent coordinates are divided by this
    uniform_replay: bool = False
    warmup: int = 500  # transitions collected before the first gradient step

    def validate(self) -> None:
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.batch < 1 or self.capacity < self.batch:
            raise ConfigError("need 1 <= batch <= capacity")
        if self.target_sync < 1:
            raise ConfigError("target_sync must be >= 1")
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ConfigError("need 0 <= eps_end <= eps_start <= 1")
        if self.downsample < 1:
            raise ConfigError("downsample must be >= 1")
        if not self.pose_scale > 0:
            raise ConfigError("pose_scale must be positive")


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 0.6
    end: float = 0.05
    decay_steps: int = 10_000

    def __call__(self, step: int) -> float:
        if self.decay_steps <= 0 or step >= self.decay_steps:
            return self.end
        frac = step / self.decay_steps
        return self.start + frac * (self.end - self.start)


def obs_dim(extent: int, factor: int) -> int:
    side = extent // factor
    return N_FRAMES * side * side + 4


def encode_state(state: EnvState, factor: int, pose_scale: float) -> np.ndarray:
    """Network input: the three downsampled frames plus pose and step size."""
    frames = [downsample(f, factor).ravel() for f in state.frames]
    pose = state.tangent.as_array() / pose_scale
    return np.concatenate(frames + [pose, [state.step_size]]).astype(np.float32)


def select_action(net: QNetwork, obs, eps: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    if eps > 0 and rng.random() < eps:
        return ACTIONS[int(rng.integers(N_ACTIONS))]
    q, _ = net.forward(np.asarray(obs, dtype=np.float64))
    return ACTIONS[int(np.argmax(q))]


def td_targets(net: QNetwork, target_net: QNetwork, rewards, next_obs, dones, gamma: float):
    """Double-DQN targets: the online net picks a', the target net scores it."""
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    q_next, _ = net.forward(np.asarray(next_obs, dtype=np.float64).reshape(len(rewards), -1))
    a_star = np.argmax(q_next, axis=1)
    q_tgt, _ = target_net.forward(np.asarray(next_obs, dtype=np.float64).reshape(len(rewards), -1))
    boot = q_tgt[np.arange(len(rewards)), a_star]
    return np.where(dones, rewards, rewards + gamma * boot)


def td_target(t: Transition, net: QNetwork, target_net: QNetwork, gamma: float) -> float:
    if t.done:
        return float(t.reward)
    return float(td_targets(net, target_net, [t.reward], t.next_state[None, :], [False], gamma)[0])


def dqn_loss(net: QNetwork, obs, actions, targets, aux_targets, weights, delta: float):
    """Loss terms and gradients with the TD targets held fixed.

    L_Q = mean_i w_i (y_i - Q(s_i, a_i))^2,  L_A = mean_i (g_i - score_i)^2,
    L = L_Q + delta * L_A.  Returns (l_q, l_a, total, td_errors, grads).
    """
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    aux_targets = np.asarray(aux_targets, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    b = len(actions)
    _, _, q, score, cache = net.heads(obs)
    rows = np.arange(b)
    td = targets - q[rows, actions]
    res = aux_targets - score
    l_q = float(np.mean(weights * td * td))
    l_a = float(np.mean(res * res))
    dq = np.zeros_like(q)
    dq[rows, actions] = -2.0 * weights * td / b
    dscore = -2.0 * delta * res / b
    grads = net.backward(cache, dq, dscore)
    return l_q, l_a, l_q + delta * l_a, td, grads


class DQNAgent:
    """Online/target network pair, optimizer, replay buffer and counters."""

    def __init__(self, cfg: AgentConfig, n_inputs: int, seed: int = 0,
                 net: QNetwork | None = None, with_buffer: bool = True):
        cfg.validate()
        self.cfg = cfg
        sizes = (n_inputs, cfg.hidden[0], cfg.hidden[1], N_ACTIONS)
        self.net = net.copy() if net is not None else QNetwork(sizes, rng=np.random.default_rng(seed))
        if self.net.sizes != sizes:
            raise ConfigError(f"network sizes {self.net.sizes} do not match config {sizes}")
        self.target = self.net.copy()
        self.opt = Adam(param_shapes(sizes), cfg.lr)
        self.epsilon_schedule = EpsilonSchedule(cfg.eps_start, cfg.eps_end, cfg.eps_decay_steps)
        self.global_step = 0
        self.epsilon = self.epsilon_schedule(0)
        self.buffer = (
            ReplayBuffer(cfg.capacity, n_inputs, cfg.alpha, cfg.p_min, cfg.uniform_replay)
            if with_buffer else None
        )

    @property
    def train_steps(self) -> int:
        return self.opt.t

    def beta(self, progress: float) -> float:
        progress = min(max(progress, 0.0), 1.0)
        return self.cfg.beta_start + progress * (self.cfg.beta_end - self.cfg.beta_start)

    def act(self, obs, rng: np.random.Generator, greedy: bool = False) -> Action:
        return select_action(self.net, obs, 0.0 if greedy else self.epsilon, rng)

    def observe(self, obs, action, reward, next_obs, done, aux_target) -> None:
        self.buffer.push(obs, int(action), reward, next_obs, done, aux_target)
        self.global_step += 1
        self.epsilon = self.epsilon_schedule(self.global_step)

    def train_step(self, rng: np.random.Generator, progress: float = 0.0):
        """One prioritized minibatch update. Returns (loss_q, loss_a, loss_total)."""
        buf = self.buffer
        if buf is None or len(buf) < self.cfg.batch:
            raise InsufficientData("not enough transitions for a batch")
        idx, w = buf.sample(self.cfg.batch, rng, self.beta(progress))
        y = td_targets(self.net, self.target, buf.rewards[idx], buf.next_obs[idx],
                       buf.dones[idx], self.cfg.gamma)
        l_q, l_a, total, td, grads = dqn_loss(
            self.net, buf.obs[idx], buf.actions[idx], y, buf.aux[idx], w, self.cfg.delta
        )
        self.opt.step(self.net.params, grads)
        buf.update_priorities(idx, td)
        return l_q, l_a, total

    def sync_target(self) -> None:
        sync_target(self.net, self.target)


def sync_target(net: QNetwork, target_net: QNetwork) -> None:
    target_net.load_from(net)
