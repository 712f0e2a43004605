"""Plane-search environment over a single volume.

The agent moves the tangent point one coordinate at a time.  The state is the
last three reslices; the reward combines a spatial term (distance to the target
tangent point) and an anatomical term (landmark heatmap mass on the plane).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, EpisodeFinished
from .geom import R_MIN, TangentPoint, build_frame
from .imaging import minmax_normalize, ncc_or_zero
from .volume import RESLICE_EXTENT, RESLICE_PITCH, Volume, reslice

N_FRAMES = 3


class Action(NamedTuple):
    axis: int  # 0, 1, 2 for x, y, z
    sign: int  # +1 or -1

    @property
    def index(self) -> int:
        return 2 * self.axis + (0 if self.sign > 0 else 1)

    @property
    def inverse(self) -> "Action":
        return Action(self.axis, -self.sign)

    @classmethod
    def from_index(cls, i: int) -> "Action":
        return ACTIONS[int(i)]

    def __repr__(self):
        return f"Action({'XYZ'[self.axis]}{'+' if self.sign > 0 else '-'})"


# index order: X+, X-, Y+, Y-, Z+, Z-
ACTIONS = tuple(Action(axis, sign) for axis in range(3) for sign in (1, -1))
N_ACTIONS = len(ACTIONS)


@dataclass(frozen=True)
class EnvConfig:
    max_steps: int = 60
    extent: int = RESLICE_EXTENT
    pixel_pitch: float = RESLICE_PITCH
    step_init: float = 1.0
    step_floor: float = 0.01
    step_shrink: float = 0.1
    osc_limit: int = 3
    bounds_inflation: float = 0.2
    asr_sign_literal: bool = False

    def validate(self) -> None:
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.extent < 2:
            raise ConfigError("extent must be >= 2")
        if not self.pixel_pitch > 0:
            raise ConfigError("pixel_pitch must be positive")
        if not 0 < self.step_floor <= self.step_init:
            raise ConfigError("need 0 < step_floor <= step_init")
        if not 0 < self.step_shrink < 1:
            raise ConfigError("step_shrink must lie in (0, 1)")
        if self.osc_limit < 1:
            raise ConfigError("osc_limit must be >= 1")
        if self.bounds_inflation < 0:
            raise ConfigError("bounds_inflation must be >= 0")


@dataclass(frozen=True, eq=False)
class EnvState:
    frames: tuple  # (t-2, t-1, t), each extent x extent, min-max normalized
    tangent: TangentPoint
    step_index: int = 0
    step_size: float = 1.0
    osc_counter: int = 0
    last_action: Action | None = None
    heat_sum: float = 0.0  # landmark heatmap mass on the current plane

    @property
    def current_frame(self) -> np.ndarray:
        return self.frames[-1]

    def stacked(self) -> np.ndarray:
        return np.stack(self.frames, axis=0)


@dataclass(frozen=True, eq=False)
class StepOutcome:
    state: EnvState
    reward: int
    done: bool
    slr: int
    asr: int
    aux_target: float


def _sgn(x: float) -> int:
    return int(np.sign(x))


def spatial_anatomical_reward(
    prev, cur, goal, heat_prev: float, heat_cur: float, heat_goal: float, literal: bool = False
) -> tuple[int, int, int]:
    """Sign-based reward from tangent coordinates and heatmap sums.

    ``literal=True`` evaluates the anatomical term with the operand order
    ``sgn(|I_t - I_g| - |I_{t-1} - I_g|)``, which rewards moving away from the
    target heatmap mass.  The default flips it so that improvement is +1, like
    the spatial term.
    """
    prev = np.asarray(prev, dtype=np.float64)
    cur = np.asarray(cur, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    slr = _sgn(np.linalg.norm(prev - goal) - np.linalg.norm(cur - goal))
    gap = abs(heat_prev - heat_goal) - abs(heat_cur - heat_goal)
    asr = _sgn(-gap if literal else gap)
    return slr + asr, slr, asr


class PlaneEnv:
    """Environment bound to one immutable volume.

    The instance caches the target reslice and heatmap mass but holds no episode
    state: ``step`` maps (state, action) to a new outcome, so one instance can
    serve any number of interleaved episodes on the same volume.
    """

    def __init__(self, vol: Volume, cfg: EnvConfig | None = None):
        self.vol = vol
        self.cfg = cfg or EnvConfig()
        self.cfg.validate()
        size = vol.physical_size
        margin = 0.5 * self.cfg.bounds_inflation * size
        self.lower = -margin
        self.upper = size + margin
        self.goal = vol.gt_tangent.as_array()
        self.goal_frame = self.frame_image(vol.gt_tangent)
        self.goal_heat = self.heat_sum(vol.gt_tangent)

    # -- imaging helpers
    def raw_image(self, p: TangentPoint) -> np.ndarray:
        frame = build_frame(p, self.cfg.pixel_pitch, self.cfg.extent)
        return reslice(self.vol, frame)

    def frame_image(self, p: TangentPoint) -> np.ndarray:
        return minmax_normalize(self.raw_image(p))

    def heat_sum(self, p: TangentPoint) -> float:
        frame = build_frame(p, self.cfg.pixel_pitch, self.cfg.extent)
        return float(reslice(self.vol, frame, self.vol.heatmap).sum())

    # -- episode API
    def reset(self, start: TangentPoint) -> EnvState:
        if not isinstance(start, TangentPoint):
            start = TangentPoint.from_array(start)
        img = self.frame_image(start)
        return EnvState(
            frames=(img, img.copy(), img.copy()),
            tangent=start,
            step_size=self.cfg.step_init,
            heat_sum=self.heat_sum(start),
        )

    def done(self, state: EnvState) -> bool:
        return state.step_index >= self.cfg.max_steps

    def move(self, t: TangentPoint, action: Action, step_size: float) -> TangentPoint:
        """Translate one coordinate, clamped to the search box and kept off the origin."""
        a = t.as_array()
        a[action.axis] += action.sign * step_size
        a = np.clip(a, self.lower, self.upper)
        if np.linalg.norm(a) < R_MIN:
            return t
        return TangentPoint.from_array(a)

    def step(self, state: EnvState, action: Action | int) -> StepOutcome:
        if self.done(state):
            raise EpisodeFinished("episode already reached its step limit")
        if not isinstance(action, Action):
            action = Action.from_index(action)

        osc = state.osc_counter
        if state.last_action is not None and action == state.last_action.inverse:
            osc += 1
        else:
            osc = 0
        step_size = state.step_size
        if osc >= self.cfg.osc_limit:
            step_size = max(step_size * self.cfg.step_shrink, self.cfg.step_floor)
            osc = 0

        new_t = self.move(state.tangent, action, step_size)
        img = self.frame_image(new_t)
        heat = self.heat_sum(new_t)
        r, slr, asr = spatial_anatomical_reward(
            state.tangent.as_array(),
            new_t.as_array(),
            self.goal,
            state.heat_sum,
            heat,
            self.goal_heat,
            literal=self.cfg.asr_sign_literal,
        )
        new_state = EnvState(
            frames=(state.frames[1], state.frames[2], img),
            tangent=new_t,
            step_index=state.step_index + 1,
            step_size=step_size,
            osc_counter=osc,
            last_action=action,
            heat_sum=heat,
        )
        return StepOutcome(
            state=new_state,
            reward=r,
            done=self.done(new_state),
            slr=slr,
            asr=asr,
            aux_target=self.aux_target(new_state),
        )

    def aux_target(self, state: EnvState) -> float:
        return ncc_or_zero(state.current_frame, self.goal_frame)

    def with_step_size(self, state: EnvState, step_size: float) -> EnvState:
        step_size = float(np.clip(step_size, self.cfg.step_floor, self.cfg.step_init))
        return replace(state, step_size=step_size, osc_counter=0)


def compute_reward(
    prev: TangentPoint, cur: TangentPoint, vol: Volume, cfg: EnvConfig | None = None
) -> tuple[int, int, int]:
    cfg = cfg or EnvConfig()
    env = PlaneEnv(vol, cfg)
    return spatial_anatomical_reward(
        prev.as_array(),
        cur.as_array(),
        env.goal,
        env.heat_sum(prev),
        env.heat_sum(cur),
        env.goal_heat,
        literal=cfg.asr_sign_literal,
    )


def aux_target(state: EnvState, vol: Volume, cfg: EnvConfig | None = None) -> float:
    return PlaneEnv(vol, cfg).aux_target(state)


def canonical_test_start(vol: Volume) -> TangentPoint:
    """One voxel along each axis from the origin: the closest usable stand-in for it."""
    s = vol.spacing
    return TangentPoint(s, s, s)


@dataclass(frozen=True)
class StartSampler:
    """Uniform starts in mu +/- 2 sigma of the training set's target tangent points."""

    mu: tuple[float, float, float]
    sigma: tuple[float, float, float]

    @classmethod
    def from_targets(cls, targets) -> "StartSampler":
        t = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
        return cls(tuple(t.mean(axis=0)), tuple(t.std(axis=0)))

    def sample(self, rng: np.random.Generator) -> TangentPoint:
        mu = np.asarray(self.mu)
        sd = np.asarray(self.sigma)
        while True:
            p = rng.uniform(mu - 2 * sd, mu + 2 * sd)
            if np.linalg.norm(p) >= R_MIN:
                return TangentPoint.from_array(p)
