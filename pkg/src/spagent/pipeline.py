"""Dataset generation, training and evaluation drivers behind the CLI."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .agent.checkpoint import load_checkpoint, save_checkpoint
from .agent.dqn import DQNAgent, encode_state, obs_dim
from .config import RunConfig
from .env import ACTIONS, EnvConfig, PlaneEnv, StartSampler, canonical_test_start
from .errors import ConfigError, FormatError
from .geom import tangent_to_plane, plane_metrics
from .imaging import ncc_or_zero, ssim
from .imitation import agreement, generate_demos, pretrain, run_oracle_episode
from .report import EvalReport, EvalRow
from .volume import Volume, generate_phantom, load_volume, save_volume

log = logging.getLogger("spagent")

MANIFEST = "manifest.json"
SPLITS = ("train", "val", "test")
_SPLIT_OFFSET = {"train": 0, "val": 100_000, "test": 200_000}


def phantom_seed(run_seed: int, split: str, i: int) -> int:
    return run_seed * 1_000_000 + _SPLIT_OFFSET[split] + i


# ---------------------------------------------------------------------------
# dataset


@dataclass
class Dataset:
    root: Path
    manifest: dict

    def paths(self, split: str) -> list[Path]:
        return [self.root / e["path"] for e in self.manifest["volumes"] if e["split"] == split]

    def volumes(self, split: str) -> list[Volume]:
        return [load_volume(p) for p in self.paths(split)]

    def names(self, split: str) -> list[str]:
        return [Path(e["path"]).stem for e in self.manifest["volumes"] if e["split"] == split]

    def sampler(self) -> StartSampler:
        return StartSampler(tuple(self.manifest["mu"]), tuple(self.manifest["sigma"]))


def generate_dataset(cfg: RunConfig, out_dir=None) -> Dataset:
    cfg.validate()
    root = Path(out_dir or cfg.dataset_dir)
    counts = {"train": cfg.n_train, "val": cfg.n_val, "test": cfg.n_test}
    entries = []
    train_targets = []
    for split in SPLITS:
        (root / split).mkdir(parents=True, exist_ok=True)
        for i in range(counts[split]):
            seed = phantom_seed(cfg.seed, split, i)
            vol = generate_phantom(cfg.phantom_config(seed))
            rel = f"{split}/vol_{i:03d}.spvol"
            save_volume(vol, root / rel)
            entries.append({"split": split, "path": rel, "seed": seed})
            if split == "train":
                train_targets.append(vol.gt_tangent.as_array())
            log.debug("wrote %s", rel)
    sampler = StartSampler.from_targets(train_targets)
    manifest = {
        "format": "spagent-dataset-1",
        "seed": cfg.seed,
        "mu": [float(x) for x in sampler.mu],
        "sigma": [float(x) for x in sampler.sigma],
        "volumes": entries,
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return Dataset(root, manifest)


def load_dataset(root) -> Dataset:
    root = Path(root)
    try:
        manifest = json.loads((root / MANIFEST).read_text())
    except FileNotFoundError:
        raise ConfigError(f"no dataset manifest in {root}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad manifest: {exc}") from exc
    for key in ("mu", "sigma", "volumes"):
        if key not in manifest:
            raise FormatError(f"manifest lacks {key!r}")
    return Dataset(root, manifest)


# ---------------------------------------------------------------------------
# evaluation

Policy = Callable[[PlaneEnv], object]


def _final_metrics(env: PlaneEnv, tangent) -> tuple[float, float, float, float]:
    ang, dis = plane_metrics(tangent_to_plane(tangent), tangent_to_plane(env.vol.gt_tangent))
    img = env.raw_image(tangent)
    ref = env.raw_image(env.vol.gt_tangent)
    return ang, dis, ssim(img, ref), ncc_or_zero(img, ref)


def run_greedy_episode(env: PlaneEnv, net, factor: int, pose_scale: float):
    state = env.reset(canonical_test_start(env.vol))
    while not env.done(state):
        q, _ = net.forward(encode_state(state, factor, pose_scale).astype(np.float64))
        state = env.step(state, int(np.argmax(q))).state
    return state.tangent, state.step_index


def run_random_episode(env: PlaneEnv, rng: np.random.Generator):
    state = env.reset(canonical_test_start(env.vol))
    while not env.done(state):
        state = env.step(state, int(rng.integers(len(ACTIONS)))).state
    return state.tangent, state.step_index


def evaluate(volumes, names, env_cfg: EnvConfig, policy: str = "agent", net=None,
             factor: int = 2, pose_scale: float = 32.0, seed: int = 0) -> EvalReport:
    """Run one episode per volume from the canonical start and score the final plane."""
    if not volumes:
        raise ConfigError("nothing to evaluate: empty volume list")
    rng = np.random.default_rng(seed)
    rows = []
    for vol, name in zip(volumes, names):
        env = PlaneEnv(vol, env_cfg)
        if policy == "agent":
            tangent, steps = run_greedy_episode(env, net, factor, pose_scale)
        elif policy == "random":
            tangent, steps = run_random_episode(env, rng)
        elif policy == "oracle":
            demo = run_oracle_episode(env, canonical_test_start(vol), factor, pose_scale)
            tangent, steps = demo.final_tangent, len(demo)
        else:
            raise ConfigError(f"unknown policy {policy!r}")
        ang, dis, s, c = _final_metrics(env, tangent)
        rows.append(EvalRow(name, ang, dis, s, c, int(steps)))
    return EvalReport(rows=rows, policy=policy)


# ---------------------------------------------------------------------------
# training


class EventLog:
    """Append-only, one event per line, no wall-clock content."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")

    def __call__(self, event: str, **fields) -> None:
        parts = [f"event={event}"]
        for k, v in fields.items():
            if isinstance(v, float):
                v = f"{v:.10g}"
            parts.append(f"{k}={v}")
        line = " ".join(parts)
        with self.path.open("a") as fh:
            fh.write(line + "\n")
        log.info(line)


def _rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def imitation_stage(cfg: RunConfig, volumes, sampler, net, seed: int, emit=None):
    """Collect oracle demos on every volume and behavior-clone them into ``net``."""
    env_cfg = cfg.env_config()
    demos = []
    for i, vol in enumerate(volumes):
        demos.extend(generate_demos(vol, cfg.demos_per_volume, seed + i, sampler, env_cfg,
                                    cfg.downsample, cfg.pose_scale))
    if emit:
        emit("demos", count=len(demos), pairs=sum(len(d) for d in demos))
    cb = (lambda e, l: emit("il_epoch", epoch=e, loss=l)) if emit else None
    trained = pretrain(net, demos, cfg.il_epochs, cfg.il_lr, cfg.il_batch, seed=seed, callback=cb)
    if emit:
        emit("il_done", agreement=agreement(trained, demos))
    return trained, demos


def _run_seeds(cfg: RunConfig) -> dict[str, np.random.Generator]:
    names = ("init", "env", "act", "replay", "il")
    return dict(zip(names, _rngs(cfg.seed, len(names))))


def pretrain_agent(cfg: RunConfig, dataset: Dataset, emit=None):
    """Fresh agent for ``cfg``, behavior-cloned on the training split when demos are enabled.

    Shared by ``train`` and the imitation-only command so both start from the
    same seeded network.  Returns (agent, demos, rngs).
    """
    cfg.validate()
    train_vols = dataset.volumes("train")
    if not train_vols:
        raise ConfigError("dataset has no training volumes")
    rngs = _run_seeds(cfg)
    n_in = obs_dim(cfg.extent, cfg.downsample)
    agent = DQNAgent(cfg.agent_config(), n_in, seed=int(rngs["init"].integers(2**31)))
    if emit:
        emit("start", obs_dim=n_in, train_volumes=len(train_vols),
             val_volumes=len(dataset.paths("val")), rl_steps=cfg.rl_steps)
    demos = []
    il_seed = int(rngs["il"].integers(2**31))
    if cfg.demos_per_volume > 0 and cfg.il_epochs > 0:
        net, demos = imitation_stage(cfg, train_vols, dataset.sampler(), agent.net, il_seed, emit)
        agent.net = net
        agent.sync_target()
    return agent, demos, rngs


def train(cfg: RunConfig, dataset: Dataset, out_dir=None) -> dict:
    """Imitation warm start followed by dueling double DQN; returns summary numbers."""
    cfg.validate()
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.dumps())
    emit = EventLog(out / "train.log")

    agent, _, rngs = pretrain_agent(cfg, dataset, emit)
    rng_env, rng_act, rng_replay = rngs["env"], rngs["act"], rngs["replay"]
    train_vols = dataset.volumes("train")
    val_vols = dataset.volumes("val")
    val_names = dataset.names("val")
    sampler = dataset.sampler()
    env_cfg = cfg.env_config()
    agent_cfg = agent.cfg

    def validate(step: int) -> float | None:
        if not val_vols:
            return None
        rep = evaluate(val_vols, val_names, env_cfg, "agent", agent.net, cfg.downsample,
                       cfg.pose_scale)
        emit("val", step=step, ang=rep.mean("ang_deg"), dis=rep.mean("dis_mm"),
             ssim=rep.mean("ssim"), ncc=rep.mean("ncc"))
        return rep.mean("ang_deg")

    best_ang = validate(0)
    save_checkpoint(agent, out / "best.ckpt")
    emit("checkpoint", step=0, name="best.ckpt")

    envs = [PlaneEnv(v, env_cfg) for v in train_vols]
    state = env = None
    losses = []
    rewards = []
    warm = max(agent_cfg.warmup, agent_cfg.batch)
    for step in range(cfg.rl_steps):
        if state is None or env.done(state):
            env = envs[int(rng_env.integers(len(envs)))]
            state = env.reset(sampler.sample(rng_env))
            obs = encode_state(state, cfg.downsample, cfg.pose_scale)
        action = agent.act(obs, rng_act)
        outcome = env.step(state, action)
        next_obs = encode_state(outcome.state, cfg.downsample, cfg.pose_scale)
        agent.observe(obs, action.index, outcome.reward, next_obs, outcome.done,
                      outcome.aux_target)
        rewards.append(outcome.reward)
        state, obs = outcome.state, next_obs

        if len(agent.buffer) >= warm:
            losses.append(agent.train_step(rng_replay, progress=step / max(cfg.rl_steps, 1)))
            if agent.train_steps % agent_cfg.target_sync == 0:
                agent.sync_target()
                emit("target_sync", step=step + 1, train_step=agent.train_steps)

        if (step + 1) % cfg.log_interval == 0:
            lq, la, lt = np.mean(losses, axis=0) if losses else (0.0, 0.0, 0.0)
            emit("train", step=step + 1, eps=agent.epsilon, reward=float(np.mean(rewards)),
                 loss_q=float(lq), loss_a=float(la), loss=float(lt))
            losses, rewards = [], []
        if (step + 1) % cfg.val_interval == 0:
            ang = validate(step + 1)
            if ang is not None and (best_ang is None or ang < best_ang):
                best_ang = ang
                save_checkpoint(agent, out / "best.ckpt")
                emit("checkpoint", step=step + 1, name="best.ckpt")

    save_checkpoint(agent, out / "last.ckpt")
    emit("done", step=cfg.rl_steps, best_val_ang=best_ang if best_ang is not None else float("nan"))
    return {"best_val_ang": best_ang, "out_dir": str(out)}


def load_agent_net(path, cfg: RunConfig):
    return load_checkpoint(path, cfg.agent_config()).net
