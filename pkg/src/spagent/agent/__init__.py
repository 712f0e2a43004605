from .checkpoint import load_checkpoint, save_checkpoint
from .dqn import (
    AgentConfig,
    DQNAgent,
    EpsilonSchedule,
    dqn_loss,
    encode_state,
    obs_dim,
    select_action,
    sync_target,
    td_target,
    td_targets,
)
from .network import Adam, QNetwork
from .replay import ReplayBuffer, Transition, buffer_sample

__all__ = [
    "Adam",
    "AgentConfig",
    "DQNAgent",
    "EpsilonSchedule",
    "QNetwork",
    "ReplayBuffer",
    "Transition",
    "buffer_sample",
    "dqn_loss",
    "encode_state",
    "load_checkpoint",
    "obs_dim",
    "save_checkpoint",
    "select_action",
    "sync_target",
    "td_target",
    "td_targets",
]
