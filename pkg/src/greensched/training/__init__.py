from . import losses
from .loop import (
    DrlPolicy,
    TrainingConfig,
    TrainingDiverged,
    TrainResult,
    action_agreement,
    collect_rollouts,
    derive_seed,
    evaluate_policy,
    evaluation_env,
    network_config_for_env,
    run_episode,
    train_offline,
    train_online,
)
from .replay import ReplayBuffer, Transition, load_dataset, save_dataset

__all__ = [
    "DrlPolicy",
    "ReplayBuffer",
    "TrainResult",
    "TrainingConfig",
    "TrainingDiverged",
    "Transition",
    "action_agreement",
    "collect_rollouts",
    "derive_seed",
    "evaluate_policy",
    "evaluation_env",
    "load_dataset",
    "losses",
    "network_config_for_env",
    "run_episode",
    "save_dataset",
    "train_offline",
    "train_online",
]
