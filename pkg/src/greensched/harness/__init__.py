from .config import ConfigError, ExperimentConfig, config_hash
from .runner import (
    MetricsRecord,
    resolve_policy,
    run_agreement,
    run_collect,
    run_compare,
    run_evaluate,
    run_gradcheck,
    run_horizon_sweep,
    run_power_sweep,
    run_readypool_sweep,
    run_train_offline,
    run_train_online,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MetricsRecord",
    "config_hash",
    "resolve_policy",
    "run_agreement",
    "run_collect",
    "run_compare",
    "run_evaluate",
    "run_gradcheck",
    "run_horizon_sweep",
    "run_power_sweep",
    "run_readypool_sweep",
    "run_train_offline",
    "run_train_online",
]
