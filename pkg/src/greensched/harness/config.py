"""Experiment configuration: YAML sections for cluster, workload, power,
scheduler, training and run control, with eager validation that names every
offending key."""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any, Callable, Optional

import yaml

from ..env import DatacenterEnv, EnvConfig
from ..nn.networks import NetworkConfig
from ..power import BatterySpec, PowerModel, SyntheticRenewableParams, read_level_trace_csv, read_renewable_trace_csv
from ..training.loop import TrainingConfig, derive_seed, network_config_for_env
from ..workload import (
    SyntheticWorkload,
    SyntheticWorkloadParams,
    TraceWorkload,
    TraceWorkloadParams,
    ValueWeights,
    arrival_rate_for_load,
)

POLICY_NAMES = ("sjf", "qos", "hvf", "fcfs", "drl")


class ConfigError(Exception):
    """Invalid experiment configuration; `errors` lists offending keys."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError([f"{name}: expected a mapping"])
    return dict(value)


class ExperimentConfig:
    def __init__(self, raw: dict):
        self.raw = raw or {}
        self.cluster = _section(self.raw, "cluster")
        self.workload = _section(self.raw, "workload")
        self.power = _section(self.raw, "power")
        self.scheduler = _section(self.raw, "scheduler")
        self.training = _section(self.raw, "training")
        self.run = _section(self.raw, "run")
        self.validate()

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError([f"config file: {exc}"]) from exc
        except yaml.YAMLError as exc:
            raise ConfigError([f"config file: invalid YAML: {exc}"]) from exc
        if not isinstance(raw, dict):
            raise ConfigError(["config file: top level must be a mapping"])
        return cls(raw)

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        errors: list[str] = []
        self._validate_cluster(errors)
        self._validate_workload(errors)
        self._validate_power(errors)
        self._validate_scheduler(errors)
        self._validate_training(errors)
        self._validate_run(errors)
        if errors:
            raise ConfigError(errors)

    def _validate_cluster(self, errors: list[str]) -> None:
        try:
            self.env_config()
        except (TypeError, ValueError) as exc:
            errors.append(f"cluster: {exc}")

    def _validate_workload(self, errors: list[str]) -> None:
        kind = self.workload.get("kind", "synthetic")
        if kind == "synthetic":
            try:
                self.synthetic_params()
            except (TypeError, ValueError) as exc:
                errors.append(f"workload: {exc}")
        elif kind == "swf":
            path = self.workload.get("path")
            if not path:
                errors.append("workload.path: required for kind 'swf'")
            elif not os.path.exists(path):
                errors.append(f"workload.path: file not found: {path}")
            else:
                try:
                    self.trace_params()
                except (TypeError, ValueError) as exc:
                    errors.append(f"workload: {exc}")
        else:
            errors.append(f"workload.kind: unknown kind {kind!r}")
        try:
            self.value_weights()
        except (TypeError, ValueError) as exc:
            errors.append(f"workload.value_weights: {exc}")

    def _validate_power(self, errors: list[str]) -> None:
        kind = self.power.get("kind", "constant")
        if kind not in ("constant", "level_trace", "renewable_trace", "synthetic_renewable"):
            errors.append(f"power.kind: unknown kind {kind!r}")
            return
        if kind == "constant":
            level = self.power.get("level", 1.0)
            if not isinstance(level, (int, float)) or not 0.0 <= level <= 1.0:
                errors.append(f"power.level: must be a fraction in [0, 1], got {level!r}")
        if kind in ("level_trace", "renewable_trace"):
            path = self.power.get("trace_path")
            if not path:
                errors.append(f"power.trace_path: required for kind {kind!r}")
            elif not os.path.exists(path):
                errors.append(f"power.trace_path: file not found: {path}")
        if kind in ("renewable_trace", "synthetic_renewable"):
            draw = self.power.get("cluster_full_draw_kw")
            if not isinstance(draw, (int, float)) or draw <= 0:
                errors.append("power.cluster_full_draw_kw: positive number required for "
                              f"kind {kind!r}")
            battery = self.power.get("battery")
            if battery is not None:
                try:
                    BatterySpec(**battery)
                except (TypeError, ValueError) as exc:
                    errors.append(f"power.battery: {exc}")

    def _validate_scheduler(self, errors: list[str]) -> None:
        policy = self.scheduler.get("policy", "sjf")
        if policy not in POLICY_NAMES:
            errors.append(f"scheduler.policy: must be one of {POLICY_NAMES}, got {policy!r}")
        if policy == "drl":
            ckpt = self.scheduler.get("checkpoint")
            if not ckpt:
                errors.append("scheduler.checkpoint: required for policy 'drl'")
            elif not os.path.exists(ckpt):
                errors.append(f"scheduler.checkpoint: file not found: {ckpt}")

    def _validate_training(self, errors: list[str]) -> None:
        try:
            self.training_config()
        except (TypeError, ValueError) as exc:
            errors.append(f"training: {exc}")
        mode = self.training.get("mode", "bc")
        if mode not in ("bc", "crr"):
            errors.append(f"training.mode: must be 'bc' or 'crr', got {mode!r}")

    def _validate_run(self, errors: list[str]) -> None:
        seeds = self.run.get("seeds", [0])
        if (not isinstance(seeds, list) or not seeds
                or not all(isinstance(s, int) for s in seeds)):
            errors.append(f"run.seeds: nonempty list of integers required, got {seeds!r}")
        episodes = self.run.get("episodes", 1)
        if not isinstance(episodes, int) or episodes < 1:
            errors.append(f"run.episodes: positive integer required, got {episodes!r}")

    # -- builders -----------------------------------------------------------

    def env_config(self) -> EnvConfig:
        c = self.cluster
        return EnvConfig(
            cpu_count=c.get("cpu_count", 5),
            gpu_count=c.get("gpu_count", 5),
            time_horizon=c.get("time_horizon", 24),
            ready_pool_size=c.get("ready_pool_size", 5),
            episode_length=c.get("episode_length", 200),
            actions_per_timestep_budget=c.get("actions_per_timestep_budget"),
            qos_penalty_coeff=c.get("qos_penalty_coeff", 1.0),
        )

    def value_weights(self) -> ValueWeights:
        vw = self.workload.get("value_weights") or {}
        return ValueWeights(
            w_cpu=vw.get("w_cpu", 1.0),
            w_gpu=vw.get("w_gpu", 2.0),
            qos_multiplier=vw.get("qos_multiplier", "linear"),
        )

    def synthetic_params(self) -> SyntheticWorkloadParams:
        w = self.workload
        env = self.env_config()
        base = SyntheticWorkloadParams(
            arrival_rate=1.0,
            short_fraction=w.get("short_fraction", 0.7),
            short_duration=tuple(w.get("short_duration", (1, 10))),
            long_duration=tuple(w.get("long_duration", (10, 20))),
            max_demand_fraction=w.get("max_demand_fraction", 0.5),
            qos_choices=tuple(w.get("qos_choices", (0.25, 0.5, 0.75, 1.0))),
        )
        rate = w.get("arrival_rate")
        if rate is None:
            rate = arrival_rate_for_load(base, env.cpu_count, env.gpu_count,
                                         load=w.get("load", 1.0))
        return SyntheticWorkloadParams(
            arrival_rate=rate,
            short_fraction=base.short_fraction,
            short_duration=base.short_duration,
            long_duration=base.long_duration,
            max_demand_fraction=base.max_demand_fraction,
            qos_choices=base.qos_choices,
        )

    def trace_params(self) -> TraceWorkloadParams:
        w = self.workload
        env = self.env_config()
        cap = w.get("demand_cap") or {}
        return TraceWorkloadParams(
            path=w["path"],
            time_scale=w.get("time_scale", 3600.0),
            qos_range=tuple(w.get("qos_range", (0.1, 0.9))),
            gpu_augment_prob=w.get("gpu_augment_prob", 0.25),
            cpu_demand_cap=cap.get("cpu", env.cpu_count),
            gpu_demand_cap=cap.get("gpu", env.gpu_count),
            max_jobs=w.get("max_jobs"),
        )

    def build_workload(self):
        env = self.env_config()
        weights = self.value_weights()
        if self.workload.get("kind", "synthetic") == "swf":
            return TraceWorkload(self.trace_params(), weights)
        count = self.workload.get("count", 4 * env.episode_length)
        return SyntheticWorkload(self.synthetic_params(), count,
                                 cpu_count=env.cpu_count, gpu_count=env.gpu_count,
                                 weights=weights)

    def power_factory(self) -> Callable[[int], PowerModel]:
        p = self.power
        kind = p.get("kind", "constant")
        if kind == "constant":
            level = p.get("level", 1.0)
            return lambda seed: PowerModel.constant(level)
        if kind == "level_trace":
            levels = read_level_trace_csv(p["trace_path"])
            return lambda seed: PowerModel.from_level_trace(levels)
        battery = BatterySpec(**p["battery"]) if p.get("battery") else None
        draw = p["cluster_full_draw_kw"]
        if kind == "renewable_trace":
            trace = read_renewable_trace_csv(p["trace_path"])
            return lambda seed: PowerModel.from_renewable(trace, draw, battery)
        synth = p.get("synthetic") or {}
        params = SyntheticRenewableParams(
            solar_peak_kw=synth.get("solar_peak_kw", 150.0),
            wind_base_kw=synth.get("wind_base_kw", 200.0),
            wind_night_boost=synth.get("wind_night_boost", 0.75),
            wind_noise_kw=synth.get("wind_noise_kw", 60.0),
            day_length=synth.get("day_length", 24),
        )
        length = p.get("trace_length", 512)
        fixed_seed = p.get("seed")

        def build(seed: int) -> PowerModel:
            trace_seed = fixed_seed if fixed_seed is not None else derive_seed(seed, 9)
            return PowerModel.synthetic_renewable(params, trace_seed, length, draw, battery)
        return build

    def build_env(self, record_events: bool = True) -> DatacenterEnv:
        return DatacenterEnv(self.env_config(), self.build_workload(),
                             self.power_factory(), record_events=record_events)

    def training_config(self) -> TrainingConfig:
        t = self.training
        return TrainingConfig(
            batch_size=t.get("batch_size", 128),
            learning_rate=t.get("learning_rate", 3e-4),
            discount=t.get("discount", 0.99),
            online=t.get("online", True),
            advantage_samples=t.get("advantage_samples"),
            total_steps=t.get("total_steps", 200_000),
            entropy_coeff=t.get("entropy_coeff", 0.01),
            target_smoothing=t.get("target_smoothing", 0.005),
            seed=t.get("seed", 0),
            buffer_capacity=t.get("buffer_capacity", 200_000),
            update_interval=t.get("update_interval", 1),
            warmup_steps=t.get("warmup_steps", 1_000),
            reward_scale=t.get("reward_scale", 1.0),
            eval_interval=t.get("eval_interval", 5_000),
            eval_episodes=t.get("eval_episodes", 10),
        )

    def network_config(self) -> NetworkConfig:
        t = self.training
        return network_config_for_env(self.env_config(), seed=t.get("seed", 0),
                                      value_scale=t.get("value_scale", 0.01))

    def seeds(self) -> list[int]:
        return list(self.run.get("seeds", [0]))

    def episodes_per_seed(self) -> int:
        return self.run.get("episodes", 1)

    def out_dir(self) -> Optional[str]:
        return self.run.get("out_dir")

    def hash(self) -> str:
        return config_hash(self.raw)

    def with_overrides(self, **section_updates) -> "ExperimentConfig":
        """New config with whole-key updates inside sections, e.g.
        with_overrides(power={"level": 0.9}, cluster={"time_horizon": 36})."""
        raw = json.loads(json.dumps(self.raw))  # deep copy of plain data
        for section, updates in section_updates.items():
            raw.setdefault(section, {})
            raw[section].update(updates)
        return ExperimentConfig(raw)
