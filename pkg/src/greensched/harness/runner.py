"""Experiment execution: wires workload + power + env + policy and writes
metrics CSVs, summary JSON, event logs and checkpoints into a run directory.

Every output embeds the config hash and is byte-reproducible for a fixed
config and seed set (no timestamps, sorted keys, repr-formatted floats).
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import yaml

from ..env import DatacenterEnv
from ..heuristics import HEURISTICS, HeuristicPolicy
from ..nn.gradcheck import full_report, negative_control
from ..nn.networks import AgentNets
from ..training import (
    DrlPolicy,
    action_agreement,
    collect_rollouts,
    derive_seed,
    load_dataset,
    run_episode,
    save_dataset,
    train_offline,
    train_online,
)
from .config import ConfigError, ExperimentConfig

METRIC_FIELDS = ("total_job_value", "completed_jobs", "qos_violations",
                 "mean_utilization", "invalid_action_rate", "suspensions")


@dataclass
class MetricsRecord:
    seed: int
    episode: int
    total_job_value: float
    completed_jobs: int
    qos_violations: int
    mean_utilization: float
    invalid_action_rate: float
    suspensions: int

    @classmethod
    def from_metrics(cls, seed: int, episode: int, metrics: dict) -> "MetricsRecord":
        return cls(seed=seed, episode=episode, **{k: metrics[k] for k in METRIC_FIELDS})


def resolve_policy(config: ExperimentConfig, name: Optional[str] = None,
                   checkpoint: Optional[str] = None):
    """Policy object for a name or checkpoint path, validated against the env."""
    name = name or config.scheduler.get("policy", "sjf")
    if name in HEURISTICS:
        return HeuristicPolicy(name)
    if name != "drl" and os.path.exists(name):
        checkpoint = name
        name = "drl"
    if name != "drl":
        raise ConfigError([f"scheduler.policy: unknown policy {name!r}"])
    checkpoint = checkpoint or config.scheduler.get("checkpoint")
    if not checkpoint:
        raise ConfigError(["scheduler.checkpoint: required for policy 'drl'"])
    nets, manifest = AgentNets.load(checkpoint)
    env_cfg = config.env_config()
    net_cfg = nets.config
    mismatches = []
    for field, expected in (("cpu_count", env_cfg.cpu_count),
                            ("gpu_count", env_cfg.gpu_count),
                            ("time_horizon", env_cfg.time_horizon),
                            ("ready_pool_size", env_cfg.ready_pool_size)):
        if getattr(net_cfg, field) != expected:
            mismatches.append(f"checkpoint {field}={getattr(net_cfg, field)} "
                              f"vs cluster {field}={expected}")
    if mismatches:
        raise ConfigError([f"scheduler.checkpoint: {m}" for m in mismatches])
    return DrlPolicy(nets, greedy=config.scheduler.get("greedy", True))


def _write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json_text(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _prepare_out(config: ExperimentConfig, out_dir: Optional[str]) -> Optional[str]:
    out = out_dir or config.out_dir()
    if out:
        os.makedirs(out, exist_ok=True)
        _write_text(os.path.join(out, "config.yaml"),
                    yaml.safe_dump(config.raw, sort_keys=True))
    return out


def _summary(values: dict[str, list]) -> dict:
    return {key: {"mean": float(np.mean(col)), "stddev": float(np.std(col))}
            for key, col in values.items()}


def run_evaluate(config: ExperimentConfig, out_dir: Optional[str] = None,
                 policy_name: Optional[str] = None) -> tuple[list[MetricsRecord], dict]:
    """Per-seed episodes under one policy; returns records and a summary."""
    out = _prepare_out(config, out_dir)
    policy = resolve_policy(config, policy_name)
    env = config.build_env(record_events=True)
    records: list[MetricsRecord] = []
    for seed in config.seeds():
        for episode in range(config.episodes_per_seed()):
            ep_seed = seed if config.episodes_per_seed() == 1 else derive_seed(seed, 8, episode)
            metrics = run_episode(env, policy, ep_seed)
            records.append(MetricsRecord.from_metrics(seed, episode, metrics))
            if out:
                _write_text(os.path.join(out, "events",
                                         f"seed{seed}_ep{episode}.jsonl"),
                            env.events_jsonl() + "\n")
    columns = {field: [getattr(r, field) for r in records] for field in METRIC_FIELDS}
    summary = {
        "config_hash": config.hash(),
        "policy": getattr(policy, "name", "drl"),
        "episodes": len(records),
        "metrics": _summary(columns),
    }
    if out:
        _write_text(os.path.join(out, "metrics.csv"),
                    _csv_text(("seed", "episode") + METRIC_FIELDS,
                              [(r.seed, r.episode) + tuple(getattr(r, f) for f in METRIC_FIELDS)
                               for r in records]))
        _write_text(os.path.join(out, "summary.json"), _json_text(summary))
    return records, summary


def run_compare(config: ExperimentConfig, policies: Sequence[str],
                baseline: Optional[str] = None,
                out_dir: Optional[str] = None) -> list[dict]:
    """Same seeds and sources for every policy; relative deltas vs a baseline."""
    if not policies:
        raise ConfigError(["compare: policy list must be nonempty"])
    baseline = baseline or policies[0]
    if baseline not in policies:
        raise ConfigError([f"compare: baseline {baseline!r} not in policy list"])
    out = _prepare_out(config, out_dir)
    means: dict[str, float] = {}
    for name in policies:
        records, _ = run_evaluate(config, out_dir=None, policy_name=name)
        means[name] = float(np.mean([r.total_job_value for r in records]))
    base = means[baseline]
    table = []
    for name in policies:
        delta = 100.0 * (means[name] - base) / base if base else 0.0
        table.append({"policy": name, "mean_total_job_value": means[name],
                      "pct_vs_baseline": delta, "baseline": baseline})
    if out:
        _write_text(os.path.join(out, "compare.csv"),
                    _csv_text(("policy", "mean_total_job_value", "pct_vs_baseline",
                               "baseline"),
                              [(r["policy"], r["mean_total_job_value"],
                                r["pct_vs_baseline"], r["baseline"]) for r in table]))
        _write_text(os.path.join(out, "compare.json"),
                    _json_text({"config_hash": config.hash(), "table": table}))
    return table


def run_power_sweep(config: ExperimentConfig, levels: Sequence[float],
                    policies: Sequence[str] = ("sjf", "qos", "hvf", "fcfs"),
                    out_dir: Optional[str] = None) -> list[dict]:
    """Evaluate each policy at each constant power level, constant workload."""
    if not levels:
        raise ConfigError(["sweep-power: level list must be nonempty"])
    for level in levels:
        if not 0.0 <= level <= 1.0:
            raise ConfigError([f"sweep-power: level {level!r} outside [0, 1]"])
    out = _prepare_out(config, out_dir)
    rows = []
    for name in policies:
        row: dict = {"policy": name}
        for level in levels:
            level_config = config.with_overrides(power={"kind": "constant",
                                                        "level": level})
            records, _ = run_evaluate(level_config, out_dir=None, policy_name=name)
            row[f"value@{level}"] = float(np.mean([r.total_job_value for r in records]))
        rows.append(row)
    if out:
        header = ["policy"] + [f"value@{level}" for level in levels]
        _write_text(os.path.join(out, "power_sweep.csv"),
                    _csv_text(header, [[r[h] for h in header] for r in rows]))
        _write_text(os.path.join(out, "power_sweep.json"),
                    _json_text({"config_hash": config.hash(), "rows": rows}))
    return rows


def _train_and_eval_drl(config: ExperimentConfig) -> float:
    env = config.build_env(record_events=False)
    result = train_online(env, config.training_config(), config.network_config())
    policy = DrlPolicy(result.nets, greedy=True)
    eval_env = config.build_env(record_events=False)
    values = [run_episode(eval_env, policy, seed)["total_job_value"]
              for seed in config.seeds()]
    return float(np.mean(values))


def _sweep_structural(config: ExperimentConfig, values: Sequence[int], cluster_key: str,
                      out_dir: Optional[str], filename: str) -> list[dict]:
    if not values:
        raise ConfigError([f"{filename}: value list must be nonempty"])
    out = _prepare_out(config, out_dir)
    rows = []
    for value in values:
        sub = config.with_overrides(cluster={cluster_key: int(value)})
        sjf_records, _ = run_evaluate(sub, out_dir=None, policy_name="sjf")
        sjf_mean = float(np.mean([r.total_job_value for r in sjf_records]))
        drl_mean = _train_and_eval_drl(sub)
        delta = 100.0 * (drl_mean - sjf_mean) / sjf_mean if sjf_mean else 0.0
        rows.append({cluster_key: int(value),
                     "n_actions": sub.env_config().n_actions,
                     "drl_mean_value": drl_mean,
                     "sjf_mean_value": sjf_mean,
                     "drl_vs_sjf_pct": delta})
    if out:
        header = list(rows[0].keys())
        _write_text(os.path.join(out, f"{filename}.csv"),
                    _csv_text(header, [[r[h] for h in header] for r in rows]))
        _write_text(os.path.join(out, f"{filename}.json"),
                    _json_text({"config_hash": config.hash(), "rows": rows}))
    return rows


def run_horizon_sweep(config: ExperimentConfig, values: Sequence[int],
                      out_dir: Optional[str] = None) -> list[dict]:
    """Re-train and evaluate per planning-horizon value; DRL vs SJF."""
    return _sweep_structural(config, values, "time_horizon", out_dir, "horizon_sweep")


def run_readypool_sweep(config: ExperimentConfig, values: Sequence[int],
                        out_dir: Optional[str] = None) -> list[dict]:
    """Re-train and evaluate per ready-pool size; network widths follow n."""
    return _sweep_structural(config, values, "ready_pool_size", out_dir,
                             "readypool_sweep")


def run_train_online(config: ExperimentConfig, out_dir: Optional[str] = None) -> str:
    out = _prepare_out(config, out_dir) or "."
    env = config.build_env(record_events=False)
    result = train_online(env, config.training_config(), config.network_config())
    ckpt = os.path.join(out, "policy.ckpt")
    result.nets.save(ckpt, extra={"config_hash": config.hash(), "mode": "online"})
    _write_curve(out, result.curve)
    return ckpt


def run_train_offline(config: ExperimentConfig, dataset_path: str, mode: str,
                      out_dir: Optional[str] = None) -> str:
    out = _prepare_out(config, out_dir) or "."
    transitions, header = load_dataset(dataset_path)
    expected = config.hash()
    if header.get("config_hash") not in (None, expected):
        raise ConfigError([f"dataset: config_hash {header.get('config_hash')!r} does not "
                           f"match current config {expected!r}"])
    eval_env = config.build_env(record_events=False)
    result = train_offline(transitions, config.training_config(), mode,
                           config.network_config(), eval_env=eval_env)
    ckpt = os.path.join(out, f"policy_{mode}.ckpt")
    result.nets.save(ckpt, extra={"config_hash": expected, "mode": mode,
                                  "dataset": os.path.basename(dataset_path)})
    _write_curve(out, result.curve, name=f"curve_{mode}.csv")
    return ckpt


def _write_curve(out: str, curve: list[dict], name: str = "curve.csv") -> None:
    if not curve:
        return
    header = ["step", "eval_total_job_value", "critic_loss", "actor_loss"]
    rows = [[row.get(h, "") for h in header] for row in curve]
    _write_text(os.path.join(out, name), _csv_text(header, rows))


def run_collect(config: ExperimentConfig, policies: Sequence[str], episodes: int,
                out_path: str, seed: int = 0) -> int:
    env = config.build_env(record_events=False)
    resolved = [resolve_policy(config, name) for name in policies]
    transitions = collect_rollouts(env, resolved if len(resolved) > 1 else resolved[0],
                                   episodes, seed=seed)
    save_dataset(out_path, transitions,
                 header={"config_hash": config.hash(), "seed": seed,
                         "policies": list(policies), "episodes": episodes})
    return len(transitions)


def run_agreement(config: ExperimentConfig, checkpoint: str, heuristic: str,
                  episodes: int, seed: int = 0) -> float:
    env = config.build_env(record_events=False)
    policy = resolve_policy(config, "drl", checkpoint=checkpoint)
    return action_agreement(policy, HeuristicPolicy(heuristic), env, episodes, seed=seed)


def run_gradcheck(out_dir: Optional[str] = None, seed: int = 0) -> tuple[list, bool]:
    """Layer-by-layer and composite finite-difference report; True iff all pass
    and the deliberately corrupted layer is flagged."""
    results = full_report(seed)
    control = negative_control(seed)
    ok = all(r.passed for r in results) and not control.passed
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        rows = [[r.name, r.max_rel_error, r.checked, r.passed] for r in results]
        rows.append([control.name, control.max_rel_error, control.checked,
                     not control.passed])
        _write_text(os.path.join(out_dir, "gradcheck.csv"),
                    _csv_text(("check", "max_rel_error", "entries", "ok"), rows))
    return results + [control], ok
