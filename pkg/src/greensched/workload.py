"""Job stream sources: synthetic Poisson workload and SWF trace loading."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .jobs import Job


class WorkloadError(Exception):
    pass


@dataclass(frozen=True)
class ValueWeights:
    """Price model: money per slot-timestep, per resource type.

    qos_multiplier selects how the QoS level enters the price ("linear"
    multiplies by qos, "none" ignores it).
    """

    w_cpu: float = 1.0
    w_gpu: float = 2.0
    qos_multiplier: str = "linear"

    def __post_init__(self):
        if self.w_cpu <= 0 or self.w_gpu <= 0:
            raise ValueError("value weights must be positive")
        if self.qos_multiplier not in ("linear", "none"):
            raise ValueError(f"unknown qos_multiplier: {self.qos_multiplier}")


def job_value(cpu_req: int, gpu_req: int, duration: int, qos: float,
              weights: ValueWeights = ValueWeights()) -> float:
    """Price of a job: (w_cpu*cpus + w_gpu*gpus) * duration, scaled by qos."""
    if duration <= 0 or cpu_req + gpu_req <= 0:
        raise ValueError("demands and duration must be positive")
    base = (weights.w_cpu * cpu_req + weights.w_gpu * gpu_req) * duration
    if weights.qos_multiplier == "linear":
        base *= qos
    return base


@dataclass(frozen=True)
class SyntheticWorkloadParams:
    arrival_rate: float = 0.3
    short_fraction: float = 0.7
    short_duration: tuple[int, int] = (1, 10)
    long_duration: tuple[int, int] = (10, 30)
    max_demand_fraction: float = 0.5
    qos_choices: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)

    def __post_init__(self):
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        if not 0.0 < self.short_fraction <= 1.0:
            raise ValueError("short_fraction must be in (0, 1]")
        for lo, hi in (self.short_duration, self.long_duration):
            if lo < 1 or hi < lo:
                raise ValueError("duration ranges must be nonempty with lo >= 1")
        if not 0.0 < self.max_demand_fraction <= 1.0:
            raise ValueError("max_demand_fraction must be in (0, 1]")
        if not self.qos_choices or any(q <= 0 or q > 1 for q in self.qos_choices):
            raise ValueError("qos_choices must be a nonempty set within (0, 1]")


def _demand_cap(fraction: float, capacity: int) -> int:
    if capacity <= 0:
        return 0
    return max(1, int(math.floor(fraction * capacity + 1e-9)))


def arrival_rate_for_load(params: SyntheticWorkloadParams, cpu_count: int,
                          gpu_count: int, load: float = 1.0) -> float:
    """Arrival rate at which mean offered demand equals `load` x capacity.

    Offered demand is measured in slot-timesteps per timestep; at load = 1.0
    the expected incoming work matches what the cluster can serve.
    """
    slo, shi = params.short_duration
    llo, lhi = params.long_duration
    mean_dur = (params.short_fraction * (slo + shi) / 2.0
                + (1.0 - params.short_fraction) * (llo + lhi) / 2.0)
    mean_demand = 0.0
    for cap in (_demand_cap(params.max_demand_fraction, cpu_count),
                _demand_cap(params.max_demand_fraction, gpu_count)):
        if cap > 0:
            mean_demand += (1 + cap) / 2.0
    if mean_demand == 0:
        raise ValueError("cluster has no resources")
    return load * (cpu_count + gpu_count) / (mean_demand * mean_dur)


def gen_synthetic(params: SyntheticWorkloadParams, seed: int, count: int, *,
                  cpu_count: int, gpu_count: int,
                  weights: ValueWeights = ValueWeights()) -> list[Job]:
    """Draw `count` jobs arriving by a discrete-time Poisson process.

    Per-timestep arrival counts are Poisson(arrival_rate); durations follow
    the short/long mixture, demands are uniform between 1 and the per-type
    cap, and QoS levels are drawn from the configured choices.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = np.random.default_rng(seed)
    cpu_cap = _demand_cap(params.max_demand_fraction, cpu_count)
    gpu_cap = _demand_cap(params.max_demand_fraction, gpu_count)
    if cpu_cap == 0 and gpu_cap == 0:
        raise ValueError("cluster has no resources")
    jobs: list[Job] = []
    t = 0
    while len(jobs) < count:
        arrivals = rng.poisson(params.arrival_rate)
        for _ in range(min(arrivals, count - len(jobs))):
            if rng.random() < params.short_fraction:
                lo, hi = params.short_duration
            else:
                lo, hi = params.long_duration
            duration = int(rng.integers(lo, hi + 1))
            cpu_req = int(rng.integers(1, cpu_cap + 1)) if cpu_cap else 0
            gpu_req = int(rng.integers(1, gpu_cap + 1)) if gpu_cap else 0
            qos = float(rng.choice(params.qos_choices))
            jobs.append(Job.create(
                id=len(jobs) + 1,
                enter_time=t,
                duration=duration,
                cpu_req=cpu_req,
                gpu_req=gpu_req,
                qos=qos,
                value=job_value(cpu_req, gpu_req, duration, qos, weights),
            ))
        t += 1
    return jobs


@dataclass(frozen=True)
class TraceWorkloadParams:
    path: str
    time_scale: float = 3600.0
    qos_range: tuple[float, float] = (0.1, 0.9)
    gpu_augment_prob: float = 0.25
    cpu_demand_cap: int = 10
    gpu_demand_cap: int = 10
    max_jobs: Optional[int] = None

    def __post_init__(self):
        lo, hi = self.qos_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError("qos_range must lie within (0, 1]")
        if self.time_scale <= 0:
            raise ValueError("time_scale must be positive")
        if not 0.0 <= self.gpu_augment_prob <= 1.0:
            raise ValueError("gpu_augment_prob must be a probability")
        if self.cpu_demand_cap < 1:
            raise ValueError("cpu_demand_cap must be >= 1")


@dataclass(frozen=True)
class SwfRecord:
    submit_time: float
    run_time: float
    processors: int


@dataclass
class SwfParseResult:
    records: list[SwfRecord] = field(default_factory=list)
    skipped: int = 0


def parse_swf(path: str) -> SwfParseResult:
    """Parse a standard-workload-format log.

    Uses submit time, run time and allocated processors (fields 2, 4 and 5 of
    the 18-column format); comment lines start with ';'.  Records with a
    nonpositive runtime or processor count are skipped and counted.
    """
    result = SwfParseResult()
    try:
        fh = open(path)
    except OSError as exc:
        raise WorkloadError(f"cannot read SWF file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith(";"):
                continue
            fields = line.split()
            if len(fields) < 5:
                raise WorkloadError(f"{path}:{lineno}: expected >= 5 fields, got {len(fields)}")
            try:
                submit = float(fields[1])
                run_time = float(fields[3])
                procs = int(float(fields[4]))
            except ValueError as exc:
                raise WorkloadError(f"{path}:{lineno}: malformed numeric field: {exc}") from exc
            if run_time <= 0 or procs <= 0:
                result.skipped += 1
                continue
            result.records.append(SwfRecord(submit, run_time, procs))
    return result


def jobs_from_swf_records(records: Sequence[SwfRecord], params: TraceWorkloadParams,
                          seed: int, weights: ValueWeights = ValueWeights()) -> list[Job]:
    """Scale SWF records to simulator timesteps and augment QoS/GPU demand."""
    rng = np.random.default_rng(seed)
    records = list(records)
    if params.max_jobs is not None:
        records = records[: params.max_jobs]
    if not records:
        return []
    base = min(r.submit_time for r in records)
    jobs = []
    qlo, qhi = params.qos_range
    for i, rec in enumerate(records):
        enter = int(math.floor((rec.submit_time - base) / params.time_scale))
        duration = max(1, int(math.ceil(rec.run_time / params.time_scale)))
        cpu_req = min(max(1, rec.processors), params.cpu_demand_cap)
        gpu_req = 0
        if params.gpu_demand_cap > 0 and rng.random() < params.gpu_augment_prob:
            gpu_req = int(rng.integers(1, params.gpu_demand_cap + 1))
        qos = float(rng.uniform(qlo, qhi))
        jobs.append(Job.create(
            id=i + 1,
            enter_time=enter,
            duration=duration,
            cpu_req=cpu_req,
            gpu_req=gpu_req,
            qos=qos,
            value=job_value(cpu_req, gpu_req, duration, qos, weights),
        ))
    jobs.sort(key=lambda j: (j.enter_time, j.id))
    return jobs


@dataclass
class SwfLoadResult:
    jobs: list[Job]
    skipped: int


def load_swf(params: TraceWorkloadParams, seed: int,
             weights: ValueWeights = ValueWeights()) -> SwfLoadResult:
    parsed = parse_swf(params.path)
    return SwfLoadResult(jobs=jobs_from_swf_records(parsed.records, params, seed, weights),
                         skipped=parsed.skipped)


class SyntheticWorkload:
    """Reusable synthetic source: one call per episode seed."""

    def __init__(self, params: SyntheticWorkloadParams, count: int, *,
                 cpu_count: int, gpu_count: int, weights: ValueWeights = ValueWeights()):
        self.params = params
        self.count = count
        self.cpu_count = cpu_count
        self.gpu_count = gpu_count
        self.weights = weights

    def sample(self, seed: int) -> list[Job]:
        return gen_synthetic(self.params, seed, self.count,
                             cpu_count=self.cpu_count, gpu_count=self.gpu_count,
                             weights=self.weights)


class TraceWorkload:
    """SWF-backed source; the file is parsed once, augmentation is per-seed."""

    def __init__(self, params: TraceWorkloadParams, weights: ValueWeights = ValueWeights()):
        self.params = params
        self.weights = weights
        parsed = parse_swf(params.path)
        self.records = parsed.records
        self.skipped = parsed.skipped

    def sample(self, seed: int) -> list[Job]:
        return jobs_from_swf_records(self.records, self.params, seed, self.weights)
