"""Discrete-time datacenter scheduling environment with intermittent power.

The cluster is a planning-horizon occupancy image: one row per future
timestep, one column per resource slot (CPUs first, then GPUs).  Scheduling
actions place job rectangles into the image; advancing time shifts the image
up one row, completes jobs whose rectangles reach the top, and repaints
powered-off cells from the power model.  When the binding power level drops
below what running jobs occupy, stranded jobs are suspended work-preservingly
and re-queued.
"""

from __future__ import annotations

import copy
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .jobs import JOB_VECTOR_FIELDS, Job, JobState
from .power import PowerModel, powered_slots

FREE = 0
POWERED_OFF = -1


@dataclass(frozen=True)
class EnvConfig:
    cpu_count: int
    gpu_count: int
    time_horizon: int = 24
    ready_pool_size: int = 5
    episode_length: int = 200
    actions_per_timestep_budget: Optional[int] = None
    qos_penalty_coeff: float = 1.0

    def __post_init__(self):
        if self.cpu_count < 1 or self.gpu_count < 0:
            raise ValueError("cpu_count must be >= 1 and gpu_count >= 0")
        if self.time_horizon < 1 or self.ready_pool_size < 1 or self.episode_length < 1:
            raise ValueError("time_horizon, ready_pool_size and episode_length must be >= 1")
        if self.qos_penalty_coeff < 0:
            raise ValueError("qos_penalty_coeff must be >= 0")
        if self.actions_per_timestep_budget is not None and self.actions_per_timestep_budget < 1:
            raise ValueError("actions_per_timestep_budget must be >= 1 when set")

    @property
    def total_slots(self) -> int:
        return self.cpu_count + self.gpu_count

    @property
    def n_actions(self) -> int:
        """Ready-pool slots plus suspend and no_op."""
        return self.ready_pool_size + 2

    @property
    def action_budget(self) -> int:
        return self.actions_per_timestep_budget or self.ready_pool_size


@dataclass
class Observation:
    """Agent-visible state: binary grid channels plus ready-pool vectors."""

    grid_channels: np.ndarray  # (2, H, W) uint8: allocation mask, powered-off mask
    ready_jobs: np.ndarray     # (n, len(JOB_VECTOR_FIELDS)) float64, zero-padded
    current_time: int


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: dict


@dataclass(frozen=True)
class Placement:
    start_row: int
    cpu_slots: range
    gpu_slots: range

    @property
    def columns(self) -> list[int]:
        return list(self.cpu_slots) + list(self.gpu_slots)


class ResourceGrid:
    """Occupancy image: cell values are FREE, POWERED_OFF or a job id (> 0)."""

    def __init__(self, time_horizon: int, cpu_count: int, gpu_count: int):
        self.horizon = time_horizon
        self.cpu_count = cpu_count
        self.gpu_count = gpu_count
        self.width = cpu_count + gpu_count
        self.cells = np.zeros((time_horizon, self.width), dtype=np.int64)

    def clear(self) -> None:
        self.cells[:] = FREE

    def shift(self) -> None:
        """Drop row 0, move everything up, append a fresh free row."""
        self.cells[:-1] = self.cells[1:]
        self.cells[-1] = FREE

    def allocate(self, job_id: int, placement: Placement, rows: int) -> None:
        cols = placement.columns
        window = self.cells[placement.start_row: placement.start_row + rows, cols]
        if (window != FREE).any():
            raise ValueError(f"placement for job {job_id} overlaps occupied cells")
        self.cells[placement.start_row: placement.start_row + rows,
                   np.asarray(cols, dtype=int)] = job_id

    def release(self, job_id: int) -> None:
        self.cells[self.cells == job_id] = FREE

    def allocation_mask(self) -> np.ndarray:
        return (self.cells > 0).astype(np.uint8)

    def powered_off_mask(self) -> np.ndarray:
        return (self.cells == POWERED_OFF).astype(np.uint8)


def _first_runs(ok: np.ndarray, length: int, offset: int) -> np.ndarray:
    """Per row: first index where `length` consecutive True begin, else -1.

    `ok` is (rows, block_width); returned indices are shifted by `offset`
    so they address full-grid columns.
    """
    rows, width = ok.shape
    if length == 0:
        return np.zeros(rows, dtype=int) + offset
    if length > width:
        return np.full(rows, -1, dtype=int)
    counts = np.cumsum(ok, axis=1)
    window = counts[:, length - 1:].copy()
    window[:, 1:] -= counts[:, :-length]
    hits = window == length
    first = np.where(hits.any(axis=1), hits.argmax(axis=1) + offset, -1)
    return first


def find_placement(grid: ResourceGrid, job: Job) -> Optional[Placement]:
    """First-fit: earliest start row with the lowest-index contiguous runs.

    A placement needs cpu_req and gpu_req contiguous free (and powered)
    columns in their resource blocks, identical across remaining_runtime
    consecutive rows, fully inside the horizon.
    """
    rows = job.remaining_runtime
    if rows < 1 or rows > grid.horizon:
        return None
    if job.cpu_req > grid.cpu_count or job.gpu_req > grid.gpu_count:
        return None
    free = grid.cells == FREE
    col_sums = np.cumsum(free, axis=0)
    window = col_sums[rows - 1:, :].copy()
    window[1:, :] -= col_sums[:-rows, :]
    ok = window == rows  # (start_rows, width): column free across the window
    cpu_first = _first_runs(ok[:, :grid.cpu_count], job.cpu_req, 0)
    gpu_first = _first_runs(ok[:, grid.cpu_count:], job.gpu_req, grid.cpu_count)
    feasible = (cpu_first >= 0) & (gpu_first >= 0)
    if not feasible.any():
        return None
    start = int(feasible.argmax())
    c0, g0 = int(cpu_first[start]), int(gpu_first[start])
    return Placement(
        start_row=start,
        cpu_slots=range(c0, c0 + job.cpu_req),
        gpu_slots=range(g0, g0 + job.gpu_req),
    )


class DatacenterEnv:
    """The scheduling MDP.  One logical thread per instance."""

    SUSPEND = "suspend"
    NO_OP = "no_op"

    def __init__(self, config: EnvConfig, workload, power: Union[PowerModel, "PowerFactory"],
                 record_events: bool = True):
        self.config = config
        self.workload = workload
        self.power_source = power
        self.record_events = record_events
        self.grid = ResourceGrid(config.time_horizon, config.cpu_count, config.gpu_count)
        self.power: Optional[PowerModel] = None
        self.done = True
        self.t = 0
        self.events: list[dict] = []

    # -- episode lifecycle -------------------------------------------------

    def reset(self, seed: int = 0) -> Observation:
        cfg = self.config
        if hasattr(self.workload, "sample"):
            self._jobs = self.workload.sample(seed)
        else:
            self._jobs = [copy.deepcopy(j) for j in self.workload]
        for job in self._jobs:
            if job.cpu_req > cfg.cpu_count or job.gpu_req > cfg.gpu_count:
                raise ValueError(f"job {job.id} demand exceeds cluster capacity")
            if job.duration > cfg.time_horizon:
                raise ValueError(f"job {job.id} duration {job.duration} exceeds "
                                 f"time_horizon {cfg.time_horizon}")
        self._jobs = sorted(self._jobs, key=lambda j: (j.enter_time, j.id))
        if isinstance(self.power_source, PowerModel):
            self.power_source.reset()
            self.power = self.power_source
        else:
            self.power = self.power_source(seed)

        self.t = 0
        self.done = False
        self.grid.clear()
        self.wait_pool: deque[Job] = deque()
        self.ready_pool: list[Job] = []
        self.running: dict[int, Placement] = {}
        self._job_by_id = {j.id: j for j in self._jobs}
        self._next_arrival = 0
        self._actions_this_timestep = 0
        self.events = []
        self.finished_value = 0.0
        self.cumulative_reward = 0.0
        self.stats = {
            "completions": 0,
            "suspensions": 0,
            "invalid_actions": 0,
            "agent_steps": 0,
            "qos_violation_steps": 0,
            "qos_violators": set(),
            "util_samples": [],
        }
        self._paint_power()
        self._admit_arrivals()
        self._refill_ready_pool()
        return self.observe()

    # -- acting ------------------------------------------------------------

    def step(self, action: int) -> StepResult:
        if self.done:
            raise RuntimeError("step called on a finished episode")
        n = self.config.ready_pool_size
        if not 0 <= action <= n + 1:
            raise ValueError(f"action must be in [0, {n + 1}], got {action}")
        self.stats["agent_steps"] += 1
        info = {"completions": 0, "qos_violations": 0,
                "invalid_action": False, "suspensions": 0}
        advance = False

        if action == n + 1:
            advance = True
        elif action == n:
            victim = self._suspend_victim()
            if victim is None:
                info["invalid_action"] = True
                self.stats["invalid_actions"] += 1
            else:
                self._suspend(victim, reason="agent")
                info["suspensions"] += 1
            advance = True
        else:
            scheduled = self._try_schedule(action)
            if not scheduled:
                info["invalid_action"] = True
                self.stats["invalid_actions"] += 1
                advance = True
            else:
                self._actions_this_timestep += 1
                if self._actions_this_timestep >= self.config.action_budget:
                    advance = True
            self._refill_ready_pool()

        reward = self._advance_time(info) if advance else 0.0
        self.cumulative_reward += reward
        return StepResult(self.observe(), reward, self.done, info)

    def _try_schedule(self, slot: int) -> bool:
        if slot >= len(self.ready_pool):
            return False
        job = self.ready_pool[slot]
        placement = find_placement(self.grid, job)
        if placement is None:
            return False
        self.grid.allocate(job.id, placement, job.remaining_runtime)
        resumed = job.state == JobState.SUSPENDED
        job.state = JobState.RUNNING
        self.running[job.id] = placement
        del self.ready_pool[slot]
        self._log("resume" if resumed else "schedule", job.id,
                  start_time=self.t + placement.start_row,
                  columns=placement.columns, rows=job.remaining_runtime)
        return True

    def _suspend_victim(self) -> Optional[Job]:
        if not self.running:
            return None
        jobs = [self._job_by_id[jid] for jid in self.running]
        return min(jobs, key=lambda j: (j.value, -j.enter_time, -j.id))

    def _suspend(self, job: Job, reason: str) -> None:
        self.grid.release(job.id)
        del self.running[job.id]
        job.state = JobState.SUSPENDED
        self.ready_pool.insert(0, job)
        if len(self.ready_pool) > self.config.ready_pool_size:
            overflow = self.ready_pool.pop()
            overflow.state = JobState.WAITING
            self.wait_pool.appendleft(overflow)
        self.stats["suspensions"] += 1
        self._log("suspend", job.id, reason=reason,
                  remaining_runtime=job.remaining_runtime)

    # -- time --------------------------------------------------------------

    def _advance_time(self, info: dict) -> float:
        reward = 0.0
        row0 = self.grid.cells[0]
        powered_now = int((row0 != POWERED_OFF).sum())
        allocated_now = int((row0 > 0).sum())
        if powered_now > 0:
            self.stats["util_samples"].append(allocated_now / powered_now)

        # Jobs whose rectangle has reached the top row execute one step.
        for jid, placement in list(self.running.items()):
            if placement.start_row > 0:
                continue
            job = self._job_by_id[jid]
            job.remaining_runtime -= 1
            if job.remaining_runtime == 0:
                job.state = JobState.FINISHED
                del self.running[jid]
                self.finished_value += job.value
                reward += job.value
                info["completions"] += 1
                self.stats["completions"] += 1
                self._log("finish", jid, value=job.value)

        self.grid.shift()
        for jid, placement in list(self.running.items()):
            if placement.start_row > 0:
                self.running[jid] = Placement(placement.start_row - 1,
                                              placement.cpu_slots, placement.gpu_slots)
        self.t += 1
        suspensions_before = self.stats["suspensions"]
        self._paint_power()
        info["suspensions"] += self.stats["suspensions"] - suspensions_before

        for job in self._admitted_pending_jobs():
            if self.t > job.qos_violation_time:
                penalty = self.config.qos_penalty_coeff * job.value / job.duration
                reward -= penalty
                info["qos_violations"] += 1
                self.stats["qos_violation_steps"] += 1
                self.stats["qos_violators"].add(job.id)
                self._log("qos_violate", job.id, penalty=penalty)

        self._admit_arrivals()
        self._refill_ready_pool()
        self._actions_this_timestep = 0

        out_of_work = (self._next_arrival >= len(self._jobs) and not self.wait_pool
                       and not self.ready_pool and not self.running)
        if self.t >= self.config.episode_length or out_of_work:
            self.done = True
            for job in self._admitted_pending_jobs():
                job.state = JobState.EXPIRED
        return reward

    def _paint_power(self) -> None:
        """Repaint powered-off cells for the whole horizon; strand row-0 jobs.

        Row 0 is the binding level: allocated cells sitting on slots that
        just lost power force a work-preserving suspension (pool
        contraction).  Future rows only gate new placements.
        """
        cfg = self.config
        fracs = self.power.horizon(self.t, cfg.time_horizon)
        off_mask = np.zeros((cfg.time_horizon, cfg.total_slots), dtype=bool)
        for k, frac in enumerate(fracs):
            on_cpu = powered_slots(float(frac), cfg.cpu_count)
            on_gpu = powered_slots(float(frac), cfg.gpu_count)
            off_mask[k, on_cpu:cfg.cpu_count] = True
            off_mask[k, cfg.cpu_count + on_gpu:] = True

        stranded = sorted(int(v) for v in np.unique(self.grid.cells[0][off_mask[0]]) if v > 0)
        for jid in stranded:
            self._log("power_contract", jid)
            self._suspend(self._job_by_id[jid], reason="power")

        cells = self.grid.cells
        cells[(cells == POWERED_OFF) & ~off_mask] = FREE
        cells[(cells == FREE) & off_mask] = POWERED_OFF

    def _admit_arrivals(self) -> None:
        while (self._next_arrival < len(self._jobs)
               and self._jobs[self._next_arrival].enter_time <= self.t):
            job = self._jobs[self._next_arrival]
            self.wait_pool.append(job)
            self._log("admit", job.id, value=job.value, duration=job.duration,
                      cpu_req=job.cpu_req, gpu_req=job.gpu_req)
            self._next_arrival += 1

    def _refill_ready_pool(self) -> None:
        while len(self.ready_pool) < self.config.ready_pool_size and self.wait_pool:
            job = self.wait_pool.popleft()
            if job.state == JobState.WAITING:
                job.state = JobState.READY
            self.ready_pool.append(job)

    def _admitted_pending_jobs(self) -> list[Job]:
        pending = [self._job_by_id[jid] for jid in self.running]
        pending.extend(self.ready_pool)
        pending.extend(self.wait_pool)
        return pending

    # -- views -------------------------------------------------------------

    def observe(self) -> Observation:
        n = self.config.ready_pool_size
        ready = np.zeros((n, len(JOB_VECTOR_FIELDS)), dtype=np.float64)
        for i, job in enumerate(self.ready_pool):
            ready[i] = job.vector()
        channels = np.stack([self.grid.allocation_mask(), self.grid.powered_off_mask()])
        return Observation(grid_channels=channels, ready_jobs=ready, current_time=self.t)

    def valid_action_mask(self) -> np.ndarray:
        """True per action: placeable ready slot, suspend if anything runs, no_op."""
        n = self.config.ready_pool_size
        mask = np.zeros(n + 2, dtype=bool)
        for i, job in enumerate(self.ready_pool):
            mask[i] = find_placement(self.grid, job) is not None
        mask[n] = bool(self.running)
        mask[n + 1] = True
        return mask

    def total_job_value(self) -> float:
        return sum(j.value for j in self._jobs if j.state == JobState.FINISHED)

    def metrics(self) -> dict:
        util = self.stats["util_samples"]
        steps = self.stats["agent_steps"]
        return {
            "total_job_value": self.total_job_value(),
            "completed_jobs": self.stats["completions"],
            "qos_violations": len(self.stats["qos_violators"]),
            "mean_utilization": float(np.mean(util)) if util else 0.0,
            "invalid_action_rate": self.stats["invalid_actions"] / steps if steps else 0.0,
            "suspensions": self.stats["suspensions"],
        }

    # -- event log ---------------------------------------------------------

    def _log(self, event: str, job_id: Optional[int], **payload) -> None:
        if self.record_events:
            self.events.append({"t": self.t, "event": event, "job_id": job_id, **payload})

    def events_jsonl(self) -> str:
        return "\n".join(json.dumps(ev, sort_keys=True) for ev in self.events)
