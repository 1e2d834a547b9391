"""Job model shared by the simulator, workload generators, and schedulers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class JobState(str, Enum):
    WAITING = "waiting"
    READY = "ready"
    RUNNING = "running"
    SUSPENDED = "suspended"
    FINISHED = "finished"
    EXPIRED = "expired"


#: Order of the per-job feature vector exposed in observations.
JOB_VECTOR_FIELDS = (
    "value",
    "qos",
    "qos_violation_time",
    "enter_time",
    "expected_finish_time",
    "remaining_runtime",
    "cpu_req",
    "gpu_req",
)


def qos_deadline(expected_finish_time: float, qos: float) -> float:
    """Completion deadline implied by a QoS level.

    The deadline is expected_finish_time / qos, rounded to the nearest half
    time unit with ties rounding up, e.g. (10, 0.95) -> 10.5 and (48, 0.8)
    -> 60.  qos = 1.0 leaves the expected finish time unchanged.
    """
    if qos <= 0.0 or qos > 1.0:
        raise ValueError(f"qos must be in (0, 1], got {qos}")
    if expected_finish_time <= 0:
        raise ValueError(f"expected_finish_time must be positive, got {expected_finish_time}")
    raw = expected_finish_time / qos
    return math.floor(raw * 2.0 + 0.5) / 2.0


@dataclass
class Job:
    """One unit of work: demand, duration, value and lifecycle state."""

    id: int
    enter_time: int
    duration: int
    cpu_req: int
    gpu_req: int
    qos: float
    value: float
    remaining_runtime: int = 0
    expected_finish_time: float = 0.0
    qos_violation_time: float = 0.0
    state: JobState = JobState.WAITING

    @classmethod
    def create(cls, id: int, enter_time: int, duration: int, cpu_req: int,
               gpu_req: int, qos: float, value: float) -> "Job":
        if duration < 1:
            raise ValueError(f"job {id}: duration must be >= 1, got {duration}")
        if cpu_req < 0 or gpu_req < 0 or cpu_req + gpu_req < 1:
            raise ValueError(f"job {id}: demand ({cpu_req}, {gpu_req}) invalid")
        if value <= 0:
            raise ValueError(f"job {id}: value must be positive, got {value}")
        expected_finish = float(enter_time + duration)
        return cls(
            id=id,
            enter_time=enter_time,
            duration=duration,
            cpu_req=cpu_req,
            gpu_req=gpu_req,
            qos=qos,
            value=value,
            remaining_runtime=duration,
            expected_finish_time=expected_finish,
            qos_violation_time=qos_deadline(expected_finish, qos),
            state=JobState.WAITING,
        )

    @property
    def slots(self) -> int:
        return self.cpu_req + self.gpu_req

    @property
    def terminal(self) -> bool:
        return self.state in (JobState.FINISHED, JobState.EXPIRED)

    def vector(self) -> list[float]:
        """Fixed-size feature row used for ready-pool observation slots."""
        return [
            self.value,
            self.qos,
            self.qos_violation_time,
            float(self.enter_time),
            self.expected_finish_time,
            float(self.remaining_runtime),
            float(self.cpu_req),
            float(self.gpu_req),
        ]
