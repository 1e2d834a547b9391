"""Transition storage: ring replay buffer and line-delimited dataset files."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ..env import Observation


@dataclass
class Transition:
    obs: Observation
    action: int
    reward: float
    next_obs: Observation
    done: bool
    policy: str = ""


class ReplayBuffer:
    """Ring store with uniform with-replacement sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._cursor = 0
        self.inserted = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._cursor] = transition
        self._cursor = (self._cursor + 1) % self.capacity
        self.inserted += 1

    def extend(self, transitions: Iterable[Transition]) -> None:
        for tr in transitions:
            self.add(tr)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


# -- dataset files ----------------------------------------------------------


def _encode_obs(obs: Observation) -> dict:
    packed = np.packbits(obs.grid_channels.astype(np.uint8))
    return {
        "grid": base64.b64encode(packed.tobytes()).decode(),
        "shape": list(obs.grid_channels.shape),
        "jobs": [float(v) for v in obs.ready_jobs.reshape(-1)],
        "jobs_shape": list(obs.ready_jobs.shape),
        "time": obs.current_time,
    }


def _decode_obs(blob: dict) -> Observation:
    shape = tuple(blob["shape"])
    bits = np.frombuffer(base64.b64decode(blob["grid"]), dtype=np.uint8)
    grid = np.unpackbits(bits, count=int(np.prod(shape))).reshape(shape).astype(np.uint8)
    jobs = np.asarray(blob["jobs"], dtype=np.float64).reshape(tuple(blob["jobs_shape"]))
    return Observation(grid_channels=grid, ready_jobs=jobs, current_time=blob["time"])


def save_dataset(path: str, transitions: list[Transition], header: Optional[dict] = None) -> None:
    """Line-delimited records with a JSON header line."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"kind": "greensched-dataset", "size": len(transitions),
                             **(header or {})}, sort_keys=True) + "\n")
        for tr in transitions:
            record = {
                "s": _encode_obs(tr.obs),
                "a": tr.action,
                "r": tr.reward,
                "s2": _encode_obs(tr.next_obs),
                "d": tr.done,
                "p": tr.policy,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_dataset(path: str) -> tuple[list[Transition], dict]:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "greensched-dataset":
            raise ValueError(f"{path} is not a transition dataset")
        transitions = []
        for line in fh:
            rec = json.loads(line)
            transitions.append(Transition(
                obs=_decode_obs(rec["s"]),
                action=int(rec["a"]),
                reward=float(rec["r"]),
                next_obs=_decode_obs(rec["s2"]),
                done=bool(rec["d"]),
                policy=rec.get("p", ""),
            ))
    return transitions, header
