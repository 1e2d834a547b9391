"""Baseline scheduling policies over the observation/action interface.

Each heuristic scans the ready-pool slots whose action is currently valid
(slot occupied and placeable) and picks the best by its criterion; when no
ready job is schedulable it emits no_op.  Heuristics never suspend.  Ties
break toward the lowest slot index.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .env import Observation
from .jobs import JOB_VECTOR_FIELDS

_FIELD = {name: i for i, name in enumerate(JOB_VECTOR_FIELDS)}


class Policy(Protocol):
    def select(self, observation: Observation, mask: np.ndarray) -> int: ...


def _no_op(mask: np.ndarray) -> int:
    return len(mask) - 1


def _best_slot(obs: Observation, mask: np.ndarray, field: str, largest: bool) -> int:
    n = len(obs.ready_jobs)
    best, best_key = None, None
    for i in range(n):
        if not mask[i]:
            continue
        key = obs.ready_jobs[i][_FIELD[field]]
        if best is None or (key > best_key if largest else key < best_key):
            best, best_key = i, key
    return best if best is not None else _no_op(mask)


def sjf_select(obs: Observation, mask: np.ndarray) -> int:
    """Shortest remaining runtime first."""
    return _best_slot(obs, mask, "remaining_runtime", largest=False)


def qos_select(obs: Observation, mask: np.ndarray) -> int:
    """Highest QoS level first."""
    return _best_slot(obs, mask, "qos", largest=True)


def hvf_select(obs: Observation, mask: np.ndarray) -> int:
    """Highest job value first."""
    return _best_slot(obs, mask, "value", largest=True)


def fcfs_select(obs: Observation, mask: np.ndarray) -> int:
    """Earliest arrival first."""
    return _best_slot(obs, mask, "enter_time", largest=False)


class HeuristicPolicy:
    """Stateless wrapper so heuristics satisfy the Policy protocol."""

    def __init__(self, name: str):
        if name not in HEURISTICS:
            raise ValueError(f"unknown heuristic: {name!r}")
        self.name = name
        self._select = HEURISTICS[name]

    def select(self, observation: Observation, mask: np.ndarray) -> int:
        return self._select(observation, mask)


HEURISTICS = {
    "sjf": sjf_select,
    "qos": qos_select,
    "hvf": hvf_select,
    "fcfs": fcfs_select,
}
