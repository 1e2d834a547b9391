"""Power availability models: constant levels, trace files, synthetic renewables.

A power model answers one question for the simulator: what fraction of the
cluster can be powered at timestep t.  Trace-backed models convert generated
kilowatts (optionally buffered through a battery) into a fraction of the
cluster's full electrical draw.  Fractions for future timesteps act as the
horizon forecast and are exact by construction for every built-in model.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BatterySpec:
    capacity_kwh: float
    max_charge_kw: float
    max_discharge_kw: float
    round_trip_efficiency: float = 1.0

    def __post_init__(self):
        if self.capacity_kwh < 0:
            raise ValueError("battery capacity_kwh must be >= 0")
        if self.max_charge_kw < 0 or self.max_discharge_kw < 0:
            raise ValueError("battery charge/discharge rates must be >= 0")
        if not 0.0 < self.round_trip_efficiency <= 1.0:
            raise ValueError("round_trip_efficiency must be in (0, 1]")


@dataclass(frozen=True)
class BatteryState:
    charge_kwh: float = 0.0


def battery_dispatch(spec: BatterySpec, state: BatteryState, generation_kw: float,
                     demand_kw: float, dt: float = 1.0) -> tuple[float, BatteryState]:
    """Greedy storage policy: charge all surplus, discharge to cover deficit.

    Returns the power made available to the load and the new battery state.
    Charging pays the round-trip efficiency; discharge is bounded by the
    stored energy and the discharge rate.  Energy balance:
    delta_charge = (charged * eta - discharged) * dt.
    """
    if generation_kw < 0 or demand_kw < 0 or dt <= 0:
        raise ValueError("battery_dispatch inputs must be nonnegative (dt > 0)")
    eta = spec.round_trip_efficiency
    surplus = generation_kw - demand_kw
    if surplus >= 0:
        headroom_kw = (spec.capacity_kwh - state.charge_kwh) / (eta * dt) if eta > 0 else 0.0
        charged = min(surplus, spec.max_charge_kw, max(0.0, headroom_kw))
        supplied = generation_kw - charged
        new_charge = state.charge_kwh + charged * eta * dt
    else:
        deficit = -surplus
        discharged = min(deficit, spec.max_discharge_kw, state.charge_kwh / dt)
        supplied = generation_kw + discharged
        new_charge = state.charge_kwh - discharged * dt
    new_charge = min(max(new_charge, 0.0), spec.capacity_kwh)
    return supplied, BatteryState(charge_kwh=new_charge)


@dataclass(frozen=True)
class SyntheticRenewableParams:
    """Shape of the built-in solar/wind generator (24-step days)."""

    solar_peak_kw: float = 150.0
    wind_base_kw: float = 200.0
    wind_night_boost: float = 0.75
    wind_noise_kw: float = 60.0
    day_length: int = 24


@dataclass(frozen=True)
class RenewableTrace:
    """Per-timestep generation series in kW."""

    solar_kw: np.ndarray
    wind_kw: np.ndarray

    def __post_init__(self):
        if len(self.solar_kw) != len(self.wind_kw) or len(self.solar_kw) == 0:
            raise ValueError("solar and wind series must be nonempty and equal length")
        if (np.asarray(self.solar_kw) < 0).any() or (np.asarray(self.wind_kw) < 0).any():
            raise ValueError("generation must be nonnegative")

    def __len__(self) -> int:
        return len(self.solar_kw)

    def total_kw(self, idx: int) -> float:
        return float(self.solar_kw[idx] + self.wind_kw[idx])


def gen_synthetic_renewable(params: SyntheticRenewableParams, seed: int,
                            length: int) -> RenewableTrace:
    """Diurnal solar (zero at night, peak mid-day) plus night-weighted wind."""
    if length <= 0:
        raise ValueError("length must be positive")
    rng = np.random.default_rng(seed)
    half_day = params.day_length / 2.0
    hours = np.arange(length) % params.day_length
    solar = params.solar_peak_kw * np.maximum(
        0.0, np.sin(math.pi * (hours - half_day / 2.0) / half_day))
    night = (hours < params.day_length / 4.0) | (hours >= 3 * params.day_length / 4.0)
    wind = params.wind_base_kw * (1.0 + params.wind_night_boost * night)
    wind = np.maximum(0.0, wind + rng.normal(0.0, params.wind_noise_kw, size=length))
    return RenewableTrace(solar_kw=solar, wind_kw=wind)


def read_renewable_trace_csv(path: str) -> RenewableTrace:
    """CSV with header ``timestep,solar_kw,wind_kw``."""
    solar, wind = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            solar.append(float(row["solar_kw"]))
            wind.append(float(row["wind_kw"]))
    return RenewableTrace(solar_kw=np.asarray(solar), wind_kw=np.asarray(wind))


def write_renewable_trace_csv(path: str, trace: RenewableTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestep", "solar_kw", "wind_kw"])
        for t in range(len(trace)):
            writer.writerow([t, repr(float(trace.solar_kw[t])), repr(float(trace.wind_kw[t]))])


def read_level_trace_csv(path: str) -> np.ndarray:
    """CSV with header ``timestep,fraction``."""
    levels = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            levels.append(float(row["fraction"]))
    return np.asarray(levels)


class PowerModel:
    """Resolves a power source to per-timestep availability fractions.

    All built-in kinds are deterministic functions of the timestep, so the
    horizon forecast equals the eventual binding value.  Traces shorter than
    an episode wrap cyclically (logged once).
    """

    def __init__(self, kind: str, *, level: float = 1.0,
                 levels: Optional[np.ndarray] = None,
                 trace: Optional[RenewableTrace] = None,
                 cluster_full_draw_kw: float = 0.0,
                 battery: Optional[BatterySpec] = None):
        self.kind = kind
        self.level = level
        self.levels = levels
        self.trace = trace
        self.cluster_full_draw_kw = cluster_full_draw_kw
        self.battery = battery
        self._battery_state = BatteryState()
        self._supplied: list[float] = []
        self._warned_wrap = False
        if kind == "constant":
            if not 0.0 <= level <= 1.0:
                raise ValueError("constant power level must be in [0, 1]")
        elif kind == "level_trace":
            if levels is None or len(levels) == 0:
                raise ValueError("level_trace requires a nonempty fraction series")
            if (np.asarray(levels) < 0).any() or (np.asarray(levels) > 1).any():
                raise ValueError("trace fractions must be in [0, 1]")
        elif kind == "renewable_trace":
            if trace is None:
                raise ValueError("renewable_trace requires a generation trace")
            if cluster_full_draw_kw <= 0:
                raise ValueError("cluster_full_draw_kw must be positive")
        else:
            raise ValueError(f"unknown power model kind: {kind}")

    @classmethod
    def constant(cls, level: float) -> "PowerModel":
        return cls("constant", level=level)

    @classmethod
    def from_level_trace(cls, levels: Sequence[float]) -> "PowerModel":
        return cls("level_trace", levels=np.asarray(levels, dtype=float))

    @classmethod
    def from_renewable(cls, trace: RenewableTrace, cluster_full_draw_kw: float,
                       battery: Optional[BatterySpec] = None) -> "PowerModel":
        return cls("renewable_trace", trace=trace,
                   cluster_full_draw_kw=cluster_full_draw_kw, battery=battery)

    @classmethod
    def synthetic_renewable(cls, params: SyntheticRenewableParams, seed: int, length: int,
                            cluster_full_draw_kw: float,
                            battery: Optional[BatterySpec] = None) -> "PowerModel":
        return cls.from_renewable(gen_synthetic_renewable(params, seed, length),
                                  cluster_full_draw_kw, battery)

    def _wrapped_index(self, t: int, length: int) -> int:
        if t >= length and not self._warned_wrap:
            log.warning("power trace of length %d exhausted at t=%d; wrapping cyclically",
                        length, t)
            self._warned_wrap = True
        return t % length

    def _supplied_kw(self, t: int) -> float:
        # Battery state evolves sequentially, so supplied power is extended
        # step by step and cached; lookups are pure afterwards.
        assert self.trace is not None
        while len(self._supplied) <= t:
            tau = len(self._supplied)
            gen = self.trace.total_kw(self._wrapped_index(tau, len(self.trace)))
            if self.battery is not None:
                supplied, self._battery_state = battery_dispatch(
                    self.battery, self._battery_state, gen, self.cluster_full_draw_kw)
            else:
                supplied = gen
            self._supplied.append(supplied)
        return self._supplied[t]

    def fraction(self, t: int) -> float:
        """Available power fraction in [0, 1] at timestep t."""
        if t < 0:
            raise ValueError("timestep must be >= 0")
        if self.kind == "constant":
            return self.level
        if self.kind == "level_trace":
            return float(self.levels[self._wrapped_index(t, len(self.levels))])
        return min(1.0, self._supplied_kw(t) / self.cluster_full_draw_kw)

    def horizon(self, t0: int, horizon: int) -> np.ndarray:
        """Fractions for rows t0 .. t0+horizon-1 of the planning window."""
        return np.asarray([self.fraction(t0 + k) for k in range(horizon)])

    def reset(self) -> None:
        """Rewind battery state so a new episode replays identically."""
        self._battery_state = BatteryState()
        self._supplied = []


def powered_slots(fraction: float, capacity: int) -> int:
    """Slots that stay on at a power fraction: floor(fraction * capacity)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"power fraction must be in [0, 1], got {fraction}")
    return min(capacity, int(math.floor(fraction * capacity + 1e-9)))
