"""Green-datacenter scheduling simulator with heuristic and learned schedulers."""

from .env import DatacenterEnv, EnvConfig, Observation, StepResult, find_placement
from .heuristics import HEURISTICS, HeuristicPolicy
from .jobs import Job, JobState, qos_deadline
from .power import (
    BatterySpec,
    BatteryState,
    PowerModel,
    SyntheticRenewableParams,
    battery_dispatch,
    gen_synthetic_renewable,
    powered_slots,
)
from .workload import (
    SyntheticWorkload,
    SyntheticWorkloadParams,
    TraceWorkload,
    TraceWorkloadParams,
    ValueWeights,
    arrival_rate_for_load,
    gen_synthetic,
    job_value,
    load_swf,
)

__version__ = "0.1.0"
