import numpy as np
import pytest

from greensched.env import DatacenterEnv, EnvConfig
from greensched.jobs import Job
from greensched.power import PowerModel
from greensched.workload import SyntheticWorkload, SyntheticWorkloadParams, arrival_rate_for_load


def make_job(id=1, enter_time=0, duration=3, cpu_req=2, gpu_req=0, qos=1.0, value=10.0):
    return Job.create(id=id, enter_time=enter_time, duration=duration,
                      cpu_req=cpu_req, gpu_req=gpu_req, qos=qos, value=value)


def small_env(jobs=None, cpu=4, gpu=2, horizon=12, n=4, episode_length=40,
              power=None, budget=None, qos_penalty=1.0):
    config = EnvConfig(cpu_count=cpu, gpu_count=gpu, time_horizon=horizon,
                       ready_pool_size=n, episode_length=episode_length,
                       actions_per_timestep_budget=budget,
                       qos_penalty_coeff=qos_penalty)
    return DatacenterEnv(config, jobs if jobs is not None else [],
                         power or PowerModel.constant(1.0))


def synthetic_env(cpu=5, gpu=5, horizon=24, n=5, episode_length=64, count=120,
                  load=1.0, power=None, long_duration=(10, 20)):
    base = SyntheticWorkloadParams(long_duration=long_duration)
    rate = arrival_rate_for_load(base, cpu, gpu, load=load)
    params = SyntheticWorkloadParams(arrival_rate=rate, long_duration=long_duration)
    workload = SyntheticWorkload(params, count, cpu_count=cpu, gpu_count=gpu)
    config = EnvConfig(cpu_count=cpu, gpu_count=gpu, time_horizon=horizon,
                       ready_pool_size=n, episode_length=episode_length)
    return DatacenterEnv(config, workload, power or PowerModel.constant(1.0))


class UniformRandomPolicy:
    """Picks uniformly over the whole action space, ignoring the mask."""

    name = "uniform"

    def __init__(self, seed=0):
        self.rng = np.random.default_rng(seed)

    def select(self, observation, mask):
        return int(self.rng.integers(0, len(mask)))


class RandomValidPolicy:
    """Picks uniformly among currently valid actions."""

    name = "random_valid"

    def __init__(self, seed=0):
        self.rng = np.random.default_rng(seed)

    def select(self, observation, mask):
        return int(self.rng.choice(np.flatnonzero(mask)))
