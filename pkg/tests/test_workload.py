import numpy as np
import pytest

from greensched.workload import (
    SyntheticWorkload,
    SyntheticWorkloadParams,
    TraceWorkload,
    TraceWorkloadParams,
    ValueWeights,
    WorkloadError,
    arrival_rate_for_load,
    gen_synthetic,
    job_value,
    load_swf,
    parse_swf,
)

DISJOINT = SyntheticWorkloadParams(arrival_rate=1.0, short_fraction=0.7,
                                   short_duration=(1, 10), long_duration=(11, 30))


def test_job_value_unit_case():
    assert job_value(1, 0, 1, 1.0, ValueWeights(w_cpu=1.0, w_gpu=2.0)) == 1.0


def test_job_value_hand_computation():
    # (1*4 + 2*4) * 6 * 0.5 = 36
    assert job_value(4, 4, 6, 0.5) == pytest.approx(36.0)


def test_job_value_linear_in_duration():
    v1 = job_value(3, 2, 5, 0.8)
    v2 = job_value(3, 2, 10, 0.8)
    assert v2 == pytest.approx(2 * v1)


def test_job_value_qos_multiplier_none():
    weights = ValueWeights(qos_multiplier="none")
    assert job_value(2, 1, 3, 0.5, weights) == job_value(2, 1, 3, 1.0, weights)


def test_job_value_monotone_in_each_argument():
    base = job_value(2, 2, 4, 0.5)
    assert job_value(3, 2, 4, 0.5) > base
    assert job_value(2, 3, 4, 0.5) > base
    assert job_value(2, 2, 5, 0.5) > base
    assert job_value(2, 2, 4, 0.6) > base


def test_gen_synthetic_empty():
    assert gen_synthetic(DISJOINT, seed=0, count=0, cpu_count=10, gpu_count=10) == []


def test_gen_synthetic_short_fraction():
    jobs = gen_synthetic(DISJOINT, seed=42, count=10_000, cpu_count=10, gpu_count=10)
    short = sum(1 for j in jobs if j.duration <= 10)
    assert abs(short / len(jobs) - 0.7) <= 0.02


def test_gen_synthetic_demand_cap():
    jobs = gen_synthetic(DISJOINT, seed=7, count=2_000, cpu_count=10, gpu_count=10)
    assert all(1 <= j.cpu_req <= 5 and 1 <= j.gpu_req <= 5 for j in jobs)


def test_gen_synthetic_durations_within_ranges():
    jobs = gen_synthetic(DISJOINT, seed=3, count=2_000, cpu_count=10, gpu_count=10)
    assert all(1 <= j.duration <= 30 for j in jobs)
    assert all(j.duration <= 10 or 11 <= j.duration for j in jobs)


def test_gen_synthetic_deterministic():
    a = gen_synthetic(DISJOINT, seed=5, count=500, cpu_count=8, gpu_count=4)
    b = gen_synthetic(DISJOINT, seed=5, count=500, cpu_count=8, gpu_count=4)
    assert [(j.id, j.enter_time, j.duration, j.cpu_req, j.gpu_req, j.qos, j.value)
            for j in a] == \
           [(j.id, j.enter_time, j.duration, j.cpu_req, j.gpu_req, j.qos, j.value)
            for j in b]


def test_gen_synthetic_values_follow_value_model():
    weights = ValueWeights(w_cpu=2.0, w_gpu=3.0)
    jobs = gen_synthetic(DISJOINT, seed=9, count=200, cpu_count=10, gpu_count=10,
                         weights=weights)
    for j in jobs:
        assert j.value == pytest.approx(
            job_value(j.cpu_req, j.gpu_req, j.duration, j.qos, weights))


def test_gen_synthetic_poisson_counts():
    # variance/mean of per-timestep arrival counts stays near 1
    params = SyntheticWorkloadParams(arrival_rate=1.0, long_duration=(11, 30))
    jobs = gen_synthetic(params, seed=13, count=120_000, cpu_count=10, gpu_count=10)
    last_t = jobs[-1].enter_time
    counts = np.zeros(last_t, dtype=int)  # drop the truncated final timestep
    for j in jobs:
        if j.enter_time < last_t:
            counts[j.enter_time] += 1
    assert len(counts) >= 100_000
    ratio = counts.var() / counts.mean()
    assert 0.95 <= ratio <= 1.05


def test_arrival_rate_for_load_hand_computation():
    params = SyntheticWorkloadParams(arrival_rate=1.0)
    # caps 5/5 -> mean demand 6; mean duration 0.7*5.5 + 0.3*20 = 9.85
    expected = 20.0 / (6.0 * 9.85)
    assert arrival_rate_for_load(params, 10, 10, load=1.0) == pytest.approx(expected)
    assert arrival_rate_for_load(params, 10, 10, load=2.0) == pytest.approx(2 * expected)


# -- SWF loading --------------------------------------------------------------

SWF_FIXTURE = """\
; SWF fixture with comments
; UnixStartTime: 0
1 0    0 3600 8  -1 -1 8  -1 -1 1 1 1 1 1 1 -1 -1
2 3600 0 7200 16 -1 -1 16 -1 -1 1 1 1 1 1 1 -1 -1
3 7200 0 -1   4  -1 -1 4  -1 -1 0 1 1 1 1 1 -1 -1
"""


def write_fixture(tmp_path, text=SWF_FIXTURE):
    path = tmp_path / "trace.swf"
    path.write_text(text)
    return str(path)


def test_parse_swf_skips_unknown_runtime(tmp_path):
    result = parse_swf(write_fixture(tmp_path))
    assert len(result.records) == 2
    assert result.skipped == 1


def test_load_swf_hand_scaled_times(tmp_path):
    params = TraceWorkloadParams(path=write_fixture(tmp_path), time_scale=3600.0,
                                 cpu_demand_cap=10, gpu_demand_cap=10)
    jobs = load_swf(params, seed=1).jobs
    # submits 0 and 3600 at one hour per step -> enter times 0 and 1
    assert [j.enter_time for j in jobs] == [0, 1]
    # runtimes one and two hours -> durations 1 and 2
    assert [j.duration for j in jobs] == [1, 2]
    assert [j.cpu_req for j in jobs] == [8, 10]  # 16 capped at 10


def test_load_swf_augmentation_deterministic(tmp_path):
    params = TraceWorkloadParams(path=write_fixture(tmp_path), time_scale=3600.0)
    a, b = load_swf(params, seed=5).jobs, load_swf(params, seed=5).jobs
    assert [(j.qos, j.gpu_req, j.value) for j in a] == \
           [(j.qos, j.gpu_req, j.value) for j in b]
    c = load_swf(params, seed=6).jobs
    assert [(j.qos, j.gpu_req) for j in a] != [(j.qos, j.gpu_req) for j in c]


def test_load_swf_qos_within_range(tmp_path):
    big = "\n".join(f"{i} {i * 100} 0 {1000 + i} 4 -1 -1 4 -1 -1 1 1 1 1 1 1 -1 -1"
                    for i in range(1, 200))
    params = TraceWorkloadParams(path=write_fixture(tmp_path, big),
                                 qos_range=(0.1, 0.9), gpu_augment_prob=0.5,
                                 gpu_demand_cap=4, time_scale=100.0)
    jobs = load_swf(params, seed=2).jobs
    assert all(0.1 <= j.qos <= 0.9 for j in jobs)
    assert any(j.gpu_req > 0 for j in jobs) and any(j.gpu_req == 0 for j in jobs)
    assert all(j.gpu_req <= 4 for j in jobs)


def test_parse_swf_malformed_line_reports_lineno(tmp_path):
    path = write_fixture(tmp_path, "1 0 0 3600 8\nnot numeric at all here x\n")
    with pytest.raises(WorkloadError, match=":2"):
        parse_swf(path)


def test_parse_swf_short_line_reports_lineno(tmp_path):
    path = write_fixture(tmp_path, "1 0 0\n")
    with pytest.raises(WorkloadError, match=":1"):
        parse_swf(path)


def test_parse_swf_missing_file():
    with pytest.raises(WorkloadError):
        parse_swf("/nonexistent/trace.swf")


def test_trace_workload_source_parses_once(tmp_path):
    source = TraceWorkload(TraceWorkloadParams(path=write_fixture(tmp_path),
                                               time_scale=3600.0))
    assert source.skipped == 1
    jobs = source.sample(seed=3)
    assert len(jobs) == 2
    assert jobs == sorted(jobs, key=lambda j: (j.enter_time, j.id))


def test_max_jobs_truncation(tmp_path):
    big = "\n".join(f"{i} {i * 10} 0 500 2 -1 -1 2 -1 -1 1 1 1 1 1 1 -1 -1"
                    for i in range(1, 50))
    params = TraceWorkloadParams(path=write_fixture(tmp_path, big), max_jobs=10,
                                 time_scale=10.0)
    assert len(load_swf(params, seed=0).jobs) == 10


def test_synthetic_workload_source_interface():
    source = SyntheticWorkload(DISJOINT, count=50, cpu_count=6, gpu_count=2)
    jobs = source.sample(seed=12)
    assert len(jobs) == 50
    assert all(j.cpu_req <= 3 and j.gpu_req <= 1 for j in jobs)
