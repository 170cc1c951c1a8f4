import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vnfprof.agent import AllocationTrace
from vnfprof.domain import ResourceVector, WeightVector
from vnfprof.metrics import (SCENARIO_WEIGHTS, BaselineError, ErrorRow, ScenarioResult, ci95, percentage_error,
                             read_errors, read_scenarios, steady_state_summary, steady_window, write_errors,
                             write_scenarios)


def constant_trace(vcpu, mem, lc, or_lc, episodes=20, seeds=1):
    alloc = np.tile([vcpu, mem, lc], (seeds, episodes, 1)).astype(float)
    out = np.full((seeds, episodes), or_lc * lc)
    return AllocationTrace(alloc, out, np.full((seeds, episodes), 400.0))


@pytest.mark.parametrize("alloc,opt,expected", [(1.0, 0.8, 25.0), (0.8, 0.8, 0.0), (0.76, 0.8, -5.0)])
def test_percentage_error_examples(alloc, opt, expected):
    assert percentage_error(alloc, opt) == pytest.approx(expected, abs=1e-12)


def test_zero_optimum_rejected():
    with pytest.raises(BaselineError):
        percentage_error(1.0, 0.0)


@given(st.floats(0.01, 1e4), st.floats(-1e4, 1e4))
def test_error_antisymmetric_about_optimum(opt, a):
    assert percentage_error(a, opt) == pytest.approx(-percentage_error(2 * opt - a, opt), abs=1e-6)


def test_ci_constant_samples():
    assert ci95([3.0] * 10) == (3.0, 0.0)


def test_ci_alternating_closed_form():
    mean, half = ci95([0.0, 1.0] * 50)
    sd = math.sqrt(25.0 / 99.0)  # 100 draws of a fair 0/1 with ddof=1
    assert mean == 0.5
    assert half == pytest.approx(1.96 * sd / 10.0, rel=1e-12)
    assert half == pytest.approx(0.0985, abs=5e-5)


def test_ci_shrinks_with_root_n():
    base = [0.0, 1.0, 2.0, 5.0]
    _, h1 = ci95(base * 25)
    _, h4 = ci95(base * 100)
    sd1, sd4 = np.std(base * 25, ddof=1), np.std(base * 100, ddof=1)
    assert h4 / h1 == pytest.approx(0.5 * sd4 / sd1, rel=1e-12)


def test_ci_needs_two():
    with pytest.raises(ValueError):
        ci95([1.0])


def test_steady_row_example():
    r = steady_state_summary(constant_trace(0.8, 1600.0, 600.0, 0.3438))
    assert (r.vcpu_pct, r.mem_pct) == pytest.approx((40.0, 100.0))
    assert r.or_lc_pct == pytest.approx(34.38)


def test_steady_row_other_example():
    r = steady_state_summary(constant_trace(0.7, 1073.92, 500.0, 0.6064))
    assert (r.vcpu_pct, r.mem_pct, r.or_lc_pct) == pytest.approx((35.0, 67.12, 60.64))


def test_full_window_is_plain_mean():
    rng = np.random.default_rng(0)
    alloc = rng.uniform([0.6, 1000, 400], [1.8, 1600, 800], (2, 15, 3))
    tr = AllocationTrace(alloc, alloc[:, :, 2] * 0.5, np.full((2, 15), 300.0))
    r = steady_state_summary(tr, window=15)
    assert r.vcpu == pytest.approx(alloc[:, :, 0].mean())
    assert r.mem == pytest.approx(alloc[:, :, 1].mean())
    assert r.lc == pytest.approx(alloc[:, :, 2].mean())


def test_default_window_is_final_tenth():
    assert steady_window(300) == 30 and steady_window(5) == 1
    tr = constant_trace(1.0, 1200.0, 500.0, 0.5)
    tr.alloc[0, :18, 0] = 1.8
    assert steady_state_summary(tr).vcpu == pytest.approx(1.0)


def test_short_trace_rejected():
    with pytest.raises(ValueError):
        steady_state_summary(constant_trace(1.0, 1200, 500, 0.5, episodes=5), window=6)


@given(st.permutations(range(6)))
def test_window_permutation_invariant(perm):
    rng = np.random.default_rng(1)
    alloc = rng.uniform([0.6, 1000, 400], [1.8, 1600, 800], (1, 10, 3))
    out = alloc[:, :, 2] * rng.uniform(0.2, 1.0, (1, 10))
    tr = AllocationTrace(alloc, out, np.full((1, 10), 300.0))
    idx = np.r_[np.arange(4), 4 + np.array(perm)]
    shuffled = AllocationTrace(alloc[:, idx], out[:, idx], tr.input_rate)
    a, b = steady_state_summary(tr, window=6), steady_state_summary(shuffled, window=6)
    assert (a.vcpu_pct, a.mem_pct, a.or_lc_pct) == pytest.approx((b.vcpu_pct, b.mem_pct, b.or_lc_pct), rel=1e-12)


@given(st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_percent_inversion(vp, mp):
    r = ScenarioResult(WeightVector(1, 0, 0), vp, mp, 50.0)
    assert r.vcpu == pytest.approx(vp * 2.0 / 100.0) and r.mem == pytest.approx(mp * 1600.0 / 100.0)
    assert ScenarioResult(WeightVector(1, 0, 0), 40.0, 100.0, 0.0).vcpu == pytest.approx(0.8)


def test_errors_against_optimum():
    r = steady_state_summary(constant_trace(1.0, 1200.0, 500.0, 0.5, seeds=2), optimum=ResourceVector(0.8, 1200, 400))
    assert r.errors == pytest.approx((25.0, 0.0, 25.0))
    assert r.errors_ci95 == (0.0, 0.0, 0.0)


def test_thirteen_scenarios():
    assert len(SCENARIO_WEIGHTS) == 13 == len(set(SCENARIO_WEIGHTS))
    assert SCENARIO_WEIGHTS[0].as_tuple() == (1.0, 0.0, 0.0)
    assert SCENARIO_WEIGHTS[-1].as_tuple() == pytest.approx((1 / 3,) * 3)


def test_scenario_csv_round_trip(tmp_path):
    r = steady_state_summary(constant_trace(0.8, 1600.0, 600.0, 0.3438), weights=SCENARIO_WEIGHTS[0],
                             optimum=ResourceVector(0.8, 1000, 400), vnf="inline")
    p = tmp_path / "scenarios_inline.csv"
    write_scenarios(p, [r, steady_state_summary(constant_trace(1.0, 1000, 400, 0.9))])
    rows = read_scenarios(p)
    assert rows[0]["vnf"] == "inline" and float(rows[0]["vcpu_pct"]) == r.vcpu_pct
    assert float(rows[0]["err_lc_pct"]) == pytest.approx(50.0)
    assert rows[1]["err_vcpu_pct"] == "nan"


def test_errors_csv_round_trip(tmp_path):
    rows = [ErrorRow(25, "rl", "vcpu", -12.5, 3.1), ErrorRow(50, "rf", "lc", float("nan"), float("nan"))]
    p = tmp_path / "errors.csv"
    write_errors(p, rows)
    back = read_errors(p)
    assert back[0] == rows[0] and math.isnan(back[1].error_pct)
    p.write_text("x\n")
    with pytest.raises(ValueError):
        read_errors(p)
