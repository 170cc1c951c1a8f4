import itertools

import pytest
from hypothesis import given, strategies as st

from vnfprof.domain import (ACTIONS, ALL_FLAGS, DEFAULT_GRID, HOLD_ACTION, Action, GridError, KpiMeasurement,
                            KpiTargets, ProfilerState, ResourceBounds, ResourceRangeError, ResourceVector, StateKey,
                            WeightVector, apply_action, discretize, feasible_actions, normalize_resource)

G = DEFAULT_GRID
OK_KPI = KpiMeasurement(95.0, 80.0, 2.0, 380.0)


def test_normalize_examples():
    assert normalize_resource(0.6, G.vcpu) == 0.0
    assert normalize_resource(1.2, G.vcpu) == pytest.approx(0.5)
    assert normalize_resource(0.8, G.vcpu) == pytest.approx(0.2 / 1.2, abs=1e-4)
    assert normalize_resource(0.8, G.vcpu) == pytest.approx(0.1667, abs=1e-4)


def test_normalize_out_of_bounds():
    with pytest.raises(ResourceRangeError):
        normalize_resource(2.0, G.vcpu)


@given(st.floats(0.6, 1.8), st.floats(0.6, 1.8))
def test_normalize_strictly_monotone(a, b):
    if a < b:
        assert normalize_resource(a, G.vcpu) < normalize_resource(b, G.vcpu)


def test_grid_levels_and_cardinality():
    assert G.shape == (7, 7, 9)
    assert G.n_points == 441
    assert G.n_keys == 7 * 7 * 9 * 16 == 7056
    assert G.vcpu.levels[-1] == 1.8 and G.lc.levels[3] == 550.0


def test_bounds_validation():
    with pytest.raises(ValueError):
        ResourceBounds(1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        ResourceBounds(0.0, 1.0, 0.3)
    with pytest.raises(GridError):
        G.vcpu.index_of(0.7)


def test_discretize_min_corner_all_ok():
    state = ProfilerState(ResourceVector(0.6, 1000, 400), OK_KPI, 380.0)
    assert discretize(state, KpiTargets()) == StateKey(0, 0, 0, ALL_FLAGS)


def test_discretize_cpu_above_band_clears_cpu_bit_only():
    kpi = KpiMeasurement(100.5, 80.0, 2.0, 380.0)
    key = discretize(ProfilerState(ResourceVector(1.2, 1300, 600), kpi, 380.0), KpiTargets())
    assert key.kpi_flags == ALL_FLAGS & ~1


def test_key_enumeration_is_injective():
    codes = {StateKey(i, j, k, f).encode(G) for (i, j, k) in G.points() for f in range(16)}
    assert len(codes) == 7056
    assert all(StateKey.decode(c, G).encode(G) == c for c in codes)


def test_apply_action_examples():
    r = ResourceVector(1.2, 1300, 600)
    assert apply_action(r, Action("vcpu", "increase")) == ResourceVector(1.4, 1300, 600)
    assert apply_action(ResourceVector(0.6, 1300, 600), Action("vcpu", "decrease")) == ResourceVector(0.6, 1300, 600)
    assert apply_action(r, HOLD_ACTION) == r


def test_feasible_action_counts():
    assert len(feasible_actions(ResourceVector(1.2, 1300, 600))) == 7
    low = feasible_actions(ResourceVector(0.6, 1000, 400))
    assert len(low) == 4 and all(a.direction in ("increase", "hold") for a in low)
    high = feasible_actions(ResourceVector(1.8, 1600, 800))
    assert len(high) == 4 and all(a.direction in ("decrease", "hold") for a in high)


def test_frozen_resources_never_move():
    acts = feasible_actions(ResourceVector(1.2, 1300, 600), frozen=("mem", "lc"))
    assert {a.target for a in acts} == {"vcpu", None}


points = st.sampled_from(list(G.points()))


@given(points)
def test_reverse_action_is_identity_in_interior(idx):
    r = G.vector(idx)
    for a in ACTIONS:
        if a.direction == "hold":
            continue
        moved = apply_action(r, a)
        if moved == r:
            continue
        back = Action(a.target, "decrease" if a.direction == "increase" else "increase")
        assert apply_action(moved, back) == r


@given(points)
def test_feasible_actions_always_move_except_hold(idx):
    r = G.vector(idx)
    for a in feasible_actions(r):
        assert (apply_action(r, a) == r) == (a.direction == "hold")


def test_weight_vector_validation():
    with pytest.raises(ValueError):
        WeightVector(0.3, 0.3, 0.3)
    with pytest.raises(ValueError):
        WeightVector(1.5, -0.5, 0.0)
    assert WeightVector(1, 0, 0).label() == "w(1,0,0)"


def test_kpi_targets_checks():
    t = KpiTargets()
    assert t.satisfied(OK_KPI)
    assert not t.satisfied(KpiMeasurement(85.0, 80.0, 2.0, 1.0))
    assert t.overload_free(KpiMeasurement(85.0, 80.0, 2.0, 1.0))
    assert not t.satisfied(KpiMeasurement(95.0, 98.5, 2.0, 1.0))
    assert not t.satisfied(KpiMeasurement(95.0, 90.0, 7.6, 1.0))
    with pytest.raises(ValueError):
        KpiTargets((95.0, 90.0))


def test_resource_vector_access():
    r = ResourceVector(1.0, 1200.0, 500.0)
    assert r["mem"] == r[1] == 1200.0
    assert tuple(r) == (1.0, 1200.0, 500.0)
    assert G.snap_vector(ResourceVector(1.07, 1260.0, 2000.0)) == ResourceVector(1.0, 1300.0, 800.0)


def test_action_order_is_fixed():
    assert [str(a) for a in ACTIONS] == ["increase_vcpu", "increase_mem", "increase_lc", "decrease_vcpu",
                                          "decrease_mem", "decrease_lc", "hold"]
    assert len(set(itertools.chain(ACTIONS))) == 7
