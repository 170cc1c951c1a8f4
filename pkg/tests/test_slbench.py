import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vnfprof.envsim import VnfKind
from vnfprof.slbench import (DatasetSizeError, Mlp, MlpSpec, RfSpec, build_tree, fit_regressor, landmark_retrain,
                             minmax_scale, mlp_spec_for, rf_spec_for, split_90_10, train_mlp, train_rf)


def test_scale_example_column():
    z, sc = minmax_scale([0.0, 5.0, 10.0])
    np.testing.assert_allclose(z.ravel(), [0.0, 0.5, 1.0])


def test_constant_column_maps_to_zero():
    z, _ = minmax_scale([[3.0, 1.0], [3.0, 2.0]])
    assert np.all(z[:, 0] == 0.0)


def test_scale_empty_rejected():
    with pytest.raises(DatasetSizeError):
        minmax_scale(np.empty((0, 3)))


@given(arrays(float, st.tuples(st.integers(2, 30), st.integers(1, 4)),
              elements=st.floats(-1e4, 1e4, allow_nan=False)))
def test_scale_round_trip(x):
    z, sc = minmax_scale(x)
    assert np.all((z >= 0) & (z <= 1))
    varying = sc.span > 0
    np.testing.assert_allclose(sc.inverse(z)[:, varying], x[:, varying], atol=1e-9, rtol=0)


def test_split_sizes_and_partition():
    data = np.arange(100)
    train, test = split_90_10(data, seed=4)
    assert len(train) == 90 and len(test) == 10
    assert sorted(np.concatenate([train, test])) == list(range(100))


def test_split_seeded():
    data = list(range(50))
    assert split_90_10(data, 1) == split_90_10(data, 1)
    assert split_90_10(data, 1) != split_90_10(data, 2)


def test_split_too_small():
    with pytest.raises(DatasetSizeError):
        split_90_10(list(range(9)), 0)


def test_table_widths_and_trees():
    assert mlp_spec_for(VnfKind.SNORT_INLINE).hidden == (512, 256, 256)
    assert mlp_spec_for(VnfKind.SNORT_PASSIVE).hidden == (256, 128, 128)
    assert mlp_spec_for(VnfKind.VFW).hidden == (128, 128, 128)
    s = mlp_spec_for("vfw")
    assert (s.epochs, s.batch_size, s.lr, s.widths[0], s.widths[-1]) == (500, 16, 1e-4, 4, 3)
    assert [rf_spec_for(k).n_trees for k in VnfKind] == [500, 500, 800]


def test_gradient_matches_finite_differences():
    spec = MlpSpec(hidden=(6, 5, 4))
    rng = np.random.default_rng(0)
    net = Mlp(spec, rng)
    x, y = rng.random((10, 4)), rng.random((10, 3))
    _, grads = net.gradients(x, y)
    h = 1e-6
    for p, g in zip(net.params, grads):
        num = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            up = net.loss(x, y)
            p[i] = old - h
            down = net.loss(x, y)
            p[i] = old
            num[i] = (up - down) / (2 * h)
        rel = np.linalg.norm(num - g) / max(np.linalg.norm(num) + np.linalg.norm(g), 1e-12)
        assert rel < 1e-4


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 8), st.just(4)), elements=st.floats(-50, 50)))
def test_logistic_output_open_unit_interval(x):
    net = Mlp(MlpSpec(hidden=(8, 8, 8)), np.random.default_rng(1))
    out = net.predict(x)
    assert np.all((out > 0) & (out < 1))


def test_mlp_constant_target():
    rng = np.random.default_rng(2)
    x = rng.random((64, 4))
    y = np.full((64, 3), 0.6)
    net = train_mlp(MlpSpec(hidden=(16, 16, 16), epochs=300, lr=1e-3), x, y)
    np.testing.assert_allclose(net.predict(rng.random((10, 4))), 0.6, rtol=0.05)


def test_mlp_learns_identity():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.1, 0.9, (300, 1))
    train, test = split_90_10(np.arange(300), 0)
    spec = MlpSpec(hidden=(32, 32, 32), n_in=1, n_out=1, epochs=150, lr=1e-3)
    net = train_mlp(spec, x[train], x[train])
    assert net.loss(x[test], x[test]) < 1e-2


def test_mlp_deterministic():
    rng = np.random.default_rng(4)
    x, y = rng.random((40, 4)), rng.random((40, 3))
    spec = MlpSpec(hidden=(8, 8, 8), epochs=5)
    a, b = train_mlp(spec, x, y), train_mlp(spec, x, y)
    np.testing.assert_array_equal(a.predict(x), b.predict(x))


def test_empty_train_set():
    with pytest.raises(DatasetSizeError):
        train_mlp(MlpSpec(), np.empty((0, 4)), np.empty((0, 3)))
    with pytest.raises(DatasetSizeError):
        train_rf(RfSpec(), np.empty((0, 4)), np.empty((0, 3)))


def test_rf_constant_target_exact():
    rng = np.random.default_rng(5)
    x = rng.random((50, 4))
    rf = train_rf(RfSpec(n_trees=10), x, np.full((50, 3), 7.25))
    assert np.all(rf.predict(rng.random((5, 4))) == 7.25)


def test_stump_finds_step():
    x = np.linspace(0, 1, 21)[:, None]
    y = (x[:, 0] > 0.52).astype(float)[:, None]
    spec = RfSpec(n_trees=1, max_depth=1, min_leaf=1, feature_fraction=1.0, bootstrap=False)
    tree = build_tree(x, y, spec, np.random.default_rng(0))
    assert tree.depth == 1 and tree.feature[0] == 0
    assert 0.5 <= tree.threshold[0] < 0.55
    np.testing.assert_array_equal(tree.predict(x), y)


def test_rf_is_mean_of_trees():
    rng = np.random.default_rng(6)
    x, y = rng.random((60, 4)), rng.random((60, 3))
    rf = train_rf(RfSpec(n_trees=7), x, y)
    q = rng.random((9, 4))
    np.testing.assert_allclose(rf.predict(q), np.mean([t.predict(q) for t in rf.trees], axis=0), rtol=0, atol=1e-15)
    np.testing.assert_array_equal(rf.predict(q), rf.predict(q))


def test_rf_leaves_respect_min_leaf():
    rng = np.random.default_rng(7)
    x, y = rng.random((80, 4)), rng.random((80, 1))
    tree = build_tree(x, y, RfSpec(min_leaf=6, feature_fraction=1.0), rng)
    leaf_of = np.array([_leaf(tree, row) for row in x])
    _, counts = np.unique(leaf_of, return_counts=True)
    assert counts.min() >= 6


def _leaf(tree, row):
    i = 0
    while tree.feature[i] >= 0:
        i = tree.left[i] if row[tree.feature[i]] <= tree.threshold[i] else tree.right[i]
    return i


def test_fit_regressor_returns_original_units():
    rng = np.random.default_rng(8)
    x = rng.random((40, 4)) * 100
    y = np.column_stack([np.full(40, 1.2), np.full(40, 1300.0), np.full(40, 600.0)])
    reg = fit_regressor(RfSpec(n_trees=5), x, y)
    np.testing.assert_allclose(reg.predict(x[0]), [1.2, 1300.0, 600.0])


def _stream(n_episodes, per=3, seed=9):
    rng = np.random.default_rng(seed)
    return [(e, tuple(rng.random(4)), (1.0, 1200.0, 500.0 + 10 * e)) for e in range(n_episodes) for _ in range(per)]


SMALL = {"mlp": MlpSpec(hidden=(4, 4, 4), epochs=2), "rf": RfSpec(n_trees=3)}


def test_landmark_gap_and_growth():
    stream = [r for r in _stream(20) if r[0] >= 5]
    preds = landmark_retrain(stream, [3, 10, 15, 20], SMALL, (0.5, 0.5, 0.5, 0.5))
    assert preds[0].gap and preds[0].predictions == {"mlp": None, "rf": None}
    sizes = [p.n_train for p in preds]
    assert sizes == sorted(sizes) and sizes[1] > 0


def test_landmarks_must_ascend():
    with pytest.raises(ValueError):
        landmark_retrain(_stream(5), [4, 2], SMALL, (0, 0, 0, 0))


def test_single_final_landmark_equals_one_shot():
    stream = _stream(12)
    q = (0.2, 0.4, 0.6, 0.8)
    lp = landmark_retrain(stream, [12], {"rf": RfSpec(n_trees=4)}, q, split_seed=1)[0]
    idx, _ = split_90_10(np.arange(len(stream)), 1 + 12)
    x = np.array([r[1] for r in stream]); y = np.array([r[2] for r in stream])
    direct = fit_regressor(RfSpec(n_trees=4), x[idx], y[idx]).predict(q)
    np.testing.assert_array_equal(lp.predictions["rf"], direct)
    assert lp.n_train == len(idx) and "rf" in lp.test_mse
