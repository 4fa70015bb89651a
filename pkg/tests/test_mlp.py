import math

import numpy as np
import pytest

from snapens.data_gen import RegressionDataset, gen_friedman1
from snapens.mlp import (
    MLPParams,
    SnapshotStore,
    TrainConfig,
    TrainingDivergence,
    _pattern_step,
    forward,
    init_params,
    load_store,
    loss_and_gradient,
    predict_cube,
    save_store,
    train_many,
    train_with_snapshots,
)


def oracle_forward(p: MLPParams, x):
    out = p.output_bias
    for j in range(p.hidden_units):
        s = p.hidden_biases[j]
        for q in range(p.input_dim):
            s += p.hidden_weights[j, q] * x[q]
        out += p.output_weights[j] * math.tanh(s)
    return out


def numeric_gradient(p: MLPParams, X, y, step=1e-5):
    d, h = p.input_dim, p.hidden_units
    theta = p.flatten()
    grad = np.empty_like(theta)
    for k in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[k] += step
        down[k] -= step
        lu = np.mean((forward(MLPParams.unflatten(up, d, h), X) - y) ** 2)
        ld = np.mean((forward(MLPParams.unflatten(down, d, h), X) - y) ** 2)
        grad[k] = (lu - ld) / (2 * step)
    return grad


def _random_params(rng, d, h, scale=1.0):
    return MLPParams(
        rng.normal(0, scale, (h, d)),
        rng.normal(0, scale, h),
        rng.normal(0, scale, h),
        rng.normal(0, scale),
    )


class TestInit:
    def test_deterministic(self):
        assert init_params(4, 3, seed=9) == init_params(4, 3, seed=9)
        assert init_params(4, 3, seed=9) != init_params(4, 3, seed=10)

    def test_parameter_count(self):
        assert init_params(10, 6, seed=0).flatten().size == 73

    def test_bounds(self):
        p = init_params(10, 6, seed=1)
        assert np.abs(p.hidden_weights).max() <= 1 / math.sqrt(10)
        assert np.abs(p.hidden_biases).max() <= 1 / math.sqrt(10)
        assert np.abs(p.output_weights).max() <= 1 / math.sqrt(6)
        assert abs(p.output_bias) <= 1 / math.sqrt(6)

    def test_scale(self):
        a = init_params(5, 4, seed=2)
        b = init_params(5, 4, seed=2, scale=0.1)
        np.testing.assert_allclose(b.flatten(), 0.1 * a.flatten(), rtol=1e-12)


class TestForward:
    def test_degenerate_net(self):
        p = MLPParams(np.zeros((3, 2)), np.zeros(3), np.zeros(3), 1.75)
        assert forward(p, np.array([3.0, -2.0])) == 1.75

    def test_sign_symmetry(self):
        rng = np.random.default_rng(0)
        p = _random_params(rng, 4, 5)
        x = rng.normal(size=4)
        q = MLPParams(-p.hidden_weights, p.hidden_biases, p.output_weights, p.output_bias)
        assert forward(q, -x) == forward(p, x)

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            d, h = rng.integers(1, 8, 2)
            p = _random_params(rng, d, h)
            x = rng.normal(size=d)
            assert forward(p, x) == pytest.approx(oracle_forward(p, x), rel=1e-12, abs=1e-14)

    def test_row_independence(self):
        rng = np.random.default_rng(2)
        p = _random_params(rng, 3, 4)
        X = rng.normal(size=(7, 3))
        batch = forward(p, X)
        assert all(batch[i] == forward(p, X[i]) for i in range(7))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(init_params(3, 2, 0), np.zeros(4))


class TestGradient:
    def test_small_net_against_finite_differences(self):
        rng = np.random.default_rng(3)
        p = _random_params(rng, 3, 2)
        X, y = rng.normal(size=(1, 3)), rng.normal(size=1)
        _, g = loss_and_gradient(p, X, y)
        fd = numeric_gradient(p, X, y)
        assert np.all(np.abs(g.flatten() - fd) <= 1e-6 * np.abs(fd) + 1e-8)

    def test_batch_gradient(self):
        rng = np.random.default_rng(4)
        p = _random_params(rng, 4, 3, 0.5)
        X, y = rng.normal(size=(9, 4)), rng.normal(size=9)
        loss, g = loss_and_gradient(p, X, y)
        assert loss == pytest.approx(np.mean((forward(p, X) - y) ** 2), rel=1e-13)
        fd = numeric_gradient(p, X, y)
        assert np.all(np.abs(g.flatten() - fd) <= 1e-6 * np.abs(fd) + 1e-8)

    def test_pattern_step_is_gradient_step(self):
        rng = np.random.default_rng(5)
        p = _random_params(rng, 3, 4, 0.5)
        x, t, lr = rng.normal(size=3), 0.3, 0.01
        _, g = loss_and_gradient(p, x[None, :], [t])
        W1, b1, W2 = p.hidden_weights.copy(), p.hidden_biases.copy(), p.output_weights.copy()
        b2 = np.array([p.output_bias])
        _pattern_step(x, t, W1, b1, W2, b2, lr, np.empty(4))
        stepped = MLPParams(W1, b1, W2, b2[0]).flatten()
        np.testing.assert_allclose(stepped, p.flatten() - lr * g.flatten(), rtol=1e-13, atol=1e-15)


def _toy_data(n=20, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, d))
    return RegressionDataset(X, np.sin(X[:, 0]) + 0.5 * X[:, 1])


class TestTraining:
    def test_zero_learning_rate_keeps_init(self):
        cfg = TrainConfig(4, total_epochs=20, snapshot_count=5, learning_rate=0.0, seed=7)
        store = train_with_snapshots(_toy_data(), cfg)
        init = init_params(3, 4, 7)
        assert len(store) == 5
        assert all(s == init for s in store.snapshots)

    def test_single_pattern_descent(self):
        ds = RegressionDataset(np.array([[0.1, -0.2]]), np.array([0.05]))
        cfg = TrainConfig(2, 50, 10, 0.05, seed=1, standardize=False, init_scale=0.1)
        store = train_with_snapshots(ds, cfg)
        assert store.train_losses[-1] < store.train_losses[0]

    @pytest.mark.parametrize("mode", ["full-batch", "per-pattern"])
    def test_determinism_and_store_invariants(self, mode):
        cfg = TrainConfig(3, 40, 8, 0.05, batch_mode=mode, seed=2)
        a = train_with_snapshots(_toy_data(), cfg)
        b = train_with_snapshots(_toy_data(), cfg)
        assert a == b
        assert len(a) == 8
        assert np.all(np.diff(a.epoch_of) > 0)
        assert a.epoch_of[-1] == 40 and a.epoch_of[0] == 5

    def test_constant_target_converges(self):
        rng = np.random.default_rng(3)
        ds = RegressionDataset(rng.uniform(-1, 1, (30, 2)), np.full(30, 0.7))
        cfg = TrainConfig(1, 2000, 10, 0.1, seed=0, standardize=False)
        store = train_with_snapshots(ds, cfg)
        assert store.train_losses[-1] < 1e-4

    def test_per_pattern_reduces_error(self):
        cfg = TrainConfig(4, 200, 10, 0.02, batch_mode="per-pattern", seed=3)
        ds = _toy_data(40)
        store = train_with_snapshots(ds, cfg)
        init = init_params(3, 4, 3)
        x = (ds.inputs - store.x_shift) / store.x_scale
        init_mse = np.mean((forward(init, x) * store.y_scale + store.y_shift - ds.targets) ** 2)
        assert store.train_losses[-1] < 0.05 * init_mse
        assert store.train_losses[-1] <= store.train_losses[0]

    def test_train_losses_are_raw_unit_mse(self):
        ds = _toy_data(25)
        store = train_with_snapshots(ds, TrainConfig(3, 30, 3, 0.05, seed=4))
        mse = np.mean((store.predict(2, ds.inputs) - ds.targets) ** 2)
        assert store.train_losses[2] == pytest.approx(mse, rel=1e-10)

    def test_divergence_reports_epoch(self):
        ds = RegressionDataset(np.array([[1.0], [2.0]]), np.array([1e3, -1e3]))
        cfg = TrainConfig(2, 2000, 20, 1e4, seed=0, standardize=False)
        with pytest.raises(TrainingDivergence) as info:
            train_with_snapshots(ds, cfg)
        assert info.value.epoch > 0 and "epoch" in str(info.value)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(3, total_epochs=10, snapshot_count=3)
        with pytest.raises(ValueError):
            TrainConfig(0)
        with pytest.raises(ValueError):
            TrainConfig(2, batch_mode="minibatch")

    def test_train_many_matches_single_runs(self):
        sets = [_toy_data(15, seed=s) for s in range(3)]
        cfg = TrainConfig(3, 20, 4, 0.05, seed=10)
        many = train_many(sets, cfg, seeds=[5, 6, 7])
        for ds, seed, store in zip(sets, [5, 6, 7], many):
            single = train_with_snapshots(ds, TrainConfig(3, 20, 4, 0.05, seed=seed))
            assert single == store


@pytest.fixture(scope="module")
def stores():
    ds = gen_friedman1(40, seed=0)
    cfg = TrainConfig(4, 30, 6, 0.01, seed=0)
    return train_many([ds.subset(range(i, i + 30)) for i in range(3)], cfg), ds


class TestCube:
    def test_shape_and_degenerate(self, stores):
        st, ds = stores
        cube = predict_cube(st, ds.inputs)
        assert cube.shape == (3, 6, 40)
        one = predict_cube(st[:1], ds.inputs[:1])
        assert one[0, 0, 0] == st[0].predict(0, ds.inputs[:1])[0]

    def test_spot_check_exact(self, stores):
        st, ds = stores
        cube = predict_cube(st, ds.inputs)
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n, t, p = rng.integers(3), rng.integers(6), rng.integers(40)
            assert cube[n, t, p] == st[n].predict(t, ds.inputs[p])[0]

    def test_dimension_mismatch(self, stores):
        st, _ = stores
        with pytest.raises(ValueError):
            predict_cube(st, np.zeros((2, 3)))


def test_store_binary_round_trip(tmp_path):
    store = train_with_snapshots(_toy_data(), TrainConfig(3, 12, 4, 0.05, seed=1))
    path = tmp_path / "net.snp"
    save_store(store, path)
    back = load_store(path)
    assert isinstance(back, SnapshotStore)
    assert back == store
    raw = path.read_bytes()
    assert raw[:4] == b"SNPS"
    # header (20) + epochs/losses (2*4*8) + scalers (2*3*8 + 16) + 4 snapshots * 16 params
    assert len(raw) == 20 + 64 + 64 + 4 * 16 * 8
