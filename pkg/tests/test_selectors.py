import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from snapens.ensemble_core import (
    EvalCounter,
    PredictionCube,
    Selection,
    ensemble_predict,
    ensemble_sse,
    load_cube,
    load_selection,
    oob_ensemble_sse,
    save_cube,
    save_selection,
    validation_error,
)
from snapens.selectors import (
    SimAnnConfig,
    select_bagging,
    select_epoch,
    select_neuralbag,
    select_seca,
    select_simann,
)

DETERMINISTIC = {
    "bagging": (select_bagging, oracles.bagging),
    "epoch": (select_epoch, oracles.epoch),
    "neuralbag": (select_neuralbag, oracles.neuralbag),
    "seca": (select_seca, oracles.seca),
}


def _cubes(n, oob=True, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        M, T, P = rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 9)
        yield oracles.random_cube(rng, M, T, P, oob=oob)


class TestCube:
    def test_immutable(self):
        cube = oracles.random_cube(np.random.default_rng(0), 2, 3, 4)
        with pytest.raises(ValueError):
            cube.values[0, 0, 0] = 1.0
        with pytest.raises(ValueError):
            cube.point_targets[0] = 1.0

    def test_fingerprint(self):
        rng = np.random.default_rng(1)
        cube = oracles.random_cube(rng, 3, 4, 5)
        before = cube.fingerprint()
        for f in (select_bagging, select_epoch, select_neuralbag, select_seca, select_simann):
            f(cube)
        assert cube.fingerprint() == before
        assert cube.scaled(2.0).fingerprint() != before

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            PredictionCube(np.zeros((2, 3)), np.zeros(3))
        with pytest.raises(ValueError):
            PredictionCube(np.zeros((2, 3, 4)), np.zeros(5))
        with pytest.raises(ValueError):
            PredictionCube(np.full((1, 1, 1), np.nan), np.zeros(1))
        with pytest.raises(ValueError):
            PredictionCube(np.zeros((2, 3, 4)), np.zeros(4), np.zeros((2, 4)))

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        for oob in (True, False):
            cube = oracles.random_cube(rng, 3, 4, 6, oob=oob)
            save_cube(cube, tmp_path / "c.bin")
            back = load_cube(tmp_path / "c.bin")
            assert back.fingerprint() == cube.fingerprint()
            assert back.mode == cube.mode

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"JUNK" + bytes(40))
        with pytest.raises(ValueError):
            load_cube(tmp_path / "x.bin")


class TestSelection:
    def test_validation(self):
        with pytest.raises(ValueError):
            Selection([0, 1], [0.5, 0.6])
        with pytest.raises(ValueError):
            Selection([0, -1], [0.5, 0.5])
        with pytest.raises(ValueError):
            Selection([0, 1], [1.0])

    def test_check_against_cube(self):
        cube = oracles.random_cube(np.random.default_rng(0), 2, 3, 4)
        with pytest.raises(IndexError):
            Selection.uniform([0, 3]).check(cube)
        with pytest.raises(ValueError):
            Selection.uniform([0, 1, 2]).check(cube)

    def test_round_trip(self, tmp_path):
        sel = Selection([3, 0, 7], [0.2, 0.3, 0.5])
        save_selection(sel, tmp_path / "s.txt")
        assert load_selection(tmp_path / "s.txt") == sel

    def test_ensemble_predict_weights(self):
        cube = oracles.random_cube(np.random.default_rng(4), 3, 2, 5, oob=False)
        sel = Selection([1, 0, 1], [0.5, 0.25, 0.25])
        expected = 0.5 * cube.values[0, 1] + 0.25 * cube.values[1, 0] + 0.25 * cube.values[2, 1]
        np.testing.assert_allclose(ensemble_predict(cube, sel), expected, rtol=1e-15)


class TestErrors:
    def test_oob_error_matches_oracle(self):
        rng = np.random.default_rng(5)
        for cube in _cubes(50, seed=5):
            tau = rng.integers(0, cube.n_snapshots, cube.n_nets)
            assert oob_ensemble_sse(cube, tau) == pytest.approx(oracles.ensemble_error(cube, tau), rel=1e-12, abs=1e-14)

    def test_external_error_matches_oracle(self):
        rng = np.random.default_rng(6)
        for cube in _cubes(50, oob=False, seed=6):
            tau = rng.integers(0, cube.n_snapshots, cube.n_nets)
            assert validation_error(cube, tau) == pytest.approx(oracles.ensemble_error(cube, tau), rel=1e-12, abs=1e-14)

    def test_uncovered_points_are_skipped(self):
        values = np.zeros((2, 1, 3))
        w = np.array([[1.0, 0.0], [0.0, 0.0], [0.5, 0.5]])
        cube = PredictionCube(values, [1.0, 100.0, 2.0], w)
        assert oob_ensemble_sse(cube, [0, 0]) == 5.0

    def test_single_net_oob_equals_own_validation_error(self):
        rng = np.random.default_rng(7)
        cube = oracles.random_cube(rng, 1, 4, 8)
        pts = cube.validation_points(0)
        for t in range(4):
            resid = cube.values[0, t, pts] - cube.point_targets[pts]
            assert oob_ensemble_sse(cube, [t]) == pytest.approx(resid @ resid, rel=1e-13)


class TestOracleEquivalence:
    @pytest.mark.parametrize("name", list(DETERMINISTIC))
    def test_oob(self, name):
        fast, slow = DETERMINISTIC[name]
        for cube in _cubes(50, seed=10):
            assert fast(cube).tau.tolist() == slow(cube)

    @pytest.mark.parametrize("name", ["bagging", "epoch", "seca"])
    def test_external(self, name):
        fast, slow = DETERMINISTIC[name]
        for cube in _cubes(50, oob=False, seed=11):
            assert fast(cube).tau.tolist() == slow(cube)

    def test_seca_order(self):
        rng = np.random.default_rng(12)
        cube = oracles.random_cube(rng, 4, 5, 8)
        order = [2, 0, 3, 1]
        assert select_seca(cube, order=order).tau.tolist() == oracles.seca(cube, order)
        with pytest.raises(ValueError):
            select_seca(cube, order=[0, 0, 1, 2])

    def test_neuralbag_needs_oob(self):
        cube = oracles.random_cube(np.random.default_rng(0), 2, 3, 4, oob=False)
        with pytest.raises(ValueError):
            select_neuralbag(cube)
        with pytest.raises(ValueError):
            select_bagging(cube, mode="oob")


class TestDegenerate:
    def test_single_net_single_snapshot(self):
        cube = PredictionCube(np.ones((1, 1, 3)), np.zeros(3), np.ones((3, 1)))
        for f in (select_bagging, select_epoch, select_neuralbag, select_seca, select_simann):
            assert f(cube).tau.tolist() == [0]

    def test_constant_snapshots_tie_to_first(self):
        cube = PredictionCube(np.ones((3, 5, 4)), np.zeros(4))
        for f in (select_bagging, select_epoch, select_seca):
            assert f(cube).tau.tolist() == [0, 0, 0]

    def test_single_net_bagging_epoch_agree(self):
        for cube in _cubes(20, seed=13):
            if cube.n_nets == 1:
                assert select_bagging(cube) == select_epoch(cube) == select_seca(cube)


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.booleans())
    def test_scale_invariance(self, seed, oob):
        rng = np.random.default_rng(seed)
        cube = oracles.random_cube(rng, int(rng.integers(1, 5)), int(rng.integers(1, 7)), int(rng.integers(2, 9)), oob)
        big = cube.scaled(2.0)
        fs = [select_bagging, select_epoch, select_seca]
        if oob:
            fs.append(select_neuralbag)
        for f in fs:
            assert f(cube) == f(big)
        cfg = SimAnnConfig(p=5, seed=seed)
        assert select_simann(cube, cfg=cfg) == select_simann(big, cfg=cfg)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_simann_never_worse_than_start(self, seed):
        rng = np.random.default_rng(seed)
        cube = oracles.random_cube(rng, 3, 6, 8)
        start = select_bagging(cube)
        sa = select_simann(cube, cfg=SimAnnConfig(p=4, seed=seed))
        assert validation_error(cube, sa.tau) <= validation_error(cube, start.tau)

    def test_simann_seeded(self):
        cube = oracles.random_cube(np.random.default_rng(3), 4, 10, 8)
        a = select_simann(cube, cfg=SimAnnConfig(seed=1))
        assert a == select_simann(cube, cfg=SimAnnConfig(seed=1))

    def test_simann_zero_steps_returns_start(self):
        cube = oracles.random_cube(np.random.default_rng(4), 3, 6, 8)
        start = Selection.uniform([5, 0, 2])
        assert select_simann(cube, cfg=SimAnnConfig(steps=0), start=start).tau.tolist() == [5, 0, 2]

    def test_simann_finds_global_minimum_on_toy_cubes(self):
        hits = 0
        rng = np.random.default_rng(20)
        for seed in range(20):
            cube = oracles.random_cube(rng, 2, 3, 8)
            sa = select_simann(cube, cfg=SimAnnConfig(steps=3000, seed=seed))
            hits += validation_error(cube, sa.tau) <= oracles.global_minimum(cube) + 1e-12
        assert hits >= 15

    def test_all_selectors_return_uniform_weights(self):
        cube = oracles.random_cube(np.random.default_rng(8), 4, 6, 9)
        for f in (select_bagging, select_epoch, select_neuralbag, select_seca, select_simann):
            sel = f(cube)
            np.testing.assert_array_equal(sel.weights, np.full(4, 0.25))
            assert np.all((sel.tau >= 0) & (sel.tau < 6))


class TestCostCounts:
    M, T, p = 4, 10, 2

    @pytest.fixture
    def cube(self):
        return oracles.random_cube(np.random.default_rng(9), self.M, self.T, 12)

    @pytest.mark.parametrize(
        "name, expected",
        [
            ("bagging", lambda M, T, p: M * T),
            ("epoch", lambda M, T, p: M * T),
            ("neuralbag", lambda M, T, p: M * M * T),
            ("seca", lambda M, T, p: M * (M + 1) * T // 2),
            ("simann", lambda M, T, p: p * M * T),
        ],
    )
    def test_counts(self, cube, name, expected):
        counter = EvalCounter()
        if name == "simann":
            select_simann(cube, cfg=SimAnnConfig(p=self.p), counter=counter)
        else:
            DETERMINISTIC[name][0](cube, counter=counter)
        assert counter.network_evals == expected(self.M, self.T, self.p)

    def test_external_counts(self):
        cube = oracles.random_cube(np.random.default_rng(9), self.M, self.T, 12, oob=False)
        for f, expected in ((select_bagging, 40), (select_epoch, 40), (select_seca, 100)):
            counter = EvalCounter()
            f(cube, counter=counter)
            assert counter.network_evals == expected

    def test_ensemble_sse_counts_members(self):
        cube = oracles.random_cube(np.random.default_rng(9), 3, 2, 5, oob=False)
        counter = EvalCounter()
        ensemble_sse(cube, Selection.uniform([0, 1, 0]), counter)
        assert counter.network_evals == 3
