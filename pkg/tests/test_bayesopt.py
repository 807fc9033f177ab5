from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetbo import bayesopt as bo
from hetbo import gp, seeding
from hetbo import noise_model as nm
from hetbo.env import make_plant
from hetbo.gp import GaussianProcess, GpHyperparams, SEKernel
from hetbo.harness.experiments import synthetic_mean, synthetic_noise_std, synthetic_optimum
from hetbo.objectives import Box, ControllerObjective, SyntheticObjective

UNIT = Box((0.0,), (1.0,))


def two_bumps(x):
    x = np.asarray(x, dtype=np.float64)
    return 60 + 30 * np.exp(-((x - 0.3) ** 2) / 0.005) + 20 * np.exp(-((x - 0.75) ** 2) / 0.01)


def synthetic():
    return SyntheticObjective(synthetic_mean, synthetic_noise_std, UNIT)


class TestUcb:
    def test_kappa_zero_is_mean(self):
        model = GaussianProcess(SEKernel(10.0, (0.2,)), 50.0, [[0.3]], [80.0], [1.0])
        x = np.array([[0.4]])
        assert bo.ucb(model, x, 0.0)[0] == model.posterior(x).mean[0]

    def test_prior_arithmetic(self):
        model = GaussianProcess(SEKernel(10.0, (0.2,)), 50.0)
        assert bo.ucb(model, np.array([0.5]), 1.2) == pytest.approx(62.0, rel=1e-14)

    def test_one_point_by_hand(self):
        model = GaussianProcess(SEKernel(10.0, (0.5,)), 50.0, [[0.2]], [70.0], [4.0])
        k = 100.0 * np.exp(-0.5 * (0.3 / 0.5) ** 2)
        mu = 50.0 + k / 104.0 * 20.0
        sd = np.sqrt(100.0 - k * k / 104.0)
        assert bo.ucb(model, np.array([0.5]), 1.2) == pytest.approx(mu + 1.2 * sd, abs=1e-10)


class TestMaximizeAcquisition:
    def test_flat_posterior_returns_first_start(self):
        model = GaussianProcess(SEKernel(10.0, (0.2, 0.2)), 50.0)
        u = bo.maximize_acquisition(model, 1.2, np.random.default_rng(3))
        first = np.random.default_rng(3).uniform(0, 1, size=(32, 2))[0]
        np.testing.assert_array_equal(u, first)

    def test_never_worse_than_starts(self):
        model = GaussianProcess(SEKernel(20.0, (0.1, 0.1)), 50.0, [[0.6, 0.4]], [120.0], [1.0])
        rng = np.random.default_rng(4)
        u = bo.maximize_acquisition(model, 1.2, rng)
        starts = np.random.default_rng(4).uniform(0, 1, size=(32, 2))
        assert np.all((u >= 0) & (u <= 1))
        assert bo.ucb(model, u[None], 1.2)[0] >= np.max(bo.ucb(model, starts, 1.2))

    def test_finds_higher_bump(self):
        X = np.linspace(0, 1, 41)[:, None]
        model = GaussianProcess(SEKernel(20.0, (0.05,)), 50.0, X, two_bumps(X[:, 0]), 0.01)
        grid = np.linspace(0, 1, 10001)[:, None]
        target = grid[np.argmax(bo.ucb(model, grid, 1.2)), 0]
        hits = sum(abs(bo.maximize_acquisition(model, 1.2, np.random.default_rng(s))[0] - target) <= 0.05
                   for s in range(100))
        assert hits >= 95


class TestObserve:
    def test_single_repeat_is_scaled_return(self):
        obj = synthetic()
        scaler = bo.RewardScaler(0.0, 50.0)
        rec = bo.observe(obj, [0.5], 1, lambda j: np.random.default_rng(10 + j), scaler)
        g = obj.evaluate([0.5], [np.random.default_rng(10)])[0][0]
        assert rec.y == pytest.approx(2.0 * g)
        assert rec.returns == (g,)

    def test_deterministic(self):
        obj = synthetic()
        a = bo.observe(obj, [0.3], 4, lambda j: np.random.default_rng(j))
        b = bo.observe(obj, [0.3], 4, lambda j: np.random.default_rng(j))
        assert (a.x, a.returns, a.y) == (b.x, b.returns, b.y)

    def test_outside_box_rejected(self):
        with pytest.raises(ValueError):
            bo.observe(synthetic(), [1.5], 1, lambda j: np.random.default_rng(j))

    def test_pendulum_mean_matches_reference(self):
        plant = make_plant("pendulum")
        obj = ControllerObjective(plant, Box((1e-10, 1e-10), (1.2, 3.0)), 10, 10, 200)
        x = [0.694, 1.579]
        tree = seeding.SeedTree(21)
        ref = bo.observe(obj, x, 100, lambda j: tree.rng(0, j))
        rec = bo.observe(obj, x, 10, lambda j: tree.rng(1, j))
        se = np.std(rec.returns, ddof=1) / np.sqrt(10)
        assert abs(rec.y - ref.y) <= 2 * se

    def test_scaler(self):
        s = bo.RewardScaler.from_values([10.0, 30.0, 20.0])
        np.testing.assert_allclose(s([10.0, 30.0]), [0.0, 100.0])
        assert s.inverse(s(17.0)) == pytest.approx(17.0)
        assert bo.RewardScaler.from_values([5.0, 5.0]).high == 6.0


class TestPilot:
    def test_design_contains_corners(self):
        box = Box((0, 0), (1, 2))
        U = bo.pilot_design(box, 20, np.random.default_rng(0))
        assert U.shape == (20, 2)
        for c in ([0, 0], [0, 1], [1, 0], [1, 1]):
            assert any(np.array_equal(u, c) for u in U)

    def test_start_points(self):
        box = Box((1, 2), (3, 4))
        np.testing.assert_array_equal(bo.start_point(box, "lower"), [1, 2])
        np.testing.assert_array_equal(bo.start_point(box, "upper"), [3, 4])
        np.testing.assert_array_equal(bo.start_point(box, [10, 0]), [3, 2])
        with pytest.raises(ValueError):
            bo.start_point(box, "middle")


class TestRunBo:
    cfg = bo.BoConfig(n_iter=30, n_repeats=3)

    def test_zero_iterations_returns_start(self):
        res = bo.run_bo(synthetic(), replace(self.cfg, n_iter=0), seeding.SeedTree(0))
        assert len(res.trace) == 1
        np.testing.assert_array_equal(res.x_best, [0.0])

    def test_trace_invariants_and_reproducibility(self):
        a = bo.run_bo(synthetic(), replace(self.cfg, n_iter=8), seeding.SeedTree(1))
        b = bo.run_bo(synthetic(), replace(self.cfg, n_iter=8), seeding.SeedTree(1))
        assert [(r.x, r.y) for r in a.trace] == [(r.x, r.y) for r in b.trace]
        assert all(UNIT.contains(r.x) for r in a.trace)
        assert [r.iteration for r in a.trace] == list(range(9))
        assert np.all(np.diff(a.best_observed) >= 0)

    @pytest.mark.slow
    def test_synthetic_argmax_found(self):
        x_star, _ = synthetic_optimum()
        hits = 0
        for s in range(20):
            res = bo.run_bo(synthetic(), self.cfg, seeding.SeedTree(500).child(s))
            hits += abs(res.x_best[0] - x_star) <= 0.1
        assert hits >= 14

    def test_constant_noise_modes_agree(self):
        obj = SyntheticObjective(synthetic_mean, lambda x: 2.0, UNIT)
        tree = seeding.SeedTree(2)
        cfg = replace(self.cfg, n_iter=10)
        pilot = bo.collect_pilot(obj, cfg.n_pilot, cfg.n_repeats, tree)
        homo = bo.run_bo(obj, replace(cfg, mode=gp.HOMOSCEDASTIC), tree, pilot=pilot)
        flat = nm.flat_noise(nm.polynomial_map((0.0,), (1.0,), 10))
        het = bo.run_bo(obj, cfg, tree, pilot=pilot, theta=homo.setup.theta, noise_model=flat)
        assert [r.x for r in homo.trace] == [r.x for r in het.trace]
        assert [r.mu for r in homo.trace] == [r.mu for r in het.trace]

    def test_flat_model_lml_matches_homoscedastic(self):
        rng = np.random.default_rng(3)
        X, y = rng.uniform(0, 1, (10, 1)), rng.normal(50, 10, 10)
        flat = nm.flat_noise(nm.polynomial_map((0.0,), (1.0,), 10))
        v = GpHyperparams(10.0, (0.3,), 2.0).to_log()
        f1, g1 = gp.lml_and_grad(v, X, y, gp.HOMOSCEDASTIC, None, 50.0, 1 / 3)
        f2, g2 = gp.lml_and_grad(v, X, y, gp.HETEROSCEDASTIC, flat, 50.0, 1 / 3)
        assert f1 == f2
        np.testing.assert_array_equal(g1, g2)

    def test_mode_mismatch_rejected(self):
        obj = synthetic()
        tree = seeding.SeedTree(4)
        res = bo.run_bo(obj, replace(self.cfg, n_iter=0, mode=gp.HOMOSCEDASTIC), tree)
        with pytest.raises(ValueError):
            bo.run_bo(obj, replace(self.cfg, n_iter=0), tree, setup=res.setup)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            bo.BoConfig(kappa=-1.0)
        with pytest.raises(ValueError):
            bo.BoConfig(mode="robust")


@settings(max_examples=30, deadline=None)
@given(k1=st.floats(0, 5), k2=st.floats(0, 5), x=st.floats(0, 1))
def test_ucb_monotone_in_kappa(k1, k2, x):
    model = GaussianProcess(SEKernel(10.0, (0.2,)), 50.0, [[0.1], [0.9]], [60.0, 40.0], [1.0, 1.0])
    lo, hi = sorted((k1, k2))
    assert bo.ucb(model, np.array([x]), lo) <= bo.ucb(model, np.array([x]), hi)
