import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetbo import env
from hetbo.env import DivergenceError, make_plant

PLANTS = {name: make_plant(name) for name in env.PLANT_NAMES}


def euler_oracle(plant, s, a, substeps=1000):
    deriv = env.DERIVATIVES[plant.name]
    h = plant.dt / substeps
    s = np.asarray(s, dtype=np.float64)
    for _ in range(substeps):
        s = s + h * deriv(plant.param_vector(), s, plant.clamp(a))
    return s


class TestStep:
    def test_pendulum_hanging_is_fixed_point(self):
        s = env.step(PLANTS["pendulum"], np.array([np.pi, 0.0]), 0.0)
        np.testing.assert_allclose(s, [np.pi, 0.0], atol=1e-14)

    def test_cartpole_upright_is_fixed_point(self):
        s = env.step(PLANTS["cartpole"], np.zeros(4), 0.0)
        np.testing.assert_array_equal(s, np.zeros(4))

    def test_acrobot_hanging_is_fixed_point(self):
        s = env.step(PLANTS["acrobot"], np.zeros(4), 0.0)
        np.testing.assert_allclose(s, np.zeros(4), atol=1e-14)

    @pytest.mark.parametrize("name,s,a", [
        ("pendulum", [np.pi / 2, 0.0], 0.0),
        ("pendulum", [0.3, -1.0], 1.5),
        ("cartpole", [0.1, 0.0, 0.2, 0.0], 1.0),
        ("acrobot", [0.1, -0.2, 0.3, 0.0], 1.0),
    ])
    def test_rk4_matches_fine_euler(self, name, s, a):
        plant = PLANTS[name]
        np.testing.assert_allclose(env.step(plant, s, a), euler_oracle(plant, s, a), atol=1e-4)

    def test_frozen_values(self):
        # regression values, cross-checked against the Euler oracle above
        np.testing.assert_allclose(env.step(PLANTS["pendulum"], [np.pi / 2, 0.0], 0.0),
                                   [1.58918982, 0.73571888], atol=1e-8)
        np.testing.assert_allclose(env.step(PLANTS["cartpole"], [0.1, 0, 0.2, 0], 1.0),
                                   [0.09957327, -0.0172348, 0.20429436, 0.17252747], atol=1e-8)
        np.testing.assert_allclose(env.step(PLANTS["acrobot"], [0.1, -0.2, 0.3, 0], 1.0),
                                   [0.11310164, -0.19588636, 0.22340354, 0.16488363], atol=1e-8)

    def test_action_is_clamped(self):
        p = PLANTS["pendulum"]
        s = np.array([0.5, 0.1])
        np.testing.assert_array_equal(env.step(p, s, 100.0), env.step(p, s, p.action_high))
        np.testing.assert_array_equal(env.step(p, s, -100.0), env.step(p, s, p.action_low))

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_non_finite_state_raises(self, bad):
        with pytest.raises(DivergenceError):
            env.step(PLANTS["pendulum"], np.array([bad, 0.0]), 0.0)

    def test_wrong_dimension_raises(self):
        with pytest.raises(ValueError):
            env.step(PLANTS["cartpole"], np.zeros(2), 0.0)

    def test_undamped_pendulum_conserves_energy(self):
        p = make_plant("pendulum", constants={"damping": 0.0})
        s = np.array([2.0, 0.0])
        e0 = env.pendulum_energy(p, s)
        for _ in range(200):
            s = env.step(p, s, 0.0)
        assert abs(env.pendulum_energy(p, s) - e0) < 1e-4 * max(1.0, e0)


class TestReward:
    def test_table_values(self):
        assert env.reward(PLANTS["acrobot"], np.zeros(4)) == 0.0
        assert env.reward(PLANTS["cartpole"], np.zeros(4)) == 0.0
        assert env.reward(PLANTS["pendulum"], np.zeros(2)) == 4000.0
        assert env.reward(PLANTS["pendulum"], np.array([np.pi, 0.0])) == pytest.approx(3800.0)

    def test_acrobot_formula(self):
        s = np.array([0.4, -1.1, 0.0, 0.0])
        assert env.reward(PLANTS["acrobot"], s) == pytest.approx(np.cos(0.4) - np.cos(0.4 - 1.1))

    def test_cost_is_non_negative(self):
        rng = np.random.default_rng(5)
        for p in PLANTS.values():
            S = rng.uniform(-10, 10, size=(1000, p.state_dim))
            assert np.all(env.cost(p, S) >= 0.0)
        assert env.cost(PLANTS["acrobot"], np.array([0.0, np.pi, 0.0, 0.0])) == pytest.approx(0.0)

    def test_batched_reward(self):
        p = PLANTS["cartpole"]
        S = np.random.default_rng(0).normal(size=(5, 4))
        np.testing.assert_allclose(env.reward(p, S), [env.reward(p, s) for s in S])


class TestInitialState:
    def test_pendulum_range(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            th, w = env.sample_initial_state(PLANTS["pendulum"], rng)
            assert np.pi - 0.1 <= th <= np.pi + 0.1
            assert w == 0.0

    def test_deterministic(self):
        for p in PLANTS.values():
            a = env.sample_initial_state(p, np.random.default_rng(7))
            b = env.sample_initial_state(p, np.random.default_rng(7))
            np.testing.assert_array_equal(a, b)

    def test_mean_angle(self):
        rng = np.random.default_rng(3)
        th = np.array([env.sample_initial_state(PLANTS["pendulum"], rng)[0] for _ in range(10_000)])
        se = th.std(ddof=1) / np.sqrt(len(th))
        assert abs(th.mean() - np.pi) < 3 * se


class TestPlant:
    def test_round_trip(self):
        for p in PLANTS.values():
            assert env.Plant.from_dict(p.to_dict()) == p

    def test_invalid(self):
        with pytest.raises(ValueError):
            make_plant("pendulum", dt=0.0)
        with pytest.raises(ValueError):
            make_plant("pendulum", action_low=1.0, action_high=-1.0)
        with pytest.raises(ValueError):
            make_plant("segway")


finite = st.floats(-3.0, 3.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(name=st.sampled_from(env.PLANT_NAMES), data=st.data())
def test_step_is_deterministic(name, data):
    p = PLANTS[name]
    s = np.array(data.draw(st.lists(finite, min_size=p.state_dim, max_size=p.state_dim)))
    a = data.draw(st.floats(-20.0, 20.0))
    first = env.step(p, s, a)
    second = env.step(p, s.copy(), a)
    assert np.array_equal(first, second)
    assert np.all(np.isfinite(first))
