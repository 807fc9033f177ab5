import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetbo import gp
from hetbo import noise_model as nm
from hetbo.gp import GaussianProcess, GpHyperparams, SEKernel


def random_fixture(rng):
    n = int(rng.integers(1, 21))
    d = int(rng.integers(1, 4))
    kern = SEKernel(rng.uniform(0.5, 20.0), tuple(rng.uniform(0.1, 1.0, d)))
    X = rng.uniform(0, 1, (n, d))
    noise = rng.uniform(0.05, 5.0, n) ** 2
    y = rng.normal(50, kern.amplitude, n)
    Xq = rng.uniform(0, 1, (7, d))
    return kern, X, y, noise, Xq


def dense_oracle(kern, X, y, noise, Xq, mean):
    def k(a, b):
        ls = np.asarray(kern.lengthscales)
        out = np.empty((len(a), len(b)))
        for i in range(len(a)):
            for j in range(len(b)):
                out[i, j] = kern.amplitude**2 * np.exp(-0.5 * np.sum(((a[i] - b[j]) / ls) ** 2))
        return out

    K = k(X, X) + np.diag(noise)
    Kinv = np.linalg.inv(K)
    Kq = k(X, Xq)
    r = y - mean
    mu = mean + Kq.T @ Kinv @ r
    var = np.diag(k(Xq, Xq)) - np.einsum("ij,ik,kj->j", Kq, Kinv, Kq)
    _, logdet = np.linalg.slogdet(K)
    lml = -0.5 * r @ Kinv @ r - 0.5 * logdet - 0.5 * len(y) * np.log(2 * np.pi)
    return mu, var, lml


class TestOracle:
    def test_fifty_random_fixtures(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            kern, X, y, noise, Xq = random_fixture(rng)
            model = GaussianProcess(kern, 50.0, X, y, noise)
            post = model.posterior(Xq)
            mu, var, lml = dense_oracle(kern, X, y, noise, Xq, 50.0)
            scale = kern.amplitude**2
            np.testing.assert_allclose(post.mean, mu, rtol=1e-8, atol=1e-8 * kern.amplitude)
            np.testing.assert_allclose(post.var, np.maximum(var, 0), rtol=1e-8, atol=1e-8 * scale)
            assert model.log_marginal_likelihood() == pytest.approx(lml, rel=1e-8, abs=1e-8)
            assert model.jitter == 0.0

    def test_one_point_by_hand(self):
        kern = SEKernel(10.0, (0.5,))
        model = GaussianProcess(kern, 50.0, [[0.2]], [70.0], [4.0])
        k = 100.0 * np.exp(-0.5 * (0.3 / 0.5) ** 2)
        post = model.posterior([[0.5]])
        assert post.mean[0] == pytest.approx(50.0 + k / 104.0 * 20.0, rel=1e-12)
        assert post.var[0] == pytest.approx(100.0 - k * k / 104.0, rel=1e-12)

    def test_empty_data_returns_prior(self):
        model = GaussianProcess(SEKernel(10.0, (0.3, 0.3)), 50.0)
        post = model.posterior(np.random.default_rng(0).uniform(size=(5, 2)))
        np.testing.assert_array_equal(post.mean, 50.0)
        np.testing.assert_array_equal(post.var, 100.0)
        assert model.log_marginal_likelihood() == 0.0


class TestGradients:
    def test_posterior_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        kern, X, y, noise, _ = random_fixture(rng)
        model = GaussianProcess(kern, 50.0, X, y, noise)
        u = rng.uniform(0, 1, kern.dim)
        mu, var, dmu, dvar = model.posterior_with_grad(u)
        post = model.posterior(u[None])
        assert mu == pytest.approx(post.mean[0], rel=1e-12)
        assert var == pytest.approx(post.var[0], rel=1e-9, abs=1e-12)
        h = 1e-6
        for k in range(kern.dim):
            e = np.zeros(kern.dim)
            e[k] = h
            hi, lo = model.posterior((u + e)[None]), model.posterior((u - e)[None])
            assert dmu[k] == pytest.approx((hi.mean[0] - lo.mean[0]) / (2 * h), rel=1e-5, abs=1e-6)
            assert dvar[k] == pytest.approx((hi.var[0] - lo.var[0]) / (2 * h), rel=1e-5, abs=1e-6)

    @pytest.mark.parametrize("mode", gp.MODES)
    def test_lml_gradient_matches_finite_differences(self, mode):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 1, (15, 2))
        y = 50 + 20 * np.sin(5 * X[:, 0]) + rng.normal(0, 2, 15)
        fmap = nm.polynomial_map((0, 0), (1, 1), 2)
        model = nm.NoiseModel(1.0, (0.0, 0.5, -0.3, 0.2, 0.1), 0.5, fmap)
        v = GpHyperparams(15.0, (0.4, 0.7), 3.0).to_log()
        f, g = gp.lml_and_grad(v, X, y, mode, model, 50.0, 0.5)
        h = 1e-6
        for k in range(len(v)):
            e = np.zeros_like(v)
            e[k] = h
            fd = (gp.lml_and_grad(v + e, X, y, mode, model, 50.0, 0.5)[0]
                  - gp.lml_and_grad(v - e, X, y, mode, model, 50.0, 0.5)[0]) / (2 * h)
            assert g[k] == pytest.approx(fd, rel=1e-5, abs=1e-6)
        theta = GpHyperparams.from_log(v)
        assert f == pytest.approx(gp.build_gp(theta, X, y, mode, model, 50.0, 0.5).log_marginal_likelihood())


class TestConditioning:
    def test_jitter_ladder_rescues_duplicates(self):
        X = np.array([[0.3], [0.3], [0.3]])
        model = GaussianProcess(SEKernel(1.0, (0.5,)), 0.0, X, [1.0, 1.0, 1.0], 0.0)
        assert model.jitter > 0

    def test_hopeless_matrix_raises(self):
        with pytest.raises(gp.IllConditionedError):
            gp.cholesky_with_jitter(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_negative_noise_rejected(self):
        with pytest.raises(ValueError):
            GaussianProcess(SEKernel(1.0, (0.5,)), 0.0, [[0.1]], [1.0], [-1.0])

    def test_round_trip(self):
        rng = np.random.default_rng(4)
        kern, X, y, noise, Xq = random_fixture(rng)
        a = GaussianProcess(kern, 50.0, X, y, noise)
        b = GaussianProcess.from_dict(a.to_dict())
        np.testing.assert_array_equal(a.posterior(Xq).mean, b.posterior(Xq).mean)
        t = GpHyperparams(3.0, (0.2, 0.4), 1.5)
        assert GpHyperparams.from_dict(t.to_dict()) == t
        np.testing.assert_allclose(GpHyperparams.from_log(t.to_log()).to_log(), t.to_log())


class TestFit:
    def test_fit_improves_and_never_regresses(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(0, 1, (20, 1))
        y = 50 + 30 * np.sin(6 * X[:, 0]) + rng.normal(0, 1, 20)
        theta0 = GpHyperparams(1.0, (5.0,), 50.0)
        res = gp.fit_hyperparams(X, y, theta0, rng=np.random.default_rng(0))
        base = gp.build_gp(theta0, X, y, gp.HOMOSCEDASTIC).log_marginal_likelihood()
        assert res.improved and res.lml > base
        assert 0.05 < res.theta.lengthscales[0] < 1.0
        assert res.theta.noise < 5.0

    def test_returns_start_when_it_is_optimal(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(0, 1, (10, 1))
        y = 50 + rng.normal(0, 1, 10)
        first = gp.fit_hyperparams(X, y, GpHyperparams(1.0, (0.3,), 1.0), rng=np.random.default_rng(0))
        again = gp.fit_hyperparams(X, y, first.theta, n_starts=1, rng=np.random.default_rng(0))
        assert again.lml >= first.lml - 1e-9

    def test_hetero_needs_model(self):
        with pytest.raises(ValueError):
            gp.fit_hyperparams(np.zeros((3, 1)), np.zeros(3), GpHyperparams(1, (1,), 1), gp.HETEROSCEDASTIC)


def test_constant_noise_model_reduces_to_homoscedastic():
    rng = np.random.default_rng(8)
    X = rng.uniform(0, 1, (12, 2))
    y = rng.normal(50, 10, 12)
    fmap = nm.polynomial_map((0, 0), (1, 1), 10)
    theta = GpHyperparams(10.0, (0.3, 0.3), 2.5)
    hom = gp.build_gp(theta, X, y, gp.HOMOSCEDASTIC, noise_scale=1 / 3)
    het = gp.build_gp(theta, X, y, gp.HETEROSCEDASTIC, nm.flat_noise(fmap), noise_scale=1 / 3)
    np.testing.assert_array_equal(hom.noise_var, het.noise_var)
    Xq = rng.uniform(0, 1, (5, 2))
    np.testing.assert_array_equal(hom.posterior(Xq).mean, het.posterior(Xq).mean)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_posterior_variance_bounded_by_prior(seed):
    rng = np.random.default_rng(seed)
    kern, X, y, noise, Xq = random_fixture(rng)
    post = GaussianProcess(kern, 50.0, X, y, noise).posterior(Xq)
    assert np.all(post.var >= 0)
    assert np.all(post.var <= kern.amplitude**2 * (1 + 1e-12))
