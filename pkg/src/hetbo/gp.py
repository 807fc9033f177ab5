"""Exact Gaussian-process regression with a diagonal, per-point noise covariance.

The covariance is a squared-exponential kernel with one lengthscale per
input dimension.  Observation noise enters only through the vector of noise
variances, so homoscedastic and heteroscedastic models share one code path.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
HOMOSCEDASTIC = "homoscedastic"
HETEROSCEDASTIC = "heteroscedastic"
MODES = (HOMOSCEDASTIC, HETEROSCEDASTIC)


class IllConditionedError(np.linalg.LinAlgError):
    """The training covariance could not be factorised even with jitter."""


@dataclass(frozen=True)
class SEKernel:
    """k(x, x') = amplitude^2 exp(-1/2 sum_d (x_d - x'_d)^2 / l_d^2)."""

    amplitude: float
    lengthscales: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in np.atleast_1d(self.lengthscales)))
        if not self.amplitude > 0 or min(self.lengthscales) <= 0:
            raise ValueError("kernel amplitude and lengthscales must be positive")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def __call__(self, A, B) -> np.ndarray:
        return kernel_matrix(self, A, B)

    def diag(self, X) -> np.ndarray:
        return np.full(len(np.atleast_2d(X)), self.amplitude**2)


def _as_points(X, dim) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, dim) if dim > 1 else X.reshape(-1, 1)
    return X


def kernel_matrix(kernel: SEKernel, A, B) -> np.ndarray:
    ls = np.asarray(kernel.lengthscales)
    A = _as_points(A, kernel.dim) / ls
    B = _as_points(B, kernel.dim) / ls
    diff = A[:, None, :] - B[None, :, :]
    return kernel.amplitude**2 * np.exp(-0.5 * np.sum(diff * diff, axis=-1))


def cholesky_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K + jitter I`` for the smallest working jitter."""
    for jitter in JITTER_LADDER:
        try:
            L = cholesky(K + jitter * np.eye(len(K)), lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError):
            continue
        if jitter:
            log.debug("covariance factorised with jitter %g", jitter)
        return L, jitter
    raise IllConditionedError(
        f"covariance of {len(K)} points is not positive definite even with jitter {JITTER_LADDER[-1]}"
    )


class GpPosterior(NamedTuple):
    mean: np.ndarray
    var: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)


class GaussianProcess:
    """GP conditioned on ``(X, y)`` with per-point noise variances.

    Instances are treated as immutable; :meth:`condition` returns a new model.
    """

    def __init__(self, kernel: SEKernel, mean: float = 50.0, X=None, y=None, noise_var=None):
        self.kernel = kernel
        self.mean = float(mean)
        d = kernel.dim
        self.X = np.zeros((0, d)) if X is None else _as_points(X, d).copy()
        self.y = np.zeros(0) if y is None else np.asarray(y, dtype=np.float64).ravel().copy()
        n = len(self.X)
        if noise_var is None:
            noise_var = np.zeros(n)
        self.noise_var = np.broadcast_to(np.asarray(noise_var, dtype=np.float64), (n,)).copy()
        if len(self.y) != n:
            raise ValueError(f"{n} inputs but {len(self.y)} targets")
        if np.any(self.noise_var < 0):
            raise ValueError("noise variances must be non-negative")
        if n:
            K = kernel_matrix(kernel, self.X, self.X) + np.diag(self.noise_var)
            self._L, self.jitter = cholesky_with_jitter(K)
            self._alpha = cho_solve((self._L, True), self.y - self.mean)
        else:
            self._L = np.zeros((0, 0))
            self.jitter = 0.0
            self._alpha = np.zeros(0)

    @property
    def n(self) -> int:
        return len(self.X)

    def condition(self, X, y, noise_var) -> "GaussianProcess":
        return GaussianProcess(self.kernel, self.mean, X, y, noise_var)

    def posterior(self, Xq) -> GpPosterior:
        """Predictive mean and variance of the latent function at ``Xq``."""
        Xq = _as_points(Xq, self.kernel.dim)
        prior_var = self.kernel.diag(Xq)
        if self.n == 0:
            return GpPosterior(np.full(len(Xq), self.mean), prior_var)
        Kq = kernel_matrix(self.kernel, self.X, Xq)
        mu = self.mean + Kq.T @ self._alpha
        v = solve_triangular(self._L, Kq, lower=True)
        var = prior_var - np.sum(v * v, axis=0)
        return GpPosterior(mu, np.maximum(var, 0.0))

    def posterior_with_grad(self, u):
        """Mean, variance and their gradients at the single point ``u``."""
        u = np.asarray(u, dtype=np.float64).reshape(1, -1)
        ls2 = np.asarray(self.kernel.lengthscales) ** 2
        prior = self.kernel.amplitude**2
        if self.n == 0:
            zero = np.zeros(u.shape[1])
            return self.mean, prior, zero, zero
        k = kernel_matrix(self.kernel, self.X, u)[:, 0]
        dk = -k[:, None] * (u - self.X) / ls2  # (n, d)
        mu = self.mean + k @ self._alpha
        v = solve_triangular(self._L, k, lower=True)
        kinv_k = solve_triangular(self._L.T, v, lower=False)
        var = prior - v @ v
        return float(mu), float(max(var, 0.0)), dk.T @ self._alpha, -2.0 * dk.T @ kinv_k

    def log_marginal_likelihood(self) -> float:
        if self.n == 0:
            return 0.0
        r = self.y - self.mean
        return float(
            -0.5 * r @ self._alpha
            - np.sum(np.log(np.diag(self._L)))
            - 0.5 * self.n * np.log(2.0 * np.pi)
        )

    def to_dict(self) -> dict:
        return {
            "kernel": {"amplitude": self.kernel.amplitude, "lengthscales": list(self.kernel.lengthscales)},
            "mean": self.mean,
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "noise_var": self.noise_var.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "GaussianProcess":
        k = SEKernel(d["kernel"]["amplitude"], tuple(d["kernel"]["lengthscales"]))
        dim = k.dim
        X = np.asarray(d["X"], dtype=np.float64).reshape(-1, dim)
        return cls(k, d["mean"], X, d["y"], d["noise_var"])


def log_marginal_likelihood(model: GaussianProcess) -> float:
    return model.log_marginal_likelihood()


# -- hyper-parameter fitting ---------------------------------------------------


@dataclass(frozen=True)
class GpHyperparams:
    """Kernel hyper-parameters plus one noise parameter.

    In homoscedastic mode ``noise`` is the constant noise standard deviation;
    in heteroscedastic mode it is the scale ``z`` of the noise model.
    """

    amplitude: float
    lengthscales: tuple[float, ...]
    noise: float

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in np.atleast_1d(self.lengthscales)))

    @property
    def kernel(self) -> SEKernel:
        return SEKernel(self.amplitude, self.lengthscales)

    def to_log(self) -> np.ndarray:
        return np.log([self.noise, self.amplitude, *self.lengthscales])

    @classmethod
    def from_log(cls, v) -> "GpHyperparams":
        v = np.exp(np.asarray(v, dtype=np.float64))
        return cls(float(v[1]), tuple(v[2:]), float(v[0]))

    def to_dict(self):
        return {"amplitude": self.amplitude, "lengthscales": list(self.lengthscales), "noise": self.noise}

    @classmethod
    def from_dict(cls, d):
        return cls(d["amplitude"], tuple(d["lengthscales"]), d["noise"])


def noise_variances(theta: GpHyperparams, X, mode: str, noise_model=None, noise_scale: float = 1.0) -> np.ndarray:
    """Diagonal of the noise covariance at ``X``.

    ``noise_scale`` multiplies the variance (``1/n_r`` when each target is
    the mean of ``n_r`` independent episodes).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if mode == HOMOSCEDASTIC:
        std = np.full(len(X), theta.noise)
    elif mode == HETEROSCEDASTIC:
        if noise_model is None:
            raise ValueError("heteroscedastic mode needs a noise model")
        std = noise_model.with_scale(theta.noise).noise_std(X)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return std**2 * noise_scale


def build_gp(theta: GpHyperparams, X, y, mode, noise_model=None, mean=50.0, noise_scale=1.0) -> GaussianProcess:
    return GaussianProcess(theta.kernel, mean, X, y, noise_variances(theta, X, mode, noise_model, noise_scale))


def lml_and_grad(logtheta, X, y, mode, noise_model=None, mean=50.0, noise_scale=1.0):
    """LML and its gradient with respect to ``GpHyperparams.to_log()`` order."""
    theta = GpHyperparams.from_log(logtheta)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    K = kernel_matrix(theta.kernel, X, X)
    if mode == HOMOSCEDASTIC:
        std = np.full(n, theta.noise)
        dstd = std
    else:
        e = noise_model.exp_term(X)
        std = theta.noise * e + noise_model.floor
        dstd = theta.noise * e
    var = std**2 * noise_scale
    dvar = 2.0 * std * dstd * noise_scale
    L, _ = cholesky_with_jitter(K + np.diag(var))
    r = y - mean
    alpha = cho_solve((L, True), r)
    lml = -0.5 * r @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2.0 * np.pi)
    inner = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    grad = np.empty(2 + d)
    grad[0] = 0.5 * np.sum(np.diag(inner) * dvar)
    grad[1] = np.sum(inner * K)  # 0.5 * tr(inner @ 2K)
    ls = np.asarray(theta.lengthscales)
    for k in range(d):
        D = (X[:, None, k] - X[None, :, k]) ** 2 / ls[k] ** 2
        grad[2 + k] = 0.5 * np.sum(inner * K * D)
    return float(lml), grad


@dataclass
class FitResult:
    theta: GpHyperparams
    lml: float
    improved: bool
    start_lmls: list = field(default_factory=list)


DEFAULT_LOG_BOUNDS = {
    "noise": (1e-6, 1e4),
    "amplitude": (1e-2, 1e4),
    "lengthscale": (1e-3, 1e2),
}


def fit_hyperparams(X, y, theta0: GpHyperparams, mode: str = HOMOSCEDASTIC, noise_model=None,
                    mean: float = 50.0, noise_scale: float = 1.0, n_starts: int = 8,
                    rng: Optional[np.random.Generator] = None, bounds=None) -> FitResult:
    """Maximise the log marginal likelihood over the log hyper-parameters.

    The first start is ``theta0`` itself; the other ``n_starts - 1`` are drawn
    log-uniformly within +/-1.5 decades of it.  Each start runs bounded
    L-BFGS-B with the analytic gradient.  The result never has a lower LML
    than ``theta0``: if nothing improves, ``theta0`` comes back with
    ``improved=False``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(X) < 2:
        raise ValueError("fitting needs at least two observations")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == HETEROSCEDASTIC and noise_model is None:
        raise ValueError("heteroscedastic mode needs a noise model")
    rng = np.random.default_rng(0) if rng is None else rng
    b = dict(DEFAULT_LOG_BOUNDS, **(bounds or {}))
    d = X.shape[1]
    lo = np.log([b["noise"][0], b["amplitude"][0]] + [b["lengthscale"][0]] * d)
    hi = np.log([b["noise"][1], b["amplitude"][1]] + [b["lengthscale"][1]] * d)

    def objective(v):
        try:
            f, g = lml_and_grad(v, X, y, mode, noise_model, mean, noise_scale)
        except np.linalg.LinAlgError:
            return 1e25, np.zeros_like(v)
        if not np.isfinite(f):
            return 1e25, np.zeros_like(v)
        return -f, -g

    v0 = theta0.to_log()
    base = -objective(v0)[0]
    best_v, best_f = v0, base
    spread = 1.5 * np.log(10.0)
    starts = [np.clip(v0, lo, hi)]
    for _ in range(n_starts - 1):
        starts.append(np.clip(v0 + rng.uniform(-spread, spread, size=v0.shape), lo, hi))
    start_lmls = []
    for s in starts:
        res = minimize(objective, s, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)))
        f = -float(res.fun)
        start_lmls.append(f)
        if np.isfinite(f) and f > best_f:
            best_v, best_f = res.x, f
    if best_f <= base:
        log.info("hyper-parameter fit did not improve on the initial point")
        return FitResult(theta0, base, False, start_lmls)
    return FitResult(GpHyperparams.from_log(best_v), best_f, True, start_lmls)
