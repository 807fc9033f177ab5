"""Parametric input-dependent noise: sigma(x) = z * exp(beta . phi(x)) + zeta.

Fitting is done in two stages.  A generalised linear trend
``g_hat(x) = alpha . phi(x)`` is fitted to the raw returns first; the noise
model is then fitted to the residuals ``g - g_hat``.

Inputs are mapped to the unit box before feature evaluation.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

POLYNOMIAL = "polynomial"
KERNEL = "kernel"

#: exponents above this are treated as overflow and saturated
OVERFLOW_EXPONENT = 50.0


@dataclass(frozen=True)
class FeatureMap:
    """Polynomial or rational-quadratic kernel features on normalised inputs.

    The polynomial map is ``[1, u_1, u_1^2, .., u_1^d, u_2, .., u_D^d]``: a
    constant plus the powers of each coordinate separately.  The kernel map
    evaluates a unit-amplitude rational-quadratic kernel against ``centres``
    (given in normalised coordinates).
    """

    kind: str = POLYNOMIAL
    lower: tuple[float, ...] = (0.0,)
    upper: tuple[float, ...] = (1.0,)
    degree: int = 10
    centres: tuple[tuple[float, ...], ...] = ()
    rq_lengthscale: float = 0.25
    rq_shape: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in np.atleast_1d(self.lower)))
        object.__setattr__(self, "upper", tuple(float(v) for v in np.atleast_1d(self.upper)))
        object.__setattr__(self, "centres", tuple(tuple(float(v) for v in c) for c in self.centres))
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have the same length")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("feature box must be non-degenerate")
        if self.kind == POLYNOMIAL:
            if self.degree < 0:
                raise ValueError("degree must be non-negative")
        elif self.kind == KERNEL:
            if not self.centres:
                raise ValueError("kernel features need at least one centre")
        else:
            raise ValueError(f"unknown feature map {self.kind!r}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def size(self) -> int:
        if self.kind == POLYNOMIAL:
            return 1 + self.dim * self.degree
        return len(self.centres)

    @property
    def has_constant(self) -> bool:
        return self.kind == POLYNOMIAL

    def normalise(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return (X - lo) / (hi - lo)

    def denormalise(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=np.float64).reshape(-1, self.dim)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return lo + U * (hi - lo)

    def __call__(self, X) -> np.ndarray:
        U = self.normalise(X)
        if self.kind == POLYNOMIAL:
            cols = [np.ones(len(U))]
            for d in range(self.dim):
                for p in range(1, self.degree + 1):
                    cols.append(U[:, d] ** p)
            return np.column_stack(cols)
        C = np.asarray(self.centres)
        sq = np.sum((U[:, None, :] - C[None, :, :]) ** 2, axis=-1)
        a = self.rq_shape
        return (1.0 + sq / (2.0 * a * self.rq_lengthscale**2)) ** (-a)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lower": list(self.lower),
            "upper": list(self.upper),
            "degree": self.degree,
            "centres": [list(c) for c in self.centres],
            "rq_lengthscale": self.rq_lengthscale,
            "rq_shape": self.rq_shape,
        }

    @classmethod
    def from_dict(cls, d) -> "FeatureMap":
        d = dict(d)
        d["centres"] = tuple(tuple(c) for c in d.get("centres", ()))
        return cls(**d)


def polynomial_map(lower, upper, degree: int = 10) -> FeatureMap:
    return FeatureMap(POLYNOMIAL, tuple(np.atleast_1d(lower)), tuple(np.atleast_1d(upper)), degree)


def kernel_map(lower, upper, X, n_centres: int = 5, rng=None, lengthscale: float = 0.25,
               shape: float = 1.0) -> FeatureMap:
    """Kernel features with centres placed by k-means on the observed inputs."""
    from scipy.cluster.vq import kmeans2

    base = FeatureMap(POLYNOMIAL, tuple(np.atleast_1d(lower)), tuple(np.atleast_1d(upper)), 1)
    U = np.unique(base.normalise(X), axis=0)
    k = min(n_centres, len(U))
    seed = 0 if rng is None else int(rng.integers(2**31))
    centres, _ = kmeans2(U, k, seed=seed, minit="++")
    return FeatureMap(KERNEL, base.lower, base.upper, 0, tuple(map(tuple, centres)), lengthscale, shape)


def features(fmap: FeatureMap, x) -> np.ndarray:
    """Feature vector of one point (or rows for several points)."""
    phi = fmap(x)
    return phi[0] if np.ndim(x) <= 1 and fmap.dim == len(np.atleast_1d(x)) else phi


@dataclass(frozen=True)
class NoiseModel:
    z: float
    beta: tuple[float, ...]
    zeta: float
    feature_map: FeatureMap
    exponent_cap: float = 50.0
    exponent_floor: float = -np.inf

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if len(self.beta) != self.feature_map.size:
            raise ValueError(f"beta has {len(self.beta)} entries, feature map has {self.feature_map.size}")
        if self.z < 0 or self.zeta < 0:
            raise ValueError("z and zeta must be non-negative")

    @property
    def floor(self) -> float:
        return self.zeta

    def with_scale(self, z: float) -> "NoiseModel":
        return replace(self, z=float(z))

    def exp_term(self, X) -> np.ndarray:
        """``exp(beta . phi(x))`` with the exponent clipped to ``[exponent_floor, exponent_cap]``.

        Exponents beyond ``OVERFLOW_EXPONENT`` are saturated with a warning.
        """
        expo = self.feature_map(X) @ np.asarray(self.beta)
        if np.any(expo > OVERFLOW_EXPONENT):
            warnings.warn(f"noise exponent saturated at {OVERFLOW_EXPONENT}", RuntimeWarning, stacklevel=2)
        hi = min(self.exponent_cap, OVERFLOW_EXPONENT)
        return np.exp(np.clip(expo, self.exponent_floor, hi))

    def noise_std(self, X) -> np.ndarray:
        return self.z * self.exp_term(X) + self.zeta

    def to_dict(self) -> dict:
        return {
            "z": self.z,
            "beta": list(self.beta),
            "zeta": self.zeta,
            "feature_map": self.feature_map.to_dict(),
            "exponent_cap": self.exponent_cap,
            "exponent_floor": None if np.isinf(self.exponent_floor) else self.exponent_floor,
        }

    @classmethod
    def from_dict(cls, d) -> "NoiseModel":
        floor = d.get("exponent_floor")
        return cls(d["z"], tuple(d["beta"]), d["zeta"], FeatureMap.from_dict(d["feature_map"]),
                   d.get("exponent_cap", OVERFLOW_EXPONENT), -np.inf if floor is None else floor)


def constant_noise(std: float, fmap: FeatureMap) -> NoiseModel:
    """Noise model with sigma(x) identically ``std`` (z = 0)."""
    return NoiseModel(0.0, (0.0,) * fmap.size, float(std), fmap)


def flat_noise(fmap: FeatureMap) -> NoiseModel:
    """Unit-shape model (z = 1, beta = 0, zeta = 0).

    Inside the GP the noise hyper-parameter replaces ``z``, so this model
    turns heteroscedastic mode into the homoscedastic pipeline exactly.
    """
    return NoiseModel(1.0, (0.0,) * fmap.size, 0.0, fmap)


def noise_std(model: NoiseModel, x) -> np.ndarray:
    return model.noise_std(x)


@dataclass(frozen=True)
class TrendModel:
    alpha: tuple[float, ...]
    feature_map: FeatureMap

    def predict(self, X) -> np.ndarray:
        return self.feature_map(X) @ np.asarray(self.alpha)

    __call__ = predict

    def to_dict(self):
        return {"alpha": list(self.alpha), "feature_map": self.feature_map.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["alpha"]), FeatureMap.from_dict(d["feature_map"]))


def _least_squares(A, b, ridge):
    coef, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < A.shape[1]:
        log.debug("rank-deficient design (%d < %d), using ridge %g", rank, A.shape[1], ridge)
        coef = np.linalg.solve(A.T @ A + ridge * np.eye(A.shape[1]), A.T @ b)
    return coef


def fit_trend(X, g, fmap: FeatureMap, ridge: float = 1e-8) -> TrendModel:
    """Least-squares generalised linear fit of the returns ``g``."""
    Phi = fmap(X)
    g = np.asarray(g, dtype=np.float64).ravel()
    if len(g) != len(Phi):
        raise ValueError("X and g lengths differ")
    return TrendModel(tuple(_least_squares(Phi, g, ridge)), fmap)


def _nll(params, Phi, r2, cap, free):
    """Gaussian negative log-likelihood of residuals, and its gradient.

    ``params = [log z, beta[free], zeta]``.
    """
    logz = params[0]
    zeta = params[-1]
    beta = np.zeros(Phi.shape[1])
    beta[free] = params[1:-1]
    expo = Phi @ beta
    capped = expo > cap
    e = np.exp(np.minimum(expo, cap))
    ze = np.exp(logz) * e
    sigma = ze + zeta
    f = np.sum(np.log(sigma) + 0.5 * r2 / sigma**2)
    dsig = 1.0 / sigma - r2 / sigma**3
    g_expo = np.where(capped, 0.0, dsig * ze)
    grad = np.empty_like(params)
    grad[0] = np.sum(dsig * ze)
    grad[1:-1] = (Phi[:, free].T @ g_expo)
    grad[-1] = np.sum(dsig)
    return f, grad


def fit_noise(X, g, trend: TrendModel, fmap: Optional[FeatureMap] = None, floor: float = 1e-4,
              ridge: float = 1e-8, zeta_quantile: float = 25.0) -> NoiseModel:
    """Fit sigma(x) to the residuals of ``g`` around ``trend``.

    1. ``q = |g - g_hat(x)|`` and a floor estimate ``zeta0``, the 25th
       percentile of ``q``;
    2. ``log max(q - zeta0, floor)`` regressed linearly on the features
       (the scale ``z`` is the exponentiated constant coefficient);
    3. ``(z, beta, zeta)`` refined together by maximising the Gaussian
       likelihood of the residuals under ``N(0, sigma(x)^2)``.
    """
    fmap = trend.feature_map if fmap is None else fmap
    X = np.asarray(X, dtype=np.float64)
    resid = np.asarray(g, dtype=np.float64).ravel() - trend.predict(X)
    q = np.abs(resid)
    Phi = fmap(X)
    m = Phi.shape[1]
    if np.all(q < floor):
        log.info("all residuals below floor %g; returning a homoscedastic model", floor)
        return NoiseModel(0.0, (0.0,) * m, float(np.mean(q)), fmap)

    zeta0 = float(np.percentile(q, zeta_quantile))
    target = np.log(np.maximum(q - zeta0, floor))
    if fmap.has_constant:
        coef = _least_squares(Phi, target, ridge)
        logz0 = coef[0]
        beta0 = coef.copy()
        beta0[0] = 0.0
        free = np.arange(1, m)
    else:
        coef = _least_squares(np.column_stack([np.ones(len(Phi)), Phi]), target, ridge)
        logz0 = coef[0]
        beta0 = coef[1:]
        free = np.arange(m)

    cap = OVERFLOW_EXPONENT
    r2 = resid**2
    # optimise in an orthonormal basis of the free feature columns; raw
    # monomials of high degree are too ill-conditioned for L-BFGS
    U, sv, Vt = np.linalg.svd(Phi[:, free], full_matrices=False)
    keep = sv > 1e-10 * max(1.0, sv.max())
    Q = U[:, keep]
    basis = np.zeros((m, keep.sum()))
    basis[free] = Vt[keep].T / sv[keep]  # beta = basis @ gamma
    Qfull = np.column_stack([np.zeros(len(Q)), Q]) if fmap.has_constant else Q
    qfree = np.arange(1, Qfull.shape[1]) if fmap.has_constant else np.arange(Qfull.shape[1])
    gamma0 = sv[keep] * (Vt[keep] @ beta0[free])
    x0 = np.concatenate([[logz0], gamma0, [zeta0]])
    bounds = [(np.log(1e-12), np.log(1e12))] + [(None, None)] * len(gamma0) + [(0.0, None)]
    rms = np.sqrt(np.mean(r2))
    # second start: pure floor model, guards against a poor log-linear start
    x1 = np.concatenate([[np.log(max(floor, 1e-3 * rms))], np.zeros(len(gamma0)), [rms]])
    best = None
    for start in (x0, x1):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            res = minimize(_nll, start, args=(Qfull, r2, cap, qfree), jac=True, method="L-BFGS-B",
                           bounds=bounds, options={"maxiter": 2000})
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    p = best.x
    beta = basis @ p[1:-1]
    z = float(np.exp(p[0]))
    if fmap.has_constant:
        # move the scale into z: the varying factor peaks at 1 over the data
        shift = float(np.max(Phi @ beta))
        beta[0] -= shift
        z *= float(np.exp(min(shift, cap)))
    # no extrapolation beyond the noise levels seen on the fitting inputs
    expo = Phi @ beta
    return NoiseModel(z, tuple(beta), float(max(p[-1], 0.0)), fmap,
                      exponent_cap=float(min(expo.max(), cap)), exponent_floor=float(expo.min()))


def tracking_error(model: NoiseModel, X, g, trend: TrendModel) -> float:
    """Mean Gaussian negative log-likelihood (without the 2 pi constant) of the residuals."""
    r = np.asarray(g, dtype=np.float64).ravel() - trend.predict(X)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        s = model.noise_std(X)
    return float(np.mean(np.log(s) + 0.5 * r**2 / s**2))
