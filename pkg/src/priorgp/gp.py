"""Gaussian process primitives.

Kernels, mean functions, observation-noise models, Gram assembly, the log
marginal likelihood and the posterior at query locations.

All Gram work happens in a standardized coordinate system held by the model
(:class:`Standardizer`); inputs and outputs of the public functions are in
data units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from priorgp.errors import InvalidArgumentError, NumericalIndefinitenessError

LOG_2PI = math.log(2.0 * math.pi)
JITTER_LEVELS = (1e-12, 1e-10, 1e-8, 1e-6)


def _finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidArgumentError(f"non-finite input {v!r}")


# ---------------------------------------------------------------------------
# Hyperparameters and scalar kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Hyperparameters:
    """Named GP parameters.

    ``sigma_f`` and ``length`` must be strictly positive; ``sigma_y`` and
    ``offset`` may be zero. ``coeffs`` holds polynomial mean coefficients in
    increasing order (constant first).
    """

    sigma_f: float = 1.0
    length: float = 1.0
    sigma_y: float = 0.0
    offset: float = 1.0
    coeffs: tuple[float, ...] = ()

    def __post_init__(self):
        _finite(self.sigma_f, self.length, self.sigma_y, self.offset, *self.coeffs)
        if self.sigma_f <= 0 or self.length <= 0:
            raise InvalidArgumentError("sigma_f and length must be positive")
        if self.sigma_y < 0 or self.offset < 0:
            raise InvalidArgumentError("sigma_y and offset must be non-negative")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @property
    def order(self) -> int:
        """Polynomial order of the mean (``len(coeffs) - 1``)."""
        return len(self.coeffs) - 1


def kernel_se(x: float, x2: float, theta: Hyperparameters, same_index: bool = False) -> float:
    """Squared-exponential covariance plus diagonal noise."""
    _finite(x, x2)
    k = theta.sigma_f**2 * math.exp(-((x - x2) ** 2) / (2.0 * theta.length**2))
    return k + (theta.sigma_y**2 if same_index else 0.0)


def kernel_poly(x: float, x2: float, theta: Hyperparameters, q: int, same_index: bool = False) -> float:
    """Polynomial covariance ``sigma_f^2 (x x' + b)^q`` plus diagonal noise."""
    if q < 1:
        raise InvalidArgumentError(f"polynomial kernel order must be >= 1, got {q}")
    _finite(x, x2)
    k = theta.sigma_f**2 * (x * x2 + theta.offset) ** q
    return k + (theta.sigma_y**2 if same_index else 0.0)


def mean_poly(x: float, c) -> float:
    """Evaluate ``sum_k c_k x^(k-1)`` by Horner's rule."""
    if len(c) == 0:
        raise InvalidArgumentError("polynomial mean needs at least one coefficient")
    _finite(x, *c)
    acc = 0.0
    for ck in reversed(c):
        acc = acc * x + ck
    return acc


# ---------------------------------------------------------------------------
# Vectorized mean / covariance / noise building blocks
# ---------------------------------------------------------------------------


class Basis(Protocol):
    def design(self, x: np.ndarray) -> np.ndarray: ...

    def design_derivative(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class ZeroMean:
    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def derivative(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class PolynomialMean:
    coeffs: tuple[float, ...]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.polynomial.polynomial.polyval(x, self.coeffs) + 0.0 * x

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        d = np.polynomial.polynomial.polyder(self.coeffs) if len(self.coeffs) > 1 else [0.0]
        return np.polynomial.polynomial.polyval(x, d) + 0.0 * x


@dataclass(frozen=True, eq=False)
class BasisMean:
    """Mean ``phi(x)^T mu``."""

    basis: Basis
    mu: np.ndarray

    def __call__(self, x):
        return self.basis.design(np.asarray(x, dtype=float)) @ self.mu

    def derivative(self, x):
        return self.basis.design_derivative(np.asarray(x, dtype=float)) @ self.mu


@dataclass(frozen=True)
class SquaredExponential:
    sigma_f: float
    length: float

    def __call__(self, x1, x2):
        d = np.subtract.outer(np.asarray(x1, float), np.asarray(x2, float))
        return self.sigma_f**2 * np.exp(-(d * d) / (2.0 * self.length**2))

    def diag(self, x):
        return np.full(np.shape(x), self.sigma_f**2)


@dataclass(frozen=True)
class PolynomialKernel:
    sigma_f: float
    offset: float
    order: int

    def __post_init__(self):
        if self.order < 1:
            raise InvalidArgumentError(f"polynomial kernel order must be >= 1, got {self.order}")

    def __call__(self, x1, x2):
        return self.sigma_f**2 * (np.multiply.outer(np.asarray(x1, float), np.asarray(x2, float)) + self.offset) ** self.order

    def diag(self, x):
        x = np.asarray(x, float)
        return self.sigma_f**2 * (x * x + self.offset) ** self.order


@dataclass(frozen=True, eq=False)
class BasisKernel:
    """Covariance ``phi(x)^T Sigma phi(x')`` for a coefficient covariance Sigma."""

    basis: Basis
    cov: np.ndarray

    def __call__(self, x1, x2):
        p1 = self.basis.design(np.asarray(x1, float))
        p2 = self.basis.design(np.asarray(x2, float))
        return p1 @ self.cov @ p2.T

    def diag(self, x):
        p = self.basis.design(np.asarray(x, float))
        return np.einsum("ij,jk,ik->i", p, self.cov, p)


@dataclass(frozen=True)
class ConstantNoise:
    sigma: float = 0.0

    def std(self, x, mean) -> np.ndarray:
        return np.full(np.shape(x), float(self.sigma))


@dataclass(frozen=True)
class ScaledNoise:
    """Location-dependent noise ``sigma_x * |dm/dx|``."""

    sigma_x: float

    def std(self, x, mean) -> np.ndarray:
        return self.sigma_x * np.abs(mean.derivative(x))


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    """Affine maps ``x' = (x - x_loc)/x_scale`` and ``y' = (y - y_loc)/y_scale``."""

    x_loc: float = 0.0
    x_scale: float = 1.0
    y_loc: float = 0.0
    y_scale: float = 1.0

    def __post_init__(self):
        _finite(self.x_loc, self.x_scale, self.y_loc, self.y_scale)
        if self.x_scale <= 0 or self.y_scale <= 0:
            raise InvalidArgumentError("standardizer scales must be positive")

    @classmethod
    def fit(cls, xs, ys, *, affine_x: bool = True, center_y: bool = True) -> Standardizer:
        """Fit to pooled samples.

        ``affine_x=False`` keeps x untouched (physics bases live in data
        units); ``center_y=False`` only rescales y, which keeps a zero mean
        a zero mean.
        """
        xs = np.concatenate([np.ravel(np.asarray(a, float)) for a in xs]) if isinstance(xs, (list, tuple)) else np.ravel(np.asarray(xs, float))
        ys = np.concatenate([np.ravel(np.asarray(a, float)) for a in ys]) if isinstance(ys, (list, tuple)) else np.ravel(np.asarray(ys, float))
        x_loc, x_scale = 0.0, 1.0
        if affine_x:
            x_loc = float(np.mean(xs))
            x_scale = float(np.std(xs)) or 1.0
        if center_y:
            y_loc = float(np.mean(ys))
            y_scale = float(np.std(ys)) or 1.0
        else:
            y_loc = 0.0
            y_scale = float(np.sqrt(np.mean(ys * ys))) or 1.0
        return cls(x_loc, x_scale, y_loc, y_scale)

    def x(self, x):
        return (np.asarray(x, float) - self.x_loc) / self.x_scale

    def y(self, y):
        return (np.asarray(y, float) - self.y_loc) / self.y_scale

    def y_back(self, y):
        return np.asarray(y, float) * self.y_scale + self.y_loc

    def to_dict(self) -> dict:
        return {"x_loc": self.x_loc, "x_scale": self.x_scale, "y_loc": self.y_loc, "y_scale": self.y_scale}

    @classmethod
    def from_dict(cls, d: dict) -> Standardizer:
        return cls(**{k: float(d[k]) for k in ("x_loc", "x_scale", "y_loc", "y_scale")})


IDENTITY = Standardizer()


# ---------------------------------------------------------------------------
# Model and linear algebra
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GpModel:
    """Mean + covariance + observation noise, all in standardized coordinates."""

    mean: object = field(default_factory=ZeroMean)
    kernel: object = field(default_factory=lambda: SquaredExponential(1.0, 1.0))
    noise: object = field(default_factory=ConstantNoise)
    standardizer: Standardizer = IDENTITY

    def noise_var(self, xs_std: np.ndarray) -> np.ndarray:
        s = self.noise.std(xs_std, self.mean)
        return s * s


def se_model(sigma_f: float, length: float, sigma_y: float = 0.0, *, standardizer: Standardizer = IDENTITY) -> GpModel:
    return GpModel(ZeroMean(), SquaredExponential(sigma_f, length), ConstantNoise(sigma_y), standardizer)


def poly_model(
    sigma_f: float,
    offset: float,
    order: int,
    sigma_y: float = 0.0,
    coeffs=None,
    *,
    standardizer: Standardizer = IDENTITY,
) -> GpModel:
    mean = ZeroMean() if coeffs is None else PolynomialMean(tuple(float(c) for c in coeffs))
    return GpModel(mean, PolynomialKernel(sigma_f, offset, order), ConstantNoise(sigma_y), standardizer)


def _symmetric(k: np.ndarray) -> np.ndarray:
    upper = np.triu(k)
    return upper + np.triu(upper, 1).T


def _std_gram(model: GpModel, xs_std: np.ndarray) -> np.ndarray:
    k = _symmetric(model.kernel(xs_std, xs_std))
    k[np.diag_indices_from(k)] += model.noise_var(xs_std)
    return k


def gram(xs, model: GpModel) -> np.ndarray:
    """Covariance matrix of noisy observations at ``xs``, in data units."""
    xs = np.atleast_1d(np.asarray(xs, float))
    if xs.size == 0 or not np.all(np.isfinite(xs)):
        raise InvalidArgumentError("gram needs a non-empty finite location vector")
    k = _std_gram(model, model.standardizer.x(xs))
    return k * model.standardizer.y_scale**2


def cholesky_with_jitter(k: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating diagonal jitter on failure.

    Returns the factor and the jitter actually added (0.0 if none).
    """
    try:
        return np.linalg.cholesky(k), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(k)))
    if not scale > 0:
        scale = 1.0
    jitter = 0.0
    for level in JITTER_LEVELS:
        jitter = level * scale
        try:
            return np.linalg.cholesky(k + jitter * np.eye(k.shape[0])), jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalIndefinitenessError("Gram matrix is not positive definite", jitter)


def _check_xy(xs, ys) -> tuple[np.ndarray, np.ndarray]:
    xs = np.atleast_1d(np.asarray(xs, float))
    ys = np.atleast_1d(np.asarray(ys, float))
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size == 0:
        raise InvalidArgumentError(f"need equal-length non-empty vectors, got {xs.shape} and {ys.shape}")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise InvalidArgumentError("non-finite observation")
    return xs, ys


def log_marginal_likelihood(model: GpModel, xs, ys) -> float:
    """Log density of ``ys`` under the model's prior (noise included)."""
    xs, ys = _check_xy(xs, ys)
    st = model.standardizer
    xs_std = st.x(xs)
    r = st.y(ys) - model.mean(xs_std)
    chol, _ = cholesky_with_jitter(_std_gram(model, xs_std))
    alpha = solve_triangular(chol, r, lower=True)
    n = xs.size
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-0.5 * alpha @ alpha - 0.5 * log_det - 0.5 * n * LOG_2PI - n * math.log(st.y_scale))


def log_marginal_likelihood_shared(model: GpModel, xs, ys_rows) -> float:
    """Sum of LMLs of several value vectors observed on the same locations.

    One factorization serves every row.
    """
    xs = np.atleast_1d(np.asarray(xs, float))
    ys_rows = np.atleast_2d(np.asarray(ys_rows, float))
    if ys_rows.shape[1] != xs.size:
        raise InvalidArgumentError("each row must match the location vector")
    st = model.standardizer
    xs_std = st.x(xs)
    r = st.y(ys_rows) - model.mean(xs_std)
    chol, _ = cholesky_with_jitter(_std_gram(model, xs_std))
    alpha = solve_triangular(chol, r.T, lower=True)
    m, n = ys_rows.shape
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-0.5 * np.sum(alpha * alpha) - m * (0.5 * log_det + 0.5 * n * LOG_2PI + n * math.log(st.y_scale)))


@dataclass(frozen=True, eq=False)
class PosteriorPrediction:
    """Posterior of the latent function at query locations.

    ``var`` excludes observation noise; ``noise_var`` is the observation-noise
    variance at each query location, so ``var + noise_var`` is the predictive
    variance of a new measurement.
    """

    x: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    noise_var: np.ndarray
    cov: np.ndarray | None = None

    def std(self, predictive: bool = False) -> np.ndarray:
        v = self.var + self.noise_var if predictive else self.var
        return np.sqrt(v)


def _clamp_variance(var: np.ndarray, prior: np.ndarray) -> np.ndarray:
    tol = 1e-8 * max(float(np.max(np.abs(prior))), 1.0)
    if np.any(var < -tol):
        raise NumericalIndefinitenessError(f"posterior variance {float(np.min(var)):.3g} below tolerance", 0.0)
    return np.maximum(var, 0.0)


def posterior(model: GpModel, xs_obs, ys_obs, xs_query, *, full_cov: bool = False) -> PosteriorPrediction:
    """Condition the GP on observations and evaluate at ``xs_query``."""
    xs_query = np.atleast_1d(np.asarray(xs_query, float))
    st = model.standardizer
    xq = st.x(xs_query)
    prior_var = model.kernel.diag(xq)
    noise_q = model.noise_var(xq)

    if xs_obs is None or len(xs_obs) == 0:
        mean = model.mean(xq)
        var = prior_var
        cov = _symmetric(model.kernel(xq, xq)) if full_cov else None
    else:
        xs_obs, ys_obs = _check_xy(xs_obs, ys_obs)
        xo = st.x(xs_obs)
        chol, _ = cholesky_with_jitter(_std_gram(model, xo))
        r = st.y(ys_obs) - model.mean(xo)
        kqo = model.kernel(xq, xo)
        mean = model.mean(xq) + kqo @ cho_solve((chol, True), r)
        v = solve_triangular(chol, kqo.T, lower=True)
        var = _clamp_variance(prior_var - np.einsum("ij,ij->j", v, v), prior_var)
        cov = _symmetric(model.kernel(xq, xq) - v.T @ v) if full_cov else None

    s2 = st.y_scale**2
    return PosteriorPrediction(
        x=xs_query,
        mean=st.y_back(mean),
        var=var * s2,
        noise_var=noise_q * s2,
        cov=None if cov is None else cov * s2,
    )
