"""Gaussian process models inferred from previous trajectories.

Each previous trajectory is regressed on a basis; the sample mean and sample
covariance of the fitted coefficients then define the GP mean
``phi(x)^T mu`` and covariance ``phi(x)^T Sigma phi(x')``. The observation
error is estimated from fit residuals, by maximum likelihood, or as a
derivative-scaled model ``sigma_x |dm/dx|``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from priorgp.basis import BasisSet, basis_from_descriptor
from priorgp.dataset import Trajectory
from priorgp.errors import (
    InsufficientTrajectoriesError,
    InvalidArgumentError,
    PriorGPError,
    TrajectoryError,
)
from priorgp.gp import (
    IDENTITY,
    LOG_2PI,
    BasisKernel,
    BasisMean,
    ConstantNoise,
    GpModel,
    ScaledNoise,
    Standardizer,
    posterior,
)

MODEL_FORMAT = "priorgp.igpm"
MODEL_VERSION = 1
SVD_RCOND = 1e-10
PERTURBATION = 1e-8
SIGMA_BOUNDS = (1e-6, 1e2)
GOLDEN_TOL = 1e-4


class BoundaryWarning(UserWarning):
    """A 1-D likelihood search ended on its search bound."""


def fit_coefficients(trajectory: Trajectory, basis: BasisSet) -> np.ndarray:
    """Least-squares basis coefficients for one trajectory.

    Rank-deficient or underdetermined systems get the minimum-norm solution,
    discarding singular values below ``1e-10`` of the largest.
    """
    if len(trajectory.xs) == 0:
        raise InvalidArgumentError("cannot fit an empty trajectory")
    phi = basis.design(trajectory.xs)
    beta, *_ = np.linalg.lstsq(phi, trajectory.ys, rcond=SVD_RCOND)
    return beta


@dataclass(frozen=True, eq=False)
class CoefficientStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int
    perturbation: float = 0.0

    @property
    def size(self) -> int:
        return self.mean.size


def coefficient_stats(coefficients) -> CoefficientStats:
    """Sample mean and unbiased sample covariance of a ``p x m`` matrix.

    With ``m <= p`` the covariance is rank deficient; a diagonal
    perturbation of ``1e-8 * trace / p`` restores full rank.
    """
    b = np.atleast_2d(np.asarray(coefficients, float))
    p, m = b.shape
    if m < 2:
        raise InsufficientTrajectoriesError(f"need at least 2 coefficient vectors, got {m}")
    mu = b.mean(axis=1)
    d = b - mu[:, None]
    cov = d @ d.T / (m - 1)
    cov = 0.5 * (cov + cov.T)
    eps = 0.0
    if m <= p:
        eps = PERTURBATION * float(np.trace(cov)) / p
        cov = cov + eps * np.eye(p)
    return CoefficientStats(mu, cov, m, eps)


@dataclass(frozen=True, eq=False)
class IgpmModel:
    """Inferred GP model.

    Exactly one of ``sigma_y`` (constant noise) and ``sigma_x`` (scaled
    noise) is set. Both live in the standardized units of ``standardizer``,
    as do the coefficient statistics.
    """

    basis: BasisSet
    stats: CoefficientStats
    sigma_y: float | None = 0.0
    sigma_x: float | None = None
    standardizer: Standardizer = IDENTITY

    def __post_init__(self):
        if (self.sigma_y is None) == (self.sigma_x is None):
            raise InvalidArgumentError("set exactly one of sigma_y and sigma_x")

    @property
    def gp(self) -> GpModel:
        noise = ConstantNoise(self.sigma_y) if self.sigma_x is None else ScaledNoise(self.sigma_x)
        return GpModel(
            BasisMean(self.basis, self.stats.mean),
            BasisKernel(self.basis, self.stats.cov),
            noise,
            self.standardizer,
        )

    def with_constant_noise(self, sigma_y: float) -> IgpmModel:
        return replace(self, sigma_y=float(sigma_y), sigma_x=None)

    def with_scaled_noise(self, sigma_x: float) -> IgpmModel:
        return replace(self, sigma_y=None, sigma_x=float(sigma_x))

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        noise = {"kind": "constant", "sigma_y": self.sigma_y} if self.sigma_x is None else {"kind": "scaled", "sigma_x": self.sigma_x}
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "basis": self.basis.descriptor(),
            "coef_mean": [float(v) for v in self.stats.mean],
            "coef_cov": [[float(v) for v in row] for row in self.stats.cov],
            "n_trajectories": self.stats.count,
            "perturbation": self.stats.perturbation,
            "noise": noise,
            "standardizer": self.standardizer.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, basis: BasisSet | None = None) -> IgpmModel:
        if d.get("format") != MODEL_FORMAT:
            raise InvalidArgumentError(f"not an IGPM model file (format={d.get('format')!r})")
        if d.get("version") != MODEL_VERSION:
            raise InvalidArgumentError(f"unsupported model version {d.get('version')!r}")
        stats = CoefficientStats(
            np.array(d["coef_mean"], float),
            np.array(d["coef_cov"], float).reshape(len(d["coef_mean"]), -1),
            int(d["n_trajectories"]),
            float(d["perturbation"]),
        )
        noise = d["noise"]
        kw = {"sigma_y": float(noise["sigma_y"]), "sigma_x": None} if noise["kind"] == "constant" else {"sigma_y": None, "sigma_x": float(noise["sigma_x"])}
        return cls(basis or basis_from_descriptor(d["basis"]), stats, standardizer=Standardizer.from_dict(d["standardizer"]), **kw)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> IgpmModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Observation error
# ---------------------------------------------------------------------------


def observation_error_rms(previous, basis: BasisSet, coefficients) -> float:
    """Root of the trajectory-averaged mean squared fit residual."""
    total = 0.0
    for traj, beta in zip(previous, coefficients):
        r = basis.design(traj.xs) @ np.asarray(beta, float) - traj.ys
        total += float(np.mean(r * r))
    return math.sqrt(total / len(previous))


def golden_section(f, lo: float, hi: float, rel_tol: float = GOLDEN_TOL) -> float:
    """Maximize a unimodal ``f`` on ``[lo, hi]``; stops when ``hi - lo < rel_tol``."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > rel_tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _maximize_log_sigma(objective, what: str) -> float:
    """Golden section on ``log sigma`` over the standard bounds.

    The bounds themselves are also evaluated so a monotone objective returns
    the bound; a result on the lower bound triggers :class:`BoundaryWarning`.
    """
    lo, hi = (math.log(b) for b in SIGMA_BOUNDS)
    best = golden_section(lambda t: objective(math.exp(t)), lo, hi)
    candidates = [(objective(math.exp(t)), t) for t in (lo, best, hi)]
    value, t = max(candidates)
    if t == lo or best - lo < 2 * GOLDEN_TOL:
        warnings.warn(f"{what} search ended on the lower bound {SIGMA_BOUNDS[0]:g}", BoundaryWarning, stacklevel=3)
    return math.exp(t)


class _SharedLikelihood:
    """Sum of trajectory LMLs as a function of constant noise only.

    Trajectories sharing a location grid share one eigendecomposition of the
    noise-free covariance, so every evaluation costs O(n) per trajectory.
    """

    def __init__(self, previous, model: IgpmModel):
        gp = model.gp
        st = model.standardizer
        groups: dict[bytes, list[Trajectory]] = {}
        for t in previous:
            groups.setdefault(t.xs.tobytes(), []).append(t)
        self.blocks = []
        self.log_scale = 0.0
        for trajs in groups.values():
            x = st.x(trajs[0].xs)
            k0 = gp.kernel(x, x)
            lam, q = np.linalg.eigh(0.5 * (k0 + k0.T))
            lam = np.maximum(lam, 0.0)
            r = np.stack([st.y(t.ys) - gp.mean(x) for t in trajs])
            self.blocks.append((lam, (r @ q) ** 2))
            self.log_scale += len(trajs) * x.size * math.log(st.y_scale)

    def __call__(self, sigma: float) -> float:
        total = 0.0
        for lam, proj2 in self.blocks:
            v = lam + sigma * sigma
            m, n = proj2.shape
            total += -0.5 * float(np.sum(proj2 / v)) - 0.5 * m * float(np.sum(np.log(v))) - 0.5 * m * n * LOG_2PI
        return total - self.log_scale


def summed_log_likelihood(previous, model: IgpmModel, sigma_y: float) -> float:
    """Sum over trajectories of the LML with constant noise ``sigma_y``."""
    return _SharedLikelihood(previous, model)(sigma_y)


def observation_error_ml(previous, model: IgpmModel) -> float:
    """Constant noise maximizing the summed trajectory log marginal likelihood."""
    return _maximize_log_sigma(_SharedLikelihood(previous, model), "observation error")


def scaled_error_model(sigma_x: float, model: IgpmModel):
    """Noise standard deviation ``sigma_x |dm/dx|`` as a function of x (data units)."""
    gp = model.with_scaled_noise(sigma_x).gp
    st = model.standardizer

    def sigma_y(x):
        return gp.noise.std(st.x(x), gp.mean) * st.y_scale

    return sigma_y


def last_point_log_likelihood(previous, model: IgpmModel, sigma_x: float) -> float:
    """Sum of log predictive densities of each trajectory's last point.

    The last point is predicted from the trajectory's earlier points with
    scaled noise ``sigma_x |dm/dx|``; observation noise is included on both
    sides.
    """
    gp = model.with_scaled_noise(sigma_x).gp
    total = 0.0
    for t in previous:
        pred = posterior(gp, t.xs[:-1], t.ys[:-1], t.xs[-1:])
        var = float(pred.var[0] + pred.noise_var[0])
        if var <= 0:
            return -math.inf
        r = float(t.ys[-1] - pred.mean[0])
        total += -0.5 * r * r / var - 0.5 * math.log(var) - 0.5 * LOG_2PI
    return total


def fit_scaled_error(previous, model: IgpmModel) -> float:
    """``sigma_x`` maximizing :func:`last_point_log_likelihood`."""
    return _maximize_log_sigma(lambda s: last_point_log_likelihood(previous, model, s), "scaled observation error")


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

ERROR_ESTIMATORS = ("rms", "ml", "scaled")


def infer_model(
    previous,
    basis: BasisSet,
    error_estimator: str = "rms",
    *,
    standardizer: Standardizer = IDENTITY,
) -> IgpmModel:
    """Infer mean, covariance and observation error from previous trajectories.

    Trajectories are mapped through ``standardizer`` before fitting, so the
    basis is evaluated in standardized x and the statistics are in
    standardized y.
    """
    if error_estimator not in ERROR_ESTIMATORS:
        raise InvalidArgumentError(f"unknown error estimator {error_estimator!r}; choose from {ERROR_ESTIMATORS}")
    previous = list(previous)
    if len(previous) < 2:
        raise InsufficientTrajectoriesError(f"need at least 2 previous trajectories, got {len(previous)}")
    scaled = [Trajectory(t.id, standardizer.x(t.xs), standardizer.y(t.ys)) for t in previous]
    betas = []
    for t in scaled:
        try:
            betas.append(fit_coefficients(t, basis))
        except PriorGPError as exc:
            raise TrajectoryError(t.id, exc) from exc
    stats = coefficient_stats(np.column_stack(betas))
    model = IgpmModel(basis, stats, sigma_y=0.0, standardizer=standardizer)
    if error_estimator == "rms":
        return model.with_constant_noise(observation_error_rms(scaled, basis, betas))
    if error_estimator == "ml":
        return model.with_constant_noise(observation_error_ml(previous, model))
    return model.with_scaled_noise(fit_scaled_error(previous, model))
