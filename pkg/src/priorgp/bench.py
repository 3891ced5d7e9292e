"""Evaluation protocol: sequential last-point prediction, leave-one-out
metrics, credible-interval calibration, variance forecasts and covariance
diagnostics.

A *method* turns previous trajectories into a *predictor* (the timed model
selection step); the predictor conditions on the observed prefix of the
current trajectory and returns the posterior at query locations.
"""

from __future__ import annotations

import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from priorgp.basis import BasisSet, ParisBasis, ParisLawConfig, PolynomialBasis
from priorgp.dataset import Trajectory
from priorgp.errors import InvalidArgumentError, PredictionError, PriorGPError
from priorgp.gp import GpModel, PosteriorPrediction, Standardizer, posterior
from priorgp.igpm import IgpmModel, fit_coefficients, infer_model
from priorgp.train import DEFAULT_STARTS, ModelFamily, fit_current, fit_previous

METHOD_LABELS = ("GPM-curr", "GPM-prev-ZM-SE", "GPM-prev-POLY", "IGPM-poly", "IGPM-paris")
DEFAULT_LEVELS = (0.5, 0.9, 0.95, 0.99)


# ---------------------------------------------------------------------------
# Methods
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedPredictor:
    """Conditions a fixed-parameter GP on the observed prefix."""

    gp: GpModel

    def predict(self, xs, ys, xq) -> PosteriorPrediction:
        return posterior(self.gp, xs, ys, xq)


@dataclass(frozen=True)
class RefitPredictor:
    """Re-optimizes the GP on the observed prefix before every prediction."""

    family: ModelFamily
    start: object
    standardizer: Standardizer
    extra_starts: int
    seed: int

    def predict(self, xs, ys, xq) -> PosteriorPrediction:
        report = fit_current(self.family, xs, ys, self.start, self.extra_starts, self.seed, standardizer=self.standardizer)
        return posterior(self.family.build(report.best, self.standardizer), xs, ys, xq)


@dataclass(frozen=True)
class MethodSpec:
    """One row of the model comparison.

    ``order`` is the polynomial order ``q`` of kernels, means and bases;
    ``paris`` is required for ``IGPM-paris``. ``cold_start`` makes GPM-curr
    start from default parameters instead of the previous-data optimum.
    """

    label: str
    order: int = 1
    paris: ParisLawConfig | None = None
    error_estimator: str | None = None
    starts: int = DEFAULT_STARTS
    seed: int = 0
    cold_start: bool = False
    quadrature_direct: bool = False

    def __post_init__(self):
        if self.label not in METHOD_LABELS:
            raise InvalidArgumentError(f"unknown method {self.label!r}; expected one of {', '.join(METHOD_LABELS)}")
        if self.label == "IGPM-paris" and self.paris is None:
            raise InvalidArgumentError("IGPM-paris needs a Paris-law configuration")

    @property
    def estimator(self) -> str:
        if self.error_estimator:
            return self.error_estimator
        return "scaled" if self.label == "IGPM-paris" else "rms"

    def basis(self) -> BasisSet:
        if self.label == "IGPM-paris":
            return ParisBasis(self.paris, self.quadrature_direct)
        return PolynomialBasis(self.order)

    def standardizer(self, previous) -> Standardizer:
        xs = [t.xs for t in previous]
        ys = [t.ys for t in previous]
        if self.label == "IGPM-paris":
            return Standardizer.fit(xs, ys, affine_x=False, center_y=False)
        if self.label in ("GPM-curr", "GPM-prev-ZM-SE"):
            return Standardizer.fit(xs, ys, center_y=False)
        return Standardizer.fit(xs, ys)

    def prepare(self, previous):
        """Select/infer the model from previous data; returns a predictor."""
        previous = list(previous)
        st = self.standardizer(previous)
        if self.label.startswith("IGPM"):
            model = infer_model(previous, self.basis(), self.estimator, standardizer=st)
            return FixedPredictor(model.gp)
        if self.label == "GPM-prev-ZM-SE":
            family = ModelFamily("se", 0, "zero")
        elif self.label == "GPM-prev-POLY":
            family = ModelFamily("poly", self.order, "poly")
        else:
            family = ModelFamily("poly", self.order, "zero")
            start = family.default_start() if self.cold_start else fit_previous(family, previous, self.starts, self.seed, standardizer=st).best
            return RefitPredictor(family, start, st, self.starts - 1, self.seed)
        report = fit_previous(family, previous, self.starts, self.seed, standardizer=st)
        return FixedPredictor(family.build(report.best, st))


# ---------------------------------------------------------------------------
# Prediction series
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PredictionSeries:
    """Posterior at the final location after observing 1..n-1 points."""

    trajectory_id: str
    x_target: float
    y_true: float
    n_observed: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    noise_var: np.ndarray
    step_time: np.ndarray
    total_time: float = 0.0
    select_time: float = 0.0

    def __post_init__(self):
        if np.any(self.var < 0) or np.any(self.noise_var < 0):
            raise InvalidArgumentError("negative variance in prediction series")

    @property
    def n_points(self) -> int:
        return len(self.n_observed) + 1

    def std(self, predictive: bool = True) -> np.ndarray:
        return np.sqrt(self.var + self.noise_var if predictive else self.var)


def _run_series(predictor, held_out: Trajectory):
    n = len(held_out)
    xq = held_out.xs[-1:]
    means, vars_, nvars, times = (np.empty(n - 1) for _ in range(4))
    for i in range(1, n):
        t0 = time.perf_counter()
        try:
            pred = predictor.predict(held_out.xs[:i], held_out.ys[:i], xq)
        except PriorGPError as exc:
            raise PredictionError(i, exc) from exc
        times[i - 1] = time.perf_counter() - t0
        means[i - 1], vars_[i - 1], nvars[i - 1] = pred.mean[0], pred.var[0], pred.noise_var[0]
    return means, vars_, nvars, times


def sequential_predict(method, held_out: Trajectory, previous=None, *, predictor=None, repeats: int = 1, select_time: float = 0.0) -> PredictionSeries:
    """Predict the last point of ``held_out`` from each of its prefixes.

    Either ``previous`` (the method's model is selected from it first) or a
    ready ``predictor`` must be given. With ``repeats > 1`` the whole series
    is recomputed and the median total time reported.
    """
    if len(held_out) < 2:
        raise InvalidArgumentError(f"trajectory {held_out.id!r} needs at least 2 points")
    if predictor is None:
        t0 = time.perf_counter()
        predictor = method.prepare(previous)
        select_time = time.perf_counter() - t0
    totals = []
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        out = _run_series(predictor, held_out)
        totals.append(time.perf_counter() - t0)
    means, vars_, nvars, times = out
    return PredictionSeries(
        trajectory_id=held_out.id,
        x_target=float(held_out.xs[-1]),
        y_true=float(held_out.ys[-1]),
        n_observed=np.arange(1, len(held_out)),
        mean=means,
        var=vars_,
        noise_var=nvars,
        step_time=times,
        total_time=statistics.median(totals),
        select_time=select_time,
    )


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def loo_series(method, trajectories, *, repeats: int = 1, threads: int = 1) -> list[PredictionSeries]:
    """Hold out each trajectory once; the others are previous data."""
    trajectories = list(trajectories)
    if len(trajectories) < 3:
        raise InvalidArgumentError("leave-one-out needs at least 3 trajectories")

    def one(j):
        previous = trajectories[:j] + trajectories[j + 1 :]
        return sequential_predict(method, trajectories[j], previous, repeats=repeats)

    return _map(one, range(len(trajectories)), threads)


def holdout_series(method, previous, evaluation, *, repeats: int = 1, threads: int = 1) -> list[PredictionSeries]:
    """Select the model once on ``previous`` and predict every evaluation trajectory."""
    t0 = time.perf_counter()
    predictor = method.prepare(list(previous))
    select_time = time.perf_counter() - t0
    return _map(lambda t: sequential_predict(method, t, predictor=predictor, repeats=repeats, select_time=select_time), list(evaluation), threads)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

MAPE_GUARD = 1e-12
METRICS_HEADER = ("model", "rmse", "mape", "rmse_half", "mape_half", "pred_time_s", "select_time_s")


@dataclass(frozen=True)
class MetricsRow:
    label: str
    rmse: float
    mape: float
    rmse_half: float
    mape_half: float
    pred_time_s: float
    select_time_s: float
    pred_step_time_s: float = 0.0
    mape_skipped: int = 0

    def csv_fields(self) -> list[str]:
        return [self.label, *(repr(float(v)) for v in (self.rmse, self.mape, self.rmse_half, self.mape_half, self.pred_time_s, self.select_time_s))]


def metrics_row(label: str, series) -> MetricsRow:
    """Average the per-trajectory last-point errors.

    Half metrics use steps ``ceil(n/2) .. n-1``. A trajectory whose true
    final value is (near) zero is left out of the MAPE averages.
    """
    series = list(series)
    rmse, mape, rmse_h, mape_h = [], [], [], []
    skipped = 0
    for s in series:
        err = s.mean - s.y_true
        half = s.n_observed >= math.ceil(s.n_points / 2)
        rmse.append(math.sqrt(float(np.mean(err**2))))
        rmse_h.append(math.sqrt(float(np.mean(err[half] ** 2))))
        if abs(s.y_true) < MAPE_GUARD:
            skipped += 1
            continue
        rel = np.abs(err / s.y_true)
        mape.append(float(np.mean(rel)))
        mape_h.append(float(np.mean(rel[half])))

    def avg(v):
        return float(np.mean(v)) if v else math.nan

    return MetricsRow(
        label=label,
        rmse=avg(rmse),
        mape=avg(mape),
        rmse_half=avg(rmse_h),
        mape_half=avg(mape_h),
        pred_time_s=avg([s.total_time for s in series]),
        select_time_s=avg([s.select_time for s in series]),
        pred_step_time_s=avg([float(np.mean(s.step_time)) for s in series]),
        mape_skipped=skipped,
    )


def leave_one_out(method, trajectories, *, repeats: int = 1, threads: int = 1) -> MetricsRow:
    return metrics_row(method.label, loo_series(method, trajectories, repeats=repeats, threads=threads))


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    levels: tuple[float, ...]
    frequencies: tuple[float, ...]
    count: int


def calibration(series, levels=DEFAULT_LEVELS, *, predictive_noise: bool = True, steps=None) -> CalibrationResult:
    """Fraction of (trajectory, step) pairs whose truth lies in the central interval.

    The interval for level ``L`` is ``mean +/- z std`` with ``z`` the
    ``(1 + L)/2`` standard-normal quantile. ``steps`` optionally restricts
    the prefix lengths evaluated.
    """
    err, sd = [], []
    for s in series:
        keep = np.ones(s.n_observed.size, bool) if steps is None else np.isin(s.n_observed, list(steps))
        err.append(np.abs(s.mean[keep] - s.y_true))
        sd.append(s.std(predictive_noise)[keep])
    err = np.concatenate(err) if err else np.empty(0)
    sd = np.concatenate(sd) if sd else np.empty(0)
    freqs = []
    for level in levels:
        if not 0 < level < 1:
            raise InvalidArgumentError(f"credible level must be in (0, 1), got {level}")
        z = norm.ppf(0.5 + 0.5 * level)
        freqs.append(float(np.mean(err <= z * sd)) if err.size else math.nan)
    return CalibrationResult(tuple(float(v) for v in levels), tuple(freqs), int(err.size))


# ---------------------------------------------------------------------------
# Variance forecast and covariance diagnostics
# ---------------------------------------------------------------------------

Z95 = float(norm.ppf(0.975))


def variance_forecast(model: GpModel, schedule, target: float, steps=None, *, predictive_noise: bool = False) -> np.ndarray:
    """95 % half-widths at ``target`` after observing the first ``s`` schedule points.

    No measured values are needed: the posterior variance of a fixed model
    depends only on the locations, so zeros stand in for the values.
    """
    schedule = np.asarray(schedule, float)
    steps = range(schedule.size + 1) if steps is None else steps
    out = []
    for s in steps:
        if not 0 <= s <= schedule.size:
            raise InvalidArgumentError(f"step {s} outside 0..{schedule.size}")
        xs = schedule[:s]
        pred = posterior(model, xs, np.zeros(s), [target])
        var = pred.var[0] + (pred.noise_var[0] if predictive_noise else 0.0)
        out.append(Z95 * math.sqrt(var))
    return np.array(out)


@dataclass(frozen=True, eq=False)
class CovarianceDiagnostics:
    grid: np.ndarray
    model_cov: np.ndarray
    empirical_cov: np.ndarray | None = None

    @property
    def relative_difference(self) -> float:
        """Frobenius norm of (model - empirical) relative to the empirical norm."""
        if self.empirical_cov is None:
            return math.nan
        return float(np.linalg.norm(self.model_cov - self.empirical_cov) / np.linalg.norm(self.empirical_cov))


def fitted_curves(trajectories, basis: BasisSet, grid, standardizer: Standardizer | None = None) -> np.ndarray:
    """Basis-fit reconstructions of each trajectory on a common grid (rows)."""
    st = standardizer or Standardizer()
    phi = basis.design(st.x(grid))
    rows = []
    for t in trajectories:
        beta = fit_coefficients(Trajectory(t.id, st.x(t.xs), st.y(t.ys)), basis)
        rows.append(st.y_back(phi @ beta))
    return np.array(rows)


def covariance_diagnostics(model, grid, trajectories=None, basis: BasisSet | None = None) -> CovarianceDiagnostics:
    """Model covariance on ``grid x grid`` and, given data, the sample
    covariance of per-trajectory basis fits evaluated on the grid."""
    grid = np.asarray(grid, float)
    st = None
    if isinstance(model, IgpmModel):
        basis = basis or model.basis
        st = model.standardizer
        model = model.gp
    model_cov = posterior(model, None, None, grid, full_cov=True).cov
    empirical = None
    if trajectories is not None:
        if basis is None:
            raise InvalidArgumentError("a basis is needed to reconstruct trajectories")
        curves = fitted_curves(trajectories, basis, grid, st or model.standardizer)
        d = curves - curves.mean(axis=0)
        empirical = d.T @ d / (len(curves) - 1)
        upper = np.triu(empirical)
        empirical = upper + np.triu(upper, 1).T
    return CovarianceDiagnostics(grid, model_cov, empirical)
