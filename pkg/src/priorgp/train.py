"""Hyperparameter estimation for prescribed GP models and polynomial order selection.

Positive parameters are optimized on a log scale and mean coefficients
directly. The optimizer is a multi-start Nelder-Mead simplex; each start
stops when the spread of objective values across the simplex falls below
``1e-8`` or after 500 iterations.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from priorgp.basis import PolynomialBasis
from priorgp.errors import (
    InvalidArgumentError,
    OrderSelectionError,
    PriorGPError,
    TrainingFailedError,
)
from priorgp.gp import (
    IDENTITY,
    ConstantNoise,
    GpModel,
    Hyperparameters,
    PolynomialKernel,
    PolynomialMean,
    SquaredExponential,
    Standardizer,
    ZeroMean,
    log_marginal_likelihood,
    log_marginal_likelihood_shared,
)

MAX_ITER = 500
FATOL = 1e-8
DEFAULT_STARTS = 8
LOG_SPREAD = math.log(100.0)
SIMPLEX_STEP = 0.5
LOG_CLIP = 30.0


@dataclass(frozen=True)
class ModelFamily:
    """A prescribed GP family: kernel kind, polynomial order and mean kind.

    ``kernel`` is ``"se"`` or ``"poly"``; ``mean`` is ``"zero"`` or
    ``"poly"`` (a polynomial mean of the same order).
    """

    kernel: str = "se"
    order: int = 1
    mean: str = "zero"

    def __post_init__(self):
        if self.kernel not in ("se", "poly") or self.mean not in ("zero", "poly"):
            raise InvalidArgumentError(f"unsupported family {self}")
        if self.order < (1 if self.kernel == "poly" else 0):
            raise InvalidArgumentError(f"order {self.order} invalid for {self.kernel} kernel")

    @property
    def n_coeffs(self) -> int:
        return self.order + 1 if self.mean == "poly" else 0

    def to_vector(self, theta: Hyperparameters) -> np.ndarray:
        second = theta.length if self.kernel == "se" else theta.offset
        if theta.sigma_y <= 0 or second <= 0:
            raise InvalidArgumentError("optimized parameters must be strictly positive")
        coeffs = list(theta.coeffs) if self.n_coeffs else []
        if len(coeffs) != self.n_coeffs:
            raise InvalidArgumentError(f"expected {self.n_coeffs} mean coefficients, got {len(coeffs)}")
        return np.array([math.log(theta.sigma_f), math.log(second), math.log(theta.sigma_y), *coeffs])

    def from_vector(self, v) -> Hyperparameters:
        logs = np.clip(np.asarray(v[:3], float), -LOG_CLIP, LOG_CLIP)
        sf, second, sy = (float(math.exp(t)) for t in logs)
        coeffs = tuple(float(c) for c in v[3:])
        if self.kernel == "se":
            return Hyperparameters(sigma_f=sf, length=second, sigma_y=sy, coeffs=coeffs)
        return Hyperparameters(sigma_f=sf, offset=second, sigma_y=sy, coeffs=coeffs)

    def build(self, theta: Hyperparameters, standardizer: Standardizer = IDENTITY) -> GpModel:
        kernel = SquaredExponential(theta.sigma_f, theta.length) if self.kernel == "se" else PolynomialKernel(theta.sigma_f, theta.offset, self.order)
        mean = PolynomialMean(theta.coeffs) if self.mean == "poly" else ZeroMean()
        return GpModel(mean, kernel, ConstantNoise(theta.sigma_y), standardizer)

    def default_start(self) -> Hyperparameters:
        return Hyperparameters(sigma_f=1.0, length=1.0, sigma_y=0.1, offset=1.0, coeffs=(0.0,) * self.n_coeffs)

    def to_dict(self) -> dict:
        return {"kernel": self.kernel, "order": self.order, "mean": self.mean}


@dataclass(frozen=True)
class StartResult:
    start: Hyperparameters
    theta: Hyperparameters | None
    value: float
    iterations: int
    history: tuple[float, ...] = ()
    error: str | None = None


@dataclass(frozen=True)
class OptimizationReport:
    """Outcome of a multi-start maximization.

    ``elapsed`` is wall-clock seconds and is ignored by equality.
    """

    family: ModelFamily
    best: Hyperparameters
    best_value: float
    starts: tuple[StartResult, ...]
    seed: int
    elapsed: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        def hp(t: Hyperparameters | None):
            if t is None:
                return None
            return {"sigma_f": t.sigma_f, "length": t.length, "offset": t.offset, "sigma_y": t.sigma_y, "coeffs": list(t.coeffs)}

        return {
            "family": self.family.to_dict(),
            "best": hp(self.best),
            "best_value": self.best_value,
            "seed": self.seed,
            "elapsed_s": self.elapsed,
            "starts": [
                {"start": hp(s.start), "theta": hp(s.theta), "value": s.value if math.isfinite(s.value) else None, "iterations": s.iterations, "error": s.error}
                for s in self.starts
            ],
        }


def _start_points(family: ModelFamily, start: Hyperparameters, extra: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    v0 = family.to_vector(start)
    points = [v0]
    for _ in range(extra):
        v = v0.copy()
        v[:3] += rng.uniform(-LOG_SPREAD, LOG_SPREAD, size=3)
        v[3:] += rng.standard_normal(v.size - 3)
        points.append(v)
    return points


def _maximize(family: ModelFamily, objective, starts: list[np.ndarray], seed: int) -> OptimizationReport:
    t0 = time.perf_counter()

    def neg(v):
        try:
            with np.errstate(all="ignore"):
                val = objective(family.build(family.from_vector(v), objective.standardizer))
        except (PriorGPError, np.linalg.LinAlgError, ValueError, FloatingPointError):
            return math.inf
        return -val if math.isfinite(val) else math.inf

    results = []
    for v0 in starts:
        start_theta = family.from_vector(v0)
        f0 = neg(v0)
        if not math.isfinite(f0):
            results.append(StartResult(start_theta, None, -math.inf, 0, (), "objective not finite at start"))
            continue
        history: list[float] = []

        def record(intermediate_result):
            history.append(-float(intermediate_result.fun))

        simplex = np.vstack([v0] + [v0 + SIMPLEX_STEP * e for e in np.eye(v0.size)])
        res = minimize(
            neg,
            v0,
            method="Nelder-Mead",
            callback=record,
            options={"maxiter": MAX_ITER, "fatol": FATOL, "xatol": math.inf, "initial_simplex": simplex},
        )
        results.append(StartResult(start_theta, family.from_vector(res.x), -float(res.fun), int(res.nit), tuple(history)))

    ok = [r for r in results if r.theta is not None and math.isfinite(r.value)]
    if not ok:
        raise TrainingFailedError("every optimization start failed", [(r.start, r.error) for r in results])
    best = max(ok, key=lambda r: r.value)
    return OptimizationReport(family, best.theta, best.value, tuple(results), seed, time.perf_counter() - t0)


class _CurrentObjective:
    def __init__(self, xs, ys, standardizer):
        self.xs, self.ys, self.standardizer = xs, ys, standardizer

    def __call__(self, model: GpModel) -> float:
        return log_marginal_likelihood(model, self.xs, self.ys)


class _PreviousObjective:
    """Sum of trajectory LMLs; trajectories sharing locations share a factorization."""

    def __init__(self, previous, standardizer):
        self.standardizer = standardizer
        groups: dict[bytes, list] = {}
        for t in previous:
            groups.setdefault(t.xs.tobytes(), []).append(t)
        self.groups = [(ts[0].xs, np.stack([t.ys for t in ts])) for ts in groups.values()]

    def __call__(self, model: GpModel) -> float:
        return sum(log_marginal_likelihood_shared(model, xs, ys) for xs, ys in self.groups)


def previous_objective(family: ModelFamily, theta: Hyperparameters, previous, standardizer: Standardizer = IDENTITY) -> float:
    """Summed log marginal likelihood of ``previous`` at fixed parameters."""
    return _PreviousObjective(list(previous), standardizer)(family.build(theta, standardizer))


def fit_current(
    family: ModelFamily,
    xs,
    ys,
    start: Hyperparameters | None = None,
    extra_starts: int = DEFAULT_STARTS - 1,
    seed: int = 0,
    *,
    standardizer: Standardizer = IDENTITY,
) -> OptimizationReport:
    """Maximize the log marginal likelihood of one observed trajectory."""
    xs = np.atleast_1d(np.asarray(xs, float))
    ys = np.atleast_1d(np.asarray(ys, float))
    if xs.size < 1 or xs.shape != ys.shape:
        raise InvalidArgumentError("need at least one (x, y) pair")
    start = start or family.default_start()
    return _maximize(family, _CurrentObjective(xs, ys, standardizer), _start_points(family, start, extra_starts, seed), seed)


def fit_previous(
    family: ModelFamily,
    previous,
    starts: int = DEFAULT_STARTS,
    seed: int = 0,
    *,
    start: Hyperparameters | None = None,
    standardizer: Standardizer = IDENTITY,
) -> OptimizationReport:
    """Maximize the summed log marginal likelihood of previous trajectories.

    Without an explicit ``start``, polynomial mean coefficients start at the
    pooled least-squares fit.
    """
    previous = list(previous)
    if not previous:
        raise InvalidArgumentError("need at least one previous trajectory")
    if start is None:
        start = family.default_start()
        if family.n_coeffs:
            x = np.concatenate([standardizer.x(t.xs) for t in previous])
            y = np.concatenate([standardizer.y(t.ys) for t in previous])
            c, *_ = np.linalg.lstsq(PolynomialBasis(family.order).design(x), y, rcond=None)
            start = Hyperparameters(start.sigma_f, start.length, start.sigma_y, start.offset, tuple(c))
    objective = _PreviousObjective(previous, standardizer)
    return _maximize(family, objective, _start_points(family, start, max(starts, 1) - 1, seed), seed)


# ---------------------------------------------------------------------------
# Order selection
# ---------------------------------------------------------------------------

TRAIN_FRACTION = 0.7


def order_selection_errors(previous, q_candidates, split_seed: int = 0) -> dict[int, float]:
    """Mean held-out MSE per feasible polynomial order.

    Every trajectory is split once at random (70 % train / 30 % test) and the
    same split is reused for all candidate orders.
    """
    previous = list(previous)
    if not q_candidates:
        raise OrderSelectionError("no candidate orders given")
    st = Standardizer.fit([t.xs for t in previous], [t.ys for t in previous], center_y=False)
    rng = np.random.default_rng(split_seed)
    splits = []
    for t in previous:
        n = len(t)
        n_train = min(n - 1, max(1, int(round(TRAIN_FRACTION * n))))
        perm = rng.permutation(n)
        splits.append((np.sort(perm[:n_train]), np.sort(perm[n_train:])))
    errors: dict[int, float] = {}
    for q in sorted(set(int(q) for q in q_candidates)):
        if any(train.size < q + 1 for train, _ in splits):
            warnings.warn(f"order q={q} skipped: some trajectory has fewer than {q + 1} training points", stacklevel=2)
            continue
        basis = PolynomialBasis(q)
        mse = []
        for t, (train, test) in zip(previous, splits):
            x = st.x(t.xs)
            beta, *_ = np.linalg.lstsq(basis.design(x[train]), t.ys[train], rcond=1e-10)
            r = basis.design(x[test]) @ beta - t.ys[test]
            mse.append(float(np.mean(r * r)))
        errors[q] = float(np.mean(mse))
    if not errors:
        raise OrderSelectionError(f"no feasible order among {list(q_candidates)}")
    return errors


def select_order(previous, q_candidates, split_seed: int = 0) -> int:
    """Order with the smallest mean held-out MSE; near-ties go to the smaller order."""
    previous = list(previous)
    errors = order_selection_errors(previous, q_candidates, split_seed)
    scale = float(np.mean(np.concatenate([t.ys for t in previous]) ** 2)) or 1.0
    best = min(errors.values())
    return min(q for q, e in errors.items() if e <= best + 1e-10 * scale)
