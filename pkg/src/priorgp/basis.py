"""Basis-function families with analytic derivatives.

Two families are provided: monomials ``1, x, ..., x^q`` and crack-growth
bases obtained by integrating the inverse Paris law for a finite-width
center-cracked plate, ``phi(a) = N(a; alpha)`` (cycles needed to grow a
crack from ``a0`` to ``a``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from priorgp.errors import (
    DomainError,
    IllConditionedBasisError,
    InvalidArgumentError,
    QuadratureError,
)

MAX_CONDITION = 1e12
TABLE_SIZE = 2048


def adaptive_simpson(f, a: float, b: float, rel_tol: float = 1e-10, max_depth: int = 40) -> float:
    """Integrate ``f`` over ``[a, b]`` by recursive interval bisection.

    The error target is ``rel_tol`` times the magnitude of the first
    whole-interval estimate, split evenly between the two halves at every
    bisection. Raises :class:`QuadratureError` when an interval still fails
    the Richardson test at ``max_depth``.
    """
    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    tol = rel_tol * abs(whole) if whole != 0.0 else rel_tol
    total = 0.0
    # (lo, hi, f(lo), f(mid), f(hi), simpson estimate, tolerance, depth)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - s
        if abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        elif depth >= max_depth:
            raise QuadratureError(f"no convergence on [{lo:.6g}, {hi:.6g}] at depth {depth}")
        else:
            stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
            stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
    return total


# ---------------------------------------------------------------------------
# Paris law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParisLawConfig:
    """Geometry, load and material constants of a center-cracked plate.

    Lengths are in mm and the stress range in MPa; ``C`` only scales the
    basis (per-trajectory coefficients absorb it).
    """

    width: float
    stress_range: float
    a0: float
    C: float
    alphas: tuple[float, ...] = (2.9,)

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        for name in ("width", "stress_range", "a0", "C"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise InvalidArgumentError(f"{name} must be a positive finite number, got {v!r}")
        if not self.a0 < self.width / 2:
            raise InvalidArgumentError(f"a0={self.a0} must be below half the width {self.width / 2}")
        if any(a < 0 or not math.isfinite(a) for a in self.alphas):
            raise InvalidArgumentError(f"exponents must be non-negative: {self.alphas}")

    @property
    def a_max(self) -> float:
        return self.width / 2

    def prefactor(self, alpha: float) -> float:
        return 1.0 / (self.C * self.stress_range**alpha * math.pi ** (alpha / 2))

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "stress_range": self.stress_range,
            "a0": self.a0,
            "C": self.C,
            "alphas": list(self.alphas),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ParisLawConfig:
        return cls(
            width=float(d["width"]),
            stress_range=float(d["stress_range"]),
            a0=float(d["a0"]),
            C=float(d["C"]),
            alphas=tuple(d.get("alphas", (2.9,))),
        )


VIRKLER = ParisLawConfig(width=152.4, stress_range=48.26, a0=9.0, C=8.7096e-11, alphas=(2.9,))


def _integrand(alpha: float, width: float):
    half = alpha / 2
    k = math.pi / width

    def g(z: float) -> float:
        return max(math.cos(k * z), 0.0) / z

    if half == 0:
        return lambda z: 1.0
    return lambda z: g(z) ** half


def _integrand_vec(z: np.ndarray, alpha: float, width: float) -> np.ndarray:
    g = np.maximum(np.cos(np.pi * z / width), 0.0) / z
    return g ** (alpha / 2)


def _check_domain(a, cfg: ParisLawConfig) -> None:
    a = np.asarray(a, float)
    if not np.all(np.isfinite(a)) or np.any(a < cfg.a0) or np.any(a >= cfg.a_max):
        raise DomainError(f"crack length outside [{cfg.a0}, {cfg.a_max})")


def paris_cycles(a: float, alpha: float, cfg: ParisLawConfig, rel_tol: float = 1e-10) -> float:
    """Cycles to grow the crack from ``cfg.a0`` to ``a`` under exponent ``alpha``."""
    _check_domain(a, cfg)
    if a == cfg.a0:
        return 0.0
    integral = adaptive_simpson(_integrand(alpha, cfg.width), cfg.a0, float(a), rel_tol)
    return cfg.prefactor(alpha) * integral


@lru_cache(maxsize=64)
def _integral_table(alpha: float, a0: float, width: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    grid = np.linspace(a0, width / 2, TABLE_SIZE)
    f = _integrand(alpha, width)
    pieces = [adaptive_simpson(f, grid[i], grid[i + 1]) for i in range(TABLE_SIZE - 1)]
    values = np.concatenate([[0.0], np.cumsum(pieces)])
    slopes = _integrand_vec(grid, alpha, width)
    for arr in (grid, values, slopes):
        arr.setflags(write=False)
    return grid, values, slopes


# ---------------------------------------------------------------------------
# Basis sets
# ---------------------------------------------------------------------------


class BasisSet:
    """Ordered scalar basis functions ``phi_1..phi_p`` with derivatives."""

    size: int
    domain: tuple[float, float]

    def design(self, x) -> np.ndarray:
        """Matrix with rows ``phi(x_i)^T``, shape ``(n, p)``."""
        raise NotImplementedError

    def design_derivative(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        """Basis vector at a scalar location."""
        return self.design(np.atleast_1d(float(x)))[0]

    def derivative(self, x) -> np.ndarray:
        return self.design_derivative(np.atleast_1d(float(x)))[0]

    def descriptor(self) -> dict:
        raise NotImplementedError

    def labels(self) -> list[str]:
        return [f"phi{k + 1}" for k in range(self.size)]

    def _probe(self) -> np.ndarray:
        lo, hi = self.domain
        n = max(64, 4 * self.size)
        # stay strictly inside half-open domains
        return np.linspace(lo, hi, n + 1)[:-1] + 0.5 * (hi - lo) / n

    def _check_conditioning(self) -> None:
        phi = self.design(self._probe())
        norms = np.linalg.norm(phi, axis=0)
        norms[norms == 0] = 1.0
        scaled = phi / norms
        cond = np.linalg.cond(scaled)
        if np.isfinite(cond) and cond < MAX_CONDITION:
            return
        worst, pair = -1.0, (0, 0)
        for i, j in combinations(range(self.size), 2):
            c = np.linalg.cond(scaled[:, [i, j]])
            c = np.inf if not np.isfinite(c) else c
            if c > worst:
                worst, pair = c, (i, j)
        names = self.labels()
        raise IllConditionedBasisError(
            f"basis design matrix condition number {cond:.3g} >= {MAX_CONDITION:.0e}; "
            f"most collinear pair: {names[pair[0]]} and {names[pair[1]]}",
            pair,
        )


@dataclass(frozen=True, eq=False)
class PolynomialBasis(BasisSet):
    q: int
    domain: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.q < 0:
            raise InvalidArgumentError(f"polynomial order must be >= 0, got {self.q}")
        self._check_conditioning()

    @property
    def size(self) -> int:
        return self.q + 1

    def design(self, x) -> np.ndarray:
        return np.vander(np.atleast_1d(np.asarray(x, float)), self.q + 1, increasing=True)

    def design_derivative(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, float))
        out = np.zeros((x.size, self.q + 1))
        if self.q >= 1:
            out[:, 1:] = np.vander(x, self.q, increasing=True) * np.arange(1, self.q + 1)
        return out

    def descriptor(self) -> dict:
        return {"kind": "poly", "q": self.q}

    def labels(self) -> list[str]:
        return [f"x^{k}" for k in range(self.size)]


def poly_basis(q: int) -> PolynomialBasis:
    return PolynomialBasis(q)


@dataclass(frozen=True, eq=False)
class ParisBasis(BasisSet):
    """``phi_k(a) = N(a; alpha_k)`` for every exponent in the config.

    Values come from a cubic Hermite table built on exact nodal values and
    slopes; ``direct=True`` evaluates every point by quadrature instead.
    Derivatives are always the closed-form integrand.
    """

    config: ParisLawConfig
    direct: bool = False
    _splines: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if not self.config.alphas:
            raise InvalidArgumentError("Paris basis needs at least one exponent")
        cfg = self.config
        splines = tuple(CubicHermiteSpline(*_integral_table(a, cfg.a0, cfg.width), extrapolate=False) for a in cfg.alphas)
        object.__setattr__(self, "_splines", splines)
        self._check_conditioning()

    @property
    def size(self) -> int:
        return len(self.config.alphas)

    @property
    def domain(self) -> tuple[float, float]:
        return (self.config.a0, self.config.a_max)

    def design(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, float))
        _check_domain(x, self.config)
        cfg = self.config
        out = np.empty((x.size, self.size))
        for k, alpha in enumerate(cfg.alphas):
            if self.direct:
                out[:, k] = [paris_cycles(a, alpha, cfg) for a in x]
            else:
                col = cfg.prefactor(alpha) * self._splines[k](x)
                col[x == cfg.a0] = 0.0
                out[:, k] = col
        return out

    def design_derivative(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, float))
        _check_domain(x, self.config)
        cfg = self.config
        return np.column_stack([cfg.prefactor(a) * _integrand_vec(x, a, cfg.width) for a in cfg.alphas])

    def descriptor(self) -> dict:
        return {"kind": "paris", "config": self.config.to_dict(), "direct": self.direct}

    def labels(self) -> list[str]:
        return [f"alpha={a:g}" for a in self.config.alphas]


def paris_basis(cfg: ParisLawConfig, direct: bool = False) -> ParisBasis:
    return ParisBasis(cfg, direct)


def basis_from_descriptor(d: dict) -> BasisSet:
    if d["kind"] == "poly":
        return PolynomialBasis(int(d["q"]))
    if d["kind"] == "paris":
        return ParisBasis(ParisLawConfig.from_dict(d["config"]), bool(d.get("direct", False)))
    raise InvalidArgumentError(f"unknown basis kind {d['kind']!r}")
