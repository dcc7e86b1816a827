"""Price of Anarchy / Monarchy / Governance and the optimal partition.

The PoA-vs-PoM relationship is modelled as ``f(x) = a / (x + b) + c`` with
``x = PoM``.  Given ``b`` the model is linear in ``(a, c)``, so the fit
scans ``b``, solves the linear least-squares subproblem exactly for each
candidate, and polishes the best candidates with golden-section search on
the profiled residual.
"""

from __future__ import annotations

import math
import re
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from govsim.errors import (
    FitRejectedError,
    InsufficientDataError,
    InvalidParameterError,
    SolverError,
    UndefinedRatioError,
)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
CLAMP_TOL = 1e-9
B_RANGE = (1e-4, 1.0)


@dataclass(frozen=True)
class GovernanceSample:
    n: int
    poa: float
    pom: float
    raw_performance: float = float("nan")
    raw_cost: float = float("nan")

    def __post_init__(self):
        for name in ("poa", "pom"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParameterError(f"{name}={v} outside [0, 1] for n={self.n}")


@dataclass(frozen=True)
class FittedRelationship:
    a: float
    b: float
    c: float
    residual: float
    x_min: float
    x_max: float
    r_squared: float = float("nan")

    def __call__(self, x):
        return self.a / (np.asarray(x, dtype=float) + self.b) + self.c


@dataclass(frozen=True)
class PoGResult:
    optimal_x: float
    optimal_pog: float
    optimal_n: int
    gamma_name: str


def poa_general(psi_opt: float, psi_dis: float) -> float:
    """Relative performance loss of a decentralized solution."""
    if psi_opt == 0:
        raise UndefinedRatioError("optimal performance is zero")
    value = (psi_opt - psi_dis) / psi_opt
    if value < -CLAMP_TOL or value > 1.0 + CLAMP_TOL:
        raise InvalidParameterError(
            f"inconsistent performances psi_opt={psi_opt}, psi_dis={psi_dis}"
        )
    if value < 0.0 or value > 1.0:
        warnings.warn(f"PoA {value!r} clamped to [0, 1]", RuntimeWarning, stacklevel=2)
        value = min(max(value, 0.0), 1.0)
    return value


# --- combination functions ------------------------------------------------

Gamma = Callable[[float, float], float]


def euclidean(poa, pom):
    return np.hypot(poa, pom)


def weighted_euclidean(w: float) -> Gamma:
    def gamma(poa, pom):
        return np.sqrt(w * np.square(poa) + (1.0 - w) * np.square(pom))

    return gamma


def weighted_sum(w: float) -> Gamma:
    def gamma(poa, pom):
        return w * np.asarray(poa) + (1.0 - w) * np.asarray(pom)

    return gamma


_GAMMA_RE = re.compile(r"^(weighted-euclidean|weighted-sum)(?:[:(]([0-9.eE+-]+)\)?)?$")


def get_gamma(name: str) -> Gamma:
    """Look up a combination function.

    Accepted names: ``euclidean``, ``weighted-euclidean:<w>`` and
    ``weighted-sum:<w>``, where ``w`` in [0, 1] weighs the PoA term.
    ``weighted-euclidean(0.3)`` is also understood.
    """
    if name == "euclidean":
        return euclidean
    m = _GAMMA_RE.match(name)
    if not m:
        raise InvalidParameterError(f"unknown combination function {name!r}")
    w = 0.5 if m.group(2) is None else float(m.group(2))
    if not 0.0 <= w <= 1.0:
        raise InvalidParameterError(f"weight {w} outside [0, 1]")
    return weighted_euclidean(w) if m.group(1) == "weighted-euclidean" else weighted_sum(w)


def pog(poa: float, pom: float, gamma: Gamma | str = euclidean) -> float:
    if not (0.0 <= poa <= 1.0 and 0.0 <= pom <= 1.0):
        raise InvalidParameterError(f"PoA/PoM must lie in [0, 1], got ({poa}, {pom})")
    if isinstance(gamma, str):
        gamma = get_gamma(gamma)
    return float(gamma(poa, pom))


# --- 1-D minimisation -----------------------------------------------------


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10,
                   max_iter: int = 500) -> tuple[float, float]:
    """Minimise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``.

    The endpoints are also checked, so a monotone ``f`` returns the
    correct boundary.
    """
    a, b = float(lo), float(hi)
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
    mid = 0.5 * (a + b)
    candidates = [(f(mid), mid), (f(lo), float(lo)), (f(hi), float(hi))]
    fx, x = min(candidates)
    return x, fx


# --- relationship fit -----------------------------------------------------


def _linear_subproblem(x: np.ndarray, y: np.ndarray, b: float) -> tuple[float, float, float]:
    design = np.column_stack([1.0 / (x + b), np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return float(coef[0]), float(coef[1]), float(resid @ resid)


def fit_relationship(samples: Sequence[GovernanceSample], grid_size: int = 400,
                     starts: int = 3) -> FittedRelationship:
    """Least-squares fit of ``poa ~ a / (pom + b) + c``."""
    return fit_points([s.pom for s in samples], [s.poa for s in samples], grid_size, starts)


def fit_points(x, y, grid_size: int = 400, starts: int = 3) -> FittedRelationship:
    """Fit ``y ~ a / (x + b) + c`` with ``b`` restricted to ``B_RANGE``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 4:
        raise InsufficientDataError(f"need at least 4 samples, got {len(x)}")
    if np.ptp(x) == 0.0:
        raise InsufficientDataError("all samples share the same PoM")

    grid = np.geomspace(*B_RANGE, grid_size)
    sse = np.array([_linear_subproblem(x, y, b)[2] for b in grid])

    # local minima of the profiled residual, best first
    interior = [i for i in range(grid_size)
                if (i == 0 or sse[i] <= sse[i - 1]) and (i == grid_size - 1 or sse[i] <= sse[i + 1])]
    interior.sort(key=lambda i: sse[i])

    def profiled(b):
        return _linear_subproblem(x, y, b)[2]

    best_b, best_sse = grid[interior[0]], sse[interior[0]]
    for i in interior[:starts]:
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_size - 1)]
        b, val = golden_section(profiled, lo, hi, tol=1e-13 * max(1.0, hi))
        if val < best_sse:
            best_b, best_sse = b, val

    a, c, resid = _linear_subproblem(x, y, best_b)
    if np.any(x + best_b <= 0.0):
        raise FitRejectedError(f"fitted pole at x = {-best_b} lies inside the sample domain")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - resid / ss_tot if ss_tot > 0 else 1.0
    return FittedRelationship(a, float(best_b), c, max(resid, 0.0), float(x.min()),
                              float(x.max()), float(r2))


# --- optimal PoG ----------------------------------------------------------


def optimal_pog(curve: FittedRelationship, gamma: Gamma | str = "euclidean",
                samples: Sequence[GovernanceSample] = (), grid_points: int = 10_000,
                tol: float = 1e-9) -> PoGResult:
    """Minimise ``gamma(f(x), x)`` over the fitted PoM domain.

    The minimiser is mapped back to the sampled subgroup size whose PoM is
    nearest; ties go to the smaller ``n``.  ``optimal_n`` is ``-1`` when no
    samples are supplied.
    """
    name = gamma if isinstance(gamma, str) else getattr(gamma, "__name__", "custom")
    fn = get_gamma(gamma) if isinstance(gamma, str) else gamma

    def g(x):
        return fn(curve(x), x)

    xs = np.linspace(curve.x_min, curve.x_max, grid_points)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = g(xs)
    if not np.all(np.isfinite(vals)):
        raise SolverError("PoG objective is not finite on the fitted domain")
    i = int(np.argmin(vals))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, grid_points - 1)]
    x_opt, g_opt = golden_section(lambda t: float(g(t)), lo, hi, tol=tol)

    n_opt = -1
    if samples:
        ranked = sorted(samples, key=lambda s: (abs(s.pom - x_opt), s.n))
        n_opt = ranked[0].n
    return PoGResult(float(x_opt), float(g_opt), n_opt, name)
