"""Budget management for a trainable surrogate.

Fits the trend laws ``1 - rho(n)^2 ~ c1 n^-zeta + c2`` and
``t(n) ~ c3 n + c4``, picks the training size minimizing the MSE upper
bound, and converts the remaining budget into FOM/ROM sample counts.
"""

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import nnls

from .errors import BudgetError, DomainError, InsufficientDataError, PolicyInapplicableError
from .estimators import RHO_CLIP, dl_mfmc_mse_given_n

__all__ = [
    "CostModel",
    "TrendCoefficients",
    "SamplingPolicy",
    "CorrelationTrend",
    "golden_section_search",
    "fit_correlation_trend",
    "fit_training_time_trend",
    "mse_upper_bound",
    "max_training_size",
    "optimal_training_size",
    "efficiency_check",
    "compute_policy",
]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

ZETA_GRID = np.geomspace(0.05, 8.0, 240)


@dataclass(frozen=True)
class CostModel:
    g: float
    w0: float
    w1: float = 0.0
    unit: str = "cost units"

    def __post_init__(self):
        if not (self.g > 0 and self.w0 > 0):
            raise DomainError(f"costs must be positive: g={self.g}, w0={self.w0}")
        if self.w1 != 0.0:
            raise DomainError("surrogate evaluations are free in this setting (w1 must be 0)")

    def scaled(self, factor):
        return CostModel(g=self.g * factor, w0=self.w0 * factor, w1=0.0, unit=self.unit)


@dataclass(frozen=True)
class TrendCoefficients:
    zeta: float
    c1: float
    c2: float
    c3: float
    c4: float

    def __post_init__(self):
        if not self.zeta > 0:
            raise DomainError(f"zeta must be positive, got {self.zeta}")
        if min(self.c1, self.c2, self.c3, self.c4) < 0:
            raise DomainError("trend coefficients must be non-negative")

    def correlation_gap(self, n):
        """Modelled ``1 - rho(n)^2``."""
        return self.c1 * n ** (-self.zeta) + self.c2

    def training_time(self, n):
        return self.c3 * n + self.c4

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: float(data[k]) for k in ("zeta", "c1", "c2", "c3", "c4")})


@dataclass(frozen=True)
class SamplingPolicy:
    n_star: int
    m0_star: int
    m1_star: int
    r: float
    lambda_star: float
    remaining_budget_after_training: float
    predicted_mse_bound: float
    committed_cost: float = 0.0

    @property
    def leftover_budget(self):
        return self.remaining_budget_after_training - self.committed_cost

    def to_dict(self):
        d = asdict(self)
        d["leftover_budget"] = self.leftover_budget
        return d

    @classmethod
    def from_dict(cls, data):
        keys = ("n_star", "m0_star", "m1_star", "r", "lambda_star",
                "remaining_budget_after_training", "predicted_mse_bound", "committed_cost")
        return cls(**{k: data[k] for k in keys})


class CorrelationTrend(NamedTuple):
    zeta: float
    c1: float
    c2: float


def golden_section_search(f, a, b, tol=1e-3):
    """Minimize a unimodal ``f`` on ``[a, b]``; returns the midpoint of the final bracket."""
    a, b = min(a, b), max(a, b)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _sorted_points(points):
    pts = sorted((float(n), float(v)) for n, v in points)
    return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])


def _profile_fit(n, y, zeta):
    design = np.column_stack([n ** (-zeta), np.ones_like(n)])
    coef, resid = nnls(design, y)
    return coef, resid**2


def fit_correlation_trend(points):
    """Least-squares fit of ``1 - rho_j^2 = c1 n_j^-zeta + c2`` with ``c1, c2 >= 0``.

    ``(c1, c2)`` are profiled out by non-negative least squares for each
    ``zeta`` on a log grid over ``[0.05, 8]``; the best grid cell is then
    refined by golden-section search.
    """
    n, rho = _sorted_points(points)
    if np.unique(n).size < 3:
        raise InsufficientDataError("need observations at >= 3 distinct training sizes")
    if not np.all(np.abs(rho) <= 1.0):
        raise DomainError("correlations must be finite and lie in [-1, 1]")
    if np.any(n <= 0):
        raise DomainError("training sizes must be positive")
    y = 1.0 - rho**2
    if np.ptp(y) == 0.0:
        return CorrelationTrend(zeta=1.0, c1=0.0, c2=float(y[0]))

    rss = np.array([_profile_fit(n, y, z)[1] for z in ZETA_GRID])
    i = int(np.argmin(rss))
    lo = ZETA_GRID[max(i - 1, 0)]
    hi = ZETA_GRID[min(i + 1, ZETA_GRID.size - 1)]
    zeta = golden_section_search(lambda z: _profile_fit(n, y, z)[1], lo, hi, tol=1e-6 * hi)
    if _profile_fit(n, y, zeta)[1] > rss[i]:
        zeta = float(ZETA_GRID[i])
    (c1, c2), _ = _profile_fit(n, y, zeta)
    return CorrelationTrend(zeta=float(zeta), c1=float(c1), c2=float(c2))


def fit_training_time_trend(points):
    """Least-squares line ``t = c3 n + c4`` constrained to ``c3, c4 >= 0``."""
    n, t = _sorted_points(points)
    if np.unique(n).size < 2:
        raise InsufficientDataError("need observations at >= 2 distinct training sizes")
    if np.any(t < 0):
        raise DomainError("training times must be non-negative")
    slope, intercept = np.polyfit(n, t, 1)
    if slope < 0:
        slope, intercept = 0.0, float(np.mean(t))
    elif intercept < 0:
        slope, intercept = float(np.dot(n, t) / np.dot(n, n)), 0.0
    return float(slope), float(intercept)


def max_training_size(coeffs, p, cost):
    return (p - coeffs.c4) / (cost.g + cost.w0 + coeffs.c3)


def mse_upper_bound(n, coeffs, p, cost, sigma0):
    """Upper bound on the DL-MFMC MSE when training on ``n`` samples."""
    n_max = max_training_size(coeffs, p, cost)
    if not 0 < n < n_max:
        raise DomainError(f"n={n} outside (0, n_max={n_max:g})")
    denom = p - (cost.g + cost.w0) * n - coeffs.c3 * n - coeffs.c4
    num = coeffs.c1 * cost.w0 * n ** (-coeffs.zeta) + coeffs.c2 * cost.w0 + cost.g
    return 2.0 * sigma0**2 / denom * num


def optimal_training_size(coeffs, p, cost, sigma0, n_min):
    """Integer minimizer of :func:`mse_upper_bound` on ``[n_min, floor(n_max) - 1]``."""
    n_min = int(n_min)
    if n_min < 1:
        raise DomainError("n_min must be >= 1")
    n_max = max_training_size(coeffs, p, cost)
    n_hi = math.floor(n_max) - 1
    if n_max <= 0 or n_hi < n_min:
        raise BudgetError(
            f"budget admits no training size in [{n_min}, floor(n_max)-1] (n_max={n_max:g})",
            phase="optimal-training-size",
        )

    def bound(x):
        return mse_upper_bound(x, coeffs, p, cost, sigma0)

    if n_hi == n_min:
        return n_min
    x = golden_section_search(bound, n_min, n_hi, tol=1e-3)
    candidates = sorted({min(max(math.floor(x), n_min), n_hi), min(max(math.ceil(x), n_min), n_hi)})
    return min(candidates, key=bound)


def efficiency_check(rho, cost):
    """True when the surrogate pays off: ``w0 rho^2 > g (1 - rho^2)``."""
    if abs(rho) > 1.0:
        raise DomainError(f"|rho| must be <= 1, got {rho}")
    rho2 = rho * rho
    return cost.w0 * rho2 > cost.g * (1.0 - rho2)


def compute_policy(n_star, rho_n, sigma0, sigma1, p, cost, t_n, min_m0=2):
    """Optimal FOM/ROM sample counts for the budget left after training.

    The FOM count uses the denominator ``w0 + g r``, i.e. the per-pair cost
    under the sampling constraint ``m0 w0 + m1 g = remaining``.
    """
    rho = min(1.0 - RHO_CLIP, max(-1.0 + RHO_CLIP, float(rho_n)))
    if not efficiency_check(rho, cost):
        raise PolicyInapplicableError(
            f"efficiency condition fails at rho={rho:.6g}: use plain Monte Carlo instead"
        )
    g, w0 = cost.g, cost.w0
    remaining = p - (g + w0) * n_star - t_n
    if remaining < w0 + g:
        raise BudgetError(
            f"remaining budget {remaining:g} below one FOM+ROM sample ({w0 + g:g})", phase="policy"
        )
    rho2 = rho * rho
    r = math.sqrt(w0 * rho2 / (g * (1.0 - rho2)))
    m0 = math.floor(remaining / (w0 + g * r))
    if m0 < min_m0:
        raise PolicyInapplicableError(
            f"policy degenerates: m0*={m0} < {min_m0} (r={r:.4g}, remaining={remaining:g})"
        )
    m1 = math.floor(r * m0)
    while m0 * w0 + m1 * g > remaining:
        m1 -= 1
    lam = rho * sigma0 / sigma1 if sigma1 > 0 else 0.0
    mse = dl_mfmc_mse_given_n(n_star, p, g, w0, t_n, rho, sigma0) if sigma0 > 0 else 0.0
    return SamplingPolicy(
        n_star=int(n_star),
        m0_star=int(m0),
        m1_star=int(m1),
        r=r,
        lambda_star=lam,
        remaining_budget_after_training=remaining,
        predicted_mse_bound=mse,
        committed_cost=m0 * w0 + m1 * g,
    )
