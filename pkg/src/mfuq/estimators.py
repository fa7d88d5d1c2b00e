"""Monte Carlo and multi-fidelity estimators of a QoI mean, with confidence intervals."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetError,
    DegenerateVarianceError,
    DomainError,
    InsufficientDataError,
    PolicyInapplicableError,
)
from .stats import normal_quantile, sample_correlation, sample_moments, t_quantile

__all__ = [
    "QoiSamplePair",
    "EstimateReport",
    "mc_fom_estimate",
    "mfmc_point_estimate",
    "mfmc_mse_theoretical",
    "optimal_lambda",
    "dl_mfmc_mse_given_n",
    "dl_mfmc_confidence_interval",
    "RHO_CLIP",
]

RHO_CLIP = 1e-9

MC_FOM = "MC-FOM"
DL_MFMC = "DL-MFMC"


@dataclass(frozen=True)
class QoiSamplePair:
    """QoI values of a two-fidelity sampling campaign.

    ``rom_values`` holds the surrogate QoI on all ``m1`` inputs, and
    ``fom_values`` the high-fidelity QoI on the first ``m0`` of them.
    """

    fom_values: np.ndarray
    rom_values: np.ndarray
    shared_inputs: tuple = ()

    def __post_init__(self):
        fom = np.array(self.fom_values, dtype=float).ravel()
        rom = np.array(self.rom_values, dtype=float).ravel()
        if fom.size > rom.size:
            raise DomainError(f"m0={fom.size} exceeds m1={rom.size}")
        if not (np.all(np.isfinite(fom)) and np.all(np.isfinite(rom))):
            raise DomainError("QoI values must be finite")
        if self.shared_inputs and len(self.shared_inputs) != rom.size:
            raise DomainError("shared_inputs must list one identifier per ROM value")
        fom.setflags(write=False)
        rom.setflags(write=False)
        object.__setattr__(self, "fom_values", fom)
        object.__setattr__(self, "rom_values", rom)
        object.__setattr__(self, "shared_inputs", tuple(self.shared_inputs))

    @property
    def m0(self):
        return self.fom_values.size

    @property
    def m1(self):
        return self.rom_values.size


@dataclass
class EstimateReport:
    point: float
    variance_estimate: float
    ci_low: float
    ci_high: float
    confidence_level: float
    method: str
    cost_ledger: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def half_width(self):
        return 0.5 * (self.ci_high - self.ci_low)

    def contains(self, value):
        return self.ci_low <= value <= self.ci_high

    def to_dict(self):
        return {
            "method": self.method,
            "point": self.point,
            "variance_estimate": self.variance_estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "half_width": self.half_width,
            "confidence_level": self.confidence_level,
            "cost_ledger": dict(self.cost_ledger),
            "details": dict(self.details),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            point=data["point"],
            variance_estimate=data["variance_estimate"],
            ci_low=data["ci_low"],
            ci_high=data["ci_high"],
            confidence_level=data["confidence_level"],
            method=data["method"],
            cost_ledger=dict(data.get("cost_ledger", {})),
            details=dict(data.get("details", {})),
        )


def _check_gamma(gamma):
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"confidence level must lie in (0, 1), got {gamma}")


def _interval(point, half):
    return point - half, point + half


def mc_fom_estimate(qoi_values, gamma, cost_ledger=None):
    """Plain Monte Carlo mean with a Student-t interval.

    The t quantile uses ``N`` degrees of freedom (not ``N - 1``).
    """
    _check_gamma(gamma)
    values = np.asarray(qoi_values, dtype=float).ravel()
    if values.size < 2:
        raise InsufficientDataError(f"MC-FOM needs N >= 2 samples, got {values.size}")
    mom = sample_moments(values)
    n = mom.count
    est_var = mom.variance / n
    half = t_quantile((1.0 - gamma) / 2.0, n) * math.sqrt(est_var)
    lo, hi = _interval(mom.mean, half)
    return EstimateReport(
        point=mom.mean,
        variance_estimate=est_var,
        ci_low=lo,
        ci_high=hi,
        confidence_level=gamma,
        method=MC_FOM,
        cost_ledger=dict(cost_ledger or {}),
        details={"N": n, "sigma0_hat": mom.std},
    )


def mfmc_point_estimate(pair, lam):
    """``mean(fom) + lam * (mean(rom over m1) - mean(rom over first m0))``."""
    if pair.m0 == 0:
        raise InsufficientDataError("MFMC needs at least one FOM sample")
    fom_mean = float(np.mean(pair.fom_values))
    if lam == 0:
        return fom_mean
    rom_all = float(np.mean(pair.rom_values))
    rom_shared = float(np.mean(pair.rom_values[: pair.m0]))
    return fom_mean + lam * (rom_all - rom_shared)


def mfmc_mse_theoretical(sigma0, sigma1, rho, lam, m0, m1):
    if not 1 <= m0 <= m1:
        raise DomainError(f"need 1 <= m0 <= m1, got m0={m0}, m1={m1}")
    if sigma0 <= 0 or sigma1 <= 0:
        raise DomainError("standard deviations must be positive")
    if not -1.0 <= rho <= 1.0:
        raise DomainError(f"correlation must lie in [-1, 1], got {rho}")
    return sigma0**2 / m0 + (1.0 / m0 - 1.0 / m1) * (
        lam**2 * sigma1**2 - 2.0 * lam * rho * sigma1 * sigma0
    )


def optimal_lambda(sigma0, sigma1, rho):
    if sigma1 == 0:
        raise DegenerateVarianceError("surrogate QoI has zero variance; coupling undefined")
    return rho * sigma0 / sigma1


def dl_mfmc_mse_given_n(n, p, g, w0, t_of_n, rho_n, sigma0):
    """MSE of the optimally allocated estimator after spending ``n(g+w0)+t(n)`` on training."""
    if n <= 0 or g <= 0 or w0 <= 0 or sigma0 <= 0 or t_of_n < 0:
        raise DomainError("n, g, w0, sigma0 must be positive and t(n) non-negative")
    remaining = p - (g + w0) * n - t_of_n
    if remaining <= 0:
        raise BudgetError(f"training exhausts the budget (remaining {remaining:g})", phase="policy")
    rho2 = rho_n**2
    if not w0 * rho2 > g * (1.0 - rho2):
        raise PolicyInapplicableError(
            f"efficiency condition fails: w0*rho^2={w0 * rho2:g} <= g*(1-rho^2)={g * (1 - rho2):g}"
        )
    return sigma0**2 / remaining * (math.sqrt(w0 * (1.0 - rho2)) + math.sqrt(g * rho2)) ** 2


def dl_mfmc_confidence_interval(pair, gamma, lam=None, cost_ledger=None):
    """DL-MFMC point estimate and normal-quantile confidence interval.

    ``rho`` and ``sigma0`` are estimated on the ``m0`` shared pairs and
    ``sigma1`` on all ``m1`` surrogate values; the coupling defaults to the
    estimated optimum ``rho * sigma0 / sigma1``. Passing ``lam`` forces a
    coupling and switches the width to the general MSE expression.
    """
    _check_gamma(gamma)
    m0, m1 = pair.m0, pair.m1
    if m0 < 2:
        raise InsufficientDataError(f"DL-MFMC interval needs m0 >= 2 shared pairs, got {m0}")
    fom_mom = sample_moments(pair.fom_values)
    sigma1 = sample_moments(pair.rom_values).std
    if sigma1 == 0.0:
        raise DegenerateVarianceError("surrogate QoI is constant over the m1 samples")
    var0 = fom_mom.variance
    if var0 == 0.0:
        rho = 0.0
    else:
        rho = sample_correlation(pair.fom_values, pair.rom_values[:m0])
    rho = min(1.0 - RHO_CLIP, max(-1.0 + RHO_CLIP, rho))
    sigma0 = math.sqrt(var0)

    gap = 1.0 / m0 - 1.0 / m1
    if lam is None:
        lam_used = rho * sigma0 / sigma1
        est_var = var0 / m0 - gap * rho**2 * var0
    else:
        lam_used = float(lam)
        est_var = var0 / m0 + gap * (lam_used**2 * sigma1**2 - 2.0 * lam_used * rho * sigma1 * sigma0)
    if est_var < 0.0:
        raise ArithmeticError(f"negative estimated variance {est_var:g}")

    point = mfmc_point_estimate(pair, lam_used)
    half = normal_quantile((1.0 - gamma) / 2.0) * math.sqrt(est_var)
    lo, hi = _interval(point, half)
    return EstimateReport(
        point=point,
        variance_estimate=est_var,
        ci_low=lo,
        ci_high=hi,
        confidence_level=gamma,
        method=DL_MFMC,
        cost_ledger=dict(cost_ledger or {}),
        details={
            "m0": m0,
            "m1": m1,
            "lambda_hat": lam_used,
            "rho_hat": rho,
            "sigma0_hat": sigma0,
            "sigma1_hat": sigma1,
        },
    )
