"""Statistical primitives: seeded streams, moments, correlation, quantiles.

Quantile functions are self-contained (rational approximation plus Newton
polishing) so results do not depend on the installed SciPy version.
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVarianceError, DomainError, InsufficientDataError

__all__ = [
    "RngStream",
    "SampleMoments",
    "sample_moments",
    "sample_correlation",
    "normal_quantile",
    "normal_cdf",
    "t_quantile",
    "t_sf",
    "betainc",
]


class RngStream:
    """A named random stream derived from a master seed.

    The pair ``(seed, label)`` is hashed into a 128-bit entropy value, so two
    streams built from the same pair yield identical draws and different
    labels give statistically independent streams. A stream is meant for a
    single consumer; use :meth:`child` to hand out sub-streams.
    """

    def __init__(self, seed, label="root"):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.label = str(label)
        digest = hashlib.blake2b(
            f"{self.seed}:{self.label}".encode(), digest_size=16
        ).digest()
        self._entropy = int.from_bytes(digest, "little")
        self.rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self._entropy)))

    def child(self, label):
        return RngStream(self.seed, f"{self.label}/{label}")

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label!r})"


@dataclass(frozen=True)
class SampleMoments:
    count: int
    mean: float
    variance: float

    @property
    def std(self):
        return math.sqrt(self.variance)


def sample_moments(values):
    """Mean and unbiased (divisor ``count - 1``) variance of a sample."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 values, got {x.size}")
    mean = float(np.mean(x))
    var = float(np.sum((x - mean) ** 2) / (x.size - 1))
    return SampleMoments(count=int(x.size), mean=mean, variance=max(var, 0.0))


def sample_correlation(x, y):
    """Pearson correlation: plug-in covariance over plug-in standard deviations."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise DomainError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise InsufficientDataError("need at least 2 pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVarianceError("correlation undefined for a constant sequence")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


# -- Normal distribution ------------------------------------------------------

# Acklam's rational approximation of the lower-tail quantile (|rel err| < 1.2e-9)
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _acklam(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        return -_acklam(1.0 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def _lower_normal_quantile(p):
    x = _acklam(p)
    # one Halley step brings the approximation to full double precision
    e = normal_cdf(x) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_quantile(alpha):
    """Upper-tail standard normal quantile: ``z`` with ``Phi(z) = 1 - alpha``."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if alpha == 0.5:
        return 0.0
    return -_lower_normal_quantile(alpha)


# -- Student t distribution -----------------------------------------------------

def _betacf(a, b, x, max_iter=50000, eps=1e-15):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a, b, x):
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_sf(t, df):
    """Survival function ``P(T > t)`` of Student's t with ``df`` degrees of freedom."""
    nu = float(df)
    if t == 0.0:
        return 0.5
    tail = 0.5 * betainc(0.5 * nu, 0.5, nu / (nu + t * t))
    return tail if t > 0 else 1.0 - tail


def _t_pdf(t, nu):
    log_c = math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu) - 0.5 * math.log(nu * math.pi)
    return math.exp(log_c - 0.5 * (nu + 1.0) * math.log1p(t * t / nu))


def _t_initial_guess(alpha, nu):
    # Cornish-Fisher expansion around the normal quantile
    z = normal_quantile(alpha)
    z2 = z * z
    g1 = z * (z2 + 1.0) / 4.0
    g2 = z * (5.0 * z2**2 + 16.0 * z2 + 3.0) / 96.0
    g3 = z * (3.0 * z2**3 + 19.0 * z2**2 + 17.0 * z2 - 15.0) / 384.0
    return z + g1 / nu + g2 / nu**2 + g3 / nu**3


def t_quantile(alpha, df):
    """Upper-tail Student t quantile: ``t`` with ``P(T > t) = alpha``."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if int(df) != df or df < 1:
        raise DomainError(f"df must be a positive integer, got {df}")
    nu = float(df)
    if alpha == 0.5:
        return 0.0
    if alpha > 0.5:
        return -t_quantile(1.0 - alpha, df)
    if df == 1:
        return math.tan(math.pi * (0.5 - alpha))
    if df == 2:
        return (1.0 - 2.0 * alpha) / math.sqrt(2.0 * alpha * (1.0 - alpha))

    # bracket [lo, hi] on t > 0, then safeguarded Newton on the survival function
    lo, hi = 0.0, max(1.0, _t_initial_guess(alpha, nu))
    while t_sf(hi, nu) > alpha:
        lo, hi = hi, 2.0 * hi
    t = min(max(_t_initial_guess(alpha, nu), lo), hi)
    for _ in range(100):
        f = t_sf(t, nu) - alpha
        if f > 0:
            lo = t
        else:
            hi = t
        step = f / _t_pdf(t, nu)
        t_new = t + step
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-13 * max(1.0, abs(t)):
            return t_new
        t = t_new
    return t
