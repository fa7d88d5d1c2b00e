"""Scalar outputs of a tissue oxygen field: mean pO2, pO2 range and TCP."""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..model import QoiFunctional

__all__ = [
    "RadiobiologyParams",
    "qoi_avg_po2",
    "qoi_delta_po2",
    "oer",
    "oer_anoxic",
    "survival_fraction",
    "qoi_tcp",
    "QOI_NAMES",
    "make_qoi",
]

QOI_NAMES = ("avg_po2", "delta_po2", "tcp")


@dataclass(frozen=True)
class RadiobiologyParams:
    D: float = 20.0  # Gy
    alpha: float = 0.178  # 1/Gy
    beta: float = 0.0455  # 1/Gy^2
    delta: float = 1.38
    M: float = 2.81
    a: float = 522.45  # keV/um
    b: float = 1.24  # mmHg
    N_c: float = 1e8
    LET: float = 2.0  # keV/um

    def __post_init__(self):
        for name in ("delta", "M", "a", "b", "N_c", "LET"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        for name in ("D", "alpha", "beta"):
            if not getattr(self, name) >= 0:
                raise DomainError(f"{name} must be non-negative")


def _weights(field):
    w = field.grid.cell_areas()
    return w / w.sum()


def qoi_avg_po2(field, alpha_ox):
    """Area-weighted mean of ``C / alpha_ox`` (trapezoid rule), in mmHg."""
    return float(np.dot(_weights(field), field.values)) / alpha_ox


def qoi_delta_po2(field, alpha_ox):
    v = field.values
    return float(v.max() - v.min()) / alpha_ox


def oer_anoxic(params):
    ld = params.LET**params.delta
    return (ld + params.M * params.a) / (params.a + ld)


def oer(po2, params):
    po2 = np.asarray(po2, dtype=float)
    if np.any(po2 < 0):
        raise DomainError("pO2 must be non-negative")
    out = (params.b * oer_anoxic(params) + po2) / (params.b + po2)
    return float(out) if out.ndim == 0 else out


def survival_fraction(D, po2, params):
    if D < 0:
        raise DomainError("dose must be non-negative")
    d_eff = D / np.asarray(oer(po2, params))
    out = np.exp(-params.alpha * d_eff - params.beta * d_eff**2)
    return float(out) if out.ndim == 0 else out


def qoi_tcp(field, params, alpha_ox):
    """``exp(-sum_i w_i N(x_i) S_f(x_i))`` with ``N`` uniform, integrating to ``N_c``.

    Negative concentrations (possible in surrogate fields) are read as anoxia.
    """
    po2 = np.maximum(field.values, 0.0) / alpha_ox
    sf = survival_fraction(params.D, po2, params)
    surviving = params.N_c * float(np.dot(_weights(field), sf))
    return math.exp(-surviving)


def make_qoi(name, alpha_ox=3.89e-5, params=None):
    if name == "avg_po2":
        return QoiFunctional(name, lambda f: qoi_avg_po2(f, alpha_ox))
    if name == "delta_po2":
        return QoiFunctional(name, lambda f: qoi_delta_po2(f, alpha_ox))
    if name == "tcp":
        rp = params or RadiobiologyParams()
        return QoiFunctional(name, lambda f: qoi_tcp(f, rp, alpha_ox))
    raise DomainError(f"unknown QoI {name!r}; choose from {', '.join(QOI_NAMES)}")
