"""Cheap bivariate-Gaussian testbed with a planted correlation law.

Each input is a pair of independent standard normals ``(z0, z1)``. The
high-fidelity QoI is ``mean0 + sigma0 * z0``; a surrogate trained on ``n``
samples returns ``mean1 + sigma1 * (rho z0 + sqrt(1 - rho^2) z1)`` with
``1 - rho(n)^2 = min(1, c1 n^-zeta + c2)``, so every statistic the
estimators rely on is known in closed form.
"""

import math
from dataclasses import dataclass

from .model import ParameterSample

__all__ = ["SyntheticTestbed", "SyntheticSurrogate"]


@dataclass(frozen=True)
class SyntheticSurrogate:
    rho: float
    mean1: float
    sigma1: float
    perfect: bool = False
    mean0: float = 0.0
    sigma0: float = 1.0

    def solve(self, mu, features=None):
        z0, z1 = mu.physical
        if self.perfect:
            return self.mean0 + self.sigma0 * z0
        return self.mean1 + self.sigma1 * (self.rho * z0 + math.sqrt(1.0 - self.rho**2) * z1)


@dataclass(frozen=True)
class SyntheticTestbed:
    mean0: float = 1.0
    sigma0: float = 1.0
    mean1: float = 0.5
    sigma1: float = 2.0
    zeta: float = 1.0
    c1: float = 0.5
    c2: float = 0.01
    perfect: bool = False
    name: str = "synthetic"
    version: str = "gaussian-1"
    min_training_size: int = 2

    def rho_at(self, n):
        if self.perfect:
            return 1.0
        gap = min(1.0, self.c1 * n ** (-self.zeta) + self.c2)
        return math.sqrt(1.0 - gap)

    def sample(self, stream, sample_id):
        z = stream.rng.standard_normal(2)
        return ParameterSample(id=sample_id, physical=(z[0], z[1]), stream_label=stream.label)

    def solve(self, mu):
        return self.mean0 + self.sigma0 * mu.physical[0]

    def qoi(self, output):
        return float(output)

    def features(self, mu):
        return None

    def train(self, samples, features, outputs):
        return SyntheticSurrogate(
            rho=self.rho_at(len(samples)),
            mean1=self.mean1,
            sigma1=self.sigma1,
            perfect=self.perfect,
            mean0=self.mean0,
            sigma0=self.sigma0,
        )
