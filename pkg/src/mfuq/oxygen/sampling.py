"""Uniform input sampling and the forward-model wrapper for the oxygen testbed."""

from dataclasses import dataclass, field

from ..errors import DomainError
from ..model import ParameterSample
from .network import DENSITY_RANGE, SEEDS_FRACTION_RANGE, VascularLayout, generate_network
from .solver import SOLVER_VERSION, TissueProblem, fom_solve

__all__ = ["PARAMETER_RANGES", "PHYSICAL_NAMES", "sample_parameters", "OxygenModel"]

PARAMETER_RANGES = {
    "V_max": (0.40e-4, 2.40e-4),
    "C_in": (2.25e-3, 3.75e-3),
    "P_O2": (0.35e-4, 3.00e-4),
    "density_SV": DENSITY_RANGE,
    "seeds_fraction": SEEDS_FRACTION_RANGE,
}
PHYSICAL_NAMES = ("V_max", "C_in", "P_O2")


def sample_parameters(rng, sample_id=0, ranges=None):
    """Independent uniform draws over the five ranges, then a layout.

    The physical parameters and network hyper-parameters come from ``rng``
    in the fixed order of :data:`PARAMETER_RANGES`; the layout is grown
    from the child stream ``"network"``.
    """
    ranges = ranges or PARAMETER_RANGES
    gen = rng.rng
    draws = {name: float(gen.uniform(*ranges[name])) for name in PARAMETER_RANGES}
    layout = generate_network(draws["density_SV"], draws["seeds_fraction"], rng.child("network"))
    return ParameterSample(
        id=sample_id,
        physical=tuple(draws[n] for n in PHYSICAL_NAMES),
        network_descriptor=layout,
        stream_label=rng.label,
    )


@dataclass(frozen=True)
class OxygenModel:
    """:class:`~mfuq.model.ForwardModel` for the reduced tissue problem."""

    problem: TissueProblem = field(default_factory=TissueProblem)
    version: str = SOLVER_VERSION

    @property
    def grid(self):
        return self.problem.grid

    def validate(self, mu):
        if len(mu.physical) != len(PHYSICAL_NAMES):
            raise DomainError(f"expected {len(PHYSICAL_NAMES)} physical parameters, got {len(mu.physical)}")
        for name, value in zip(PHYSICAL_NAMES, mu.physical):
            lo, hi = PARAMETER_RANGES[name]
            if not lo <= value <= hi:
                raise DomainError(f"{name}={value:g} outside [{lo:g}, {hi:g}]")
        if not isinstance(mu.network_descriptor, VascularLayout):
            raise DomainError("sample carries no vascular layout")

    def solve(self, mu):
        problem = self.problem.with_physical(*mu.physical)
        return fom_solve(problem, mu.network_descriptor)
