"""Campaign adaptor: oxygen FOM, POD surrogate and a scalar QoI behind one object."""

from dataclasses import dataclass

from ..model import FieldSolution, Grid
from ..rom import train_surrogate
from .network import extravascular_distance, inlet_indicator
from .qoi import make_qoi
from .sampling import PARAMETER_RANGES, PHYSICAL_NAMES, OxygenModel, sample_parameters
from .solver import TissueProblem

__all__ = ["OxygenTestbed", "OxygenSurrogate"]


@dataclass
class OxygenSurrogate:
    model: object  # SurrogateModel

    def solve(self, mu, features):
        d, eta = features
        return FieldSolution(self.model.evaluate_descriptors(mu.physical, d, eta), self.model.grid)


class OxygenTestbed:
    name = "oxygen"

    def __init__(self, qoi="avg_po2", grid_n=40, pod_rank=10, xi=0.75, problem=None):
        problem = problem or TissueProblem(grid=Grid.square(grid_n))
        self.model = OxygenModel(problem)
        self.qoi_name = qoi
        self._qoi = make_qoi(qoi, alpha_ox=problem.alpha_ox)
        self.pod_rank = pod_rank
        self.xi = xi
        self.ranges = tuple(PARAMETER_RANGES[n] for n in PHYSICAL_NAMES)

    @property
    def grid(self):
        return self.model.grid

    @property
    def version(self):
        return self.model.version

    @property
    def min_training_size(self):
        return self.pod_rank + 1

    def sample(self, stream, sample_id):
        return sample_parameters(stream, sample_id)

    def solve(self, mu):
        self.model.validate(mu)
        return self.model.solve(mu)

    def qoi(self, output):
        return self._qoi(output)

    def features(self, mu):
        layout = mu.network_descriptor
        return extravascular_distance(layout, self.grid), inlet_indicator(layout, self.grid)

    def train(self, samples, features, outputs):
        model = train_surrogate(
            [mu.physical for mu in samples],
            [f[0] for f in features],
            [f[1] for f in features],
            [o.values for o in outputs],
            self.grid,
            self.ranges,
            k=self.pod_rank,
            xi=self.xi,
        )
        return OxygenSurrogate(model)
