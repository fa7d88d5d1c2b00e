"""Contracts between the estimators and concrete solvers.

Forward models, surrogate outputs and QoI functionals exchange
:class:`ParameterSample` and :class:`FieldSolution` values; every costly
action is charged to a :class:`CostLedger` in declared cost units.
"""

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import numpy as np

from .errors import BudgetExceededError, DomainError

__all__ = [
    "Grid",
    "ParameterSample",
    "FieldSolution",
    "SnapshotSet",
    "QoiFunctional",
    "ForwardModel",
    "forward_model_solve",
    "CostLedger",
    "LEDGER_COMPONENTS",
]

LEDGER_COMPONENTS = ("generate", "fom", "train", "rom")


@dataclass(frozen=True)
class Grid:
    """Uniform node-centred 2D grid; ``spacing`` in metres."""

    nx: int
    ny: int
    spacing: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2 or not self.spacing > 0:
            raise DomainError(f"invalid grid {self.nx}x{self.ny}, h={self.spacing}")

    @classmethod
    def square(cls, n, side=1e-3):
        return cls(nx=n, ny=n, spacing=side / (n - 1))

    @property
    def size(self):
        return self.nx * self.ny

    @property
    def extent(self):
        return (self.nx - 1) * self.spacing, (self.ny - 1) * self.spacing

    @property
    def area(self):
        lx, ly = self.extent
        return lx * ly

    def coordinates(self, unit=False):
        """Node coordinates, each of shape ``(ny, nx)``; ``unit`` rescales by the x extent."""
        x = np.arange(self.nx) * self.spacing
        y = np.arange(self.ny) * self.spacing
        if unit:
            side = self.extent[0]
            x, y = x / side, y / side
        return np.meshgrid(x, y)

    def cell_areas(self):
        """Dual-cell areas (trapezoid weights) per node, flattened row-major."""
        wx = np.full(self.nx, self.spacing)
        wx[[0, -1]] *= 0.5
        wy = np.full(self.ny, self.spacing)
        wy[[0, -1]] *= 0.5
        return np.outer(wy, wx).ravel()


@dataclass(frozen=True)
class ParameterSample:
    """One input realization: physical parameters plus an opaque network handle."""

    id: int
    physical: tuple
    network_descriptor: Any = None
    stream_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "physical", tuple(float(v) for v in self.physical))


@dataclass(frozen=True, eq=False)
class FieldSolution:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.size != self.grid.size:
            raise DomainError(f"field has {v.size} values, grid expects {self.grid.size}")
        if not np.all(np.isfinite(v)):
            raise DomainError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_array(self):
        return self.values.reshape(self.grid.ny, self.grid.nx)

    def __eq__(self, other):
        return (
            isinstance(other, FieldSolution)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass
class SnapshotSet:
    """Ordered (sample, field) pairs sharing one grid; ids strictly increasing."""

    entries: list = field(default_factory=list)
    seed: int = 0
    solver_version: str = ""

    def __post_init__(self):
        entries, self.entries = list(self.entries), []
        for mu, sol in entries:
            self.append(mu, sol)

    @property
    def grid(self):
        return self.entries[0][1].grid if self.entries else None

    def append(self, mu, solution):
        if self.entries:
            if solution.grid != self.grid:
                raise DomainError("all snapshots must share one grid")
            if mu.id <= self.entries[-1][0].id:
                raise DomainError(f"snapshot ids must increase (got {mu.id} after {self.entries[-1][0].id})")
        self.entries.append((mu, solution))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def samples(self):
        return [mu for mu, _ in self.entries]

    @property
    def fields(self):
        return [sol for _, sol in self.entries]

    def matrix(self):
        """Snapshot matrix of shape ``(N_h, n)``."""
        if not self.entries:
            return np.zeros((0, 0))
        return np.column_stack([sol.values for _, sol in self.entries])

    def head(self, n):
        return SnapshotSet(self.entries[:n], seed=self.seed, solver_version=self.solver_version)

    def tail(self, n):
        return SnapshotSet(self.entries[len(self.entries) - n:], seed=self.seed,
                           solver_version=self.solver_version)


class QoiFunctional:
    """Named scalar functional of a field."""

    def __init__(self, name, fn: Callable[[FieldSolution], float]):
        self.name = name
        self._fn = fn

    def evaluate(self, solution):
        return float(self._fn(solution))

    __call__ = evaluate

    def __repr__(self):
        return f"QoiFunctional({self.name!r})"


class ForwardModel(Protocol):
    def validate(self, mu: ParameterSample) -> None: ...

    def solve(self, mu: ParameterSample) -> FieldSolution: ...


def forward_model_solve(model, mu, ledger=None, cost=0.0, phase=None):
    """Validate ``mu``, run the model and charge the declared FOM cost."""
    model.validate(mu)
    solution = model.solve(mu)
    if ledger is not None:
        ledger.charge("fom", cost, phase=phase)
    return solution


class CostLedger:
    """Per-component cost accounting against a fixed budget.

    A charge that would push the total above the budget is rejected with
    :class:`BudgetExceededError` and leaves the ledger untouched.
    """

    def __init__(self, budget):
        if not budget > 0:
            raise DomainError(f"budget must be positive, got {budget}")
        self.budget = float(budget)
        self.components = {c: 0.0 for c in LEDGER_COMPONENTS}
        self.phases = {}
        self.counts = {c: 0 for c in LEDGER_COMPONENTS}
        self._lock = threading.Lock()

    @property
    def total(self):
        return sum(self.components.values())

    @property
    def remaining(self):
        return self.budget - self.total

    def charge(self, component, amount, phase=None, count=1):
        if component not in self.components:
            raise DomainError(f"unknown ledger component {component!r}")
        amount = float(amount)
        if amount < 0:
            raise DomainError(f"cannot charge a negative amount ({amount})")
        with self._lock:
            new_total = self.total + amount
            if new_total > self.budget * (1.0 + 1e-12):
                raise BudgetExceededError(
                    f"charging {amount:g} to {component!r} would bring the total to "
                    f"{new_total:g} > budget {self.budget:g}",
                    phase=phase,
                )
            self.components[component] += amount
            self.counts[component] += count
            if phase is not None:
                self.phases[phase] = self.phases.get(phase, 0.0) + amount
        return self

    def to_dict(self):
        return {
            "budget": self.budget,
            "total": self.total,
            "remaining": self.remaining,
            "components": dict(self.components),
            "counts": dict(self.counts),
            "phases": dict(self.phases),
        }
