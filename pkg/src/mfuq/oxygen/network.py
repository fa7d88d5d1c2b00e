"""Synthetic vascular layouts on the unit square and their grid descriptors.

Layouts are built from Poisson-disk seed points grown into persistent
random walks until the total centreline length matches the target density.
Occasional sprouts start from the existing tree and head for the region
farthest from any vessel. Fewer seeds at a higher ``seeds_fraction``
concentrate the same vessel length around fewer sites, which leaves larger
avascular regions.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError

__all__ = [
    "DENSITY_RANGE",
    "SEEDS_FRACTION_RANGE",
    "VascularLayout",
    "generate_network",
    "point_segment_distances",
    "extravascular_distance",
    "inlet_indicator",
    "segment_cell_lengths",
]

DENSITY_RANGE = (5.0e3, 7.0e3)
SEEDS_FRACTION_RANGE = (0.0, 0.75)

# centreline length per unit of surface-to-volume ratio, in domain sides
LENGTH_PER_DENSITY = 1.0e-3
STEP = 0.04
MAX_SEEDS = 20
TURN_STD = 1.0
BRANCH_PROB = 0.15
CANDIDATES = 4


@dataclass(frozen=True, eq=False)
class VascularLayout:
    segments: np.ndarray  # (m, 4): x0, y0, x1, y1 in unit coordinates
    inlets: np.ndarray  # (k, 2)
    density_SV: float
    seeds_fraction: float

    def __post_init__(self):
        seg = np.asarray(self.segments, dtype=float).reshape(-1, 4)
        inl = np.asarray(self.inlets, dtype=float).reshape(-1, 2)
        if seg.shape[0] == 0 or inl.shape[0] == 0:
            raise DomainError("a layout needs at least one segment and one inlet")
        if seg.min() < -1e-12 or seg.max() > 1 + 1e-12:
            raise DomainError("segments must lie in the unit square")
        object.__setattr__(self, "segments", seg)
        object.__setattr__(self, "inlets", inl)

    @property
    def total_length(self):
        s = self.segments
        return float(np.hypot(s[:, 2] - s[:, 0], s[:, 3] - s[:, 1]).sum())

    def to_array(self):
        return np.concatenate([
            [self.density_SV, self.seeds_fraction, len(self.segments), len(self.inlets)],
            self.segments.ravel(),
            self.inlets.ravel(),
        ])

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float)
        m, k = int(arr[2]), int(arr[3])
        seg = arr[4:4 + 4 * m].reshape(m, 4)
        inl = arr[4 + 4 * m:4 + 4 * m + 2 * k].reshape(k, 2)
        return cls(seg, inl, float(arr[0]), float(arr[1]))

    def __eq__(self, other):
        return isinstance(other, VascularLayout) and np.array_equal(self.to_array(), other.to_array())

    __hash__ = None

    def to_csv(self, path):
        """Segment list as ``segment,x0,y0,x1,y1,inlet`` rows."""
        inlet_set = {tuple(p) for p in self.inlets}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["segment", "x0", "y0", "x1", "y1", "inlet"])
            for i, (x0, y0, x1, y1) in enumerate(self.segments):
                w.writerow([i, repr(x0), repr(y0), repr(x1), repr(y1), int((x0, y0) in inlet_set)])


def _poisson_disk(count, rng, margin=0.06, tries=40):
    radius = 0.7 / math.sqrt(count)
    points = []
    while len(points) < count:
        for _ in range(tries):
            p = rng.uniform(margin, 1.0 - margin, size=2)
            if all(math.hypot(p[0] - q[0], p[1] - q[1]) >= radius for q in points):
                points.append(p)
                break
        else:
            radius *= 0.9
    return np.array(points)


def _reflect_steps(pos, headings, step):
    """Advance from ``pos`` along each heading, mirroring off the unit square."""
    dx, dy = np.cos(headings), np.sin(headings)
    x, y = pos[0] + step * dx, pos[1] + step * dy
    headings = np.where((x < 0.0) | (x > 1.0), np.pi - headings, headings)
    headings = np.where((y < 0.0) | (y > 1.0), -headings, headings)
    new = pos[None, :] + step * np.column_stack([np.cos(headings), np.sin(headings)])
    return np.clip(new, 0.0, 1.0), headings


_PROBES = np.column_stack([c.ravel() for c in np.meshgrid(np.linspace(0, 1, 21), np.linspace(0, 1, 21))])
_PX, _PY = _PROBES[:, 0:1].copy(), _PROBES[:, 1:2].copy()


def _fan_distances(start, ends):
    """Probe distances to the segments ``start -> ends[j]`` (all of positive length)."""
    dx, dy = ends[:, 0] - start[0], ends[:, 1] - start[1]
    rx, ry = _PX - start[0], _PY - start[1]
    t = np.clip((rx * dx + ry * dy) / np.maximum(dx * dx + dy * dy, 1e-300), 0.0, 1.0)
    ex, ey = rx - t * dx, ry - t * dy
    return np.sqrt(ex * ex + ey * ey)


def generate_network(density_SV, seeds_fraction, rng):
    """Random vascular layout for the given density and seeds fraction.

    ``rng`` is an :class:`~mfuq.stats.RngStream`; the layout is a pure
    function of its ``(seed, label)``. Each growth step draws a few
    candidate headings around the current one and keeps the one that most
    reduces the distance from a probe lattice to the vessels laid so far,
    so walks spread into empty tissue instead of folding back.
    """
    lo, hi = DENSITY_RANGE
    if not lo <= density_SV <= hi:
        raise DomainError(f"density_SV={density_SV} outside [{lo}, {hi}]")
    flo, fhi = SEEDS_FRACTION_RANGE
    if not flo <= seeds_fraction <= fhi:
        raise DomainError(f"seeds_fraction={seeds_fraction} outside [{flo}, {fhi}]")
    gen = rng.rng
    n_seeds = max(1, round(MAX_SEEDS * (1.0 - seeds_fraction)))
    seeds = _poisson_disk(n_seeds, gen)

    target = density_SV * LENGTH_PER_DENSITY
    n_segments = math.ceil(target / STEP - 1e-9)
    last_step = target - STEP * (n_segments - 1)

    walkers = [[s.copy(), gen.uniform(0.0, 2.0 * math.pi)] for s in seeds]
    segments = []
    clearance = np.full(len(_PROBES), 2.0)
    k = 0
    while len(segments) < n_segments:
        w = walkers[k % len(walkers)]
        k += 1
        step = STEP if len(segments) < n_segments - 1 else last_step
        headings = w[1] + gen.normal(0.0, TURN_STD, size=CANDIDATES)
        ends, headings = _reflect_steps(w[0], headings, step)
        dist = _fan_distances(w[0], ends)
        gain = np.maximum(clearance[:, None] - dist, 0.0).sum(axis=0)
        b = int(np.argmax(gain))
        new, heading = ends[b], float(headings[b])
        clearance = np.minimum(clearance, dist[:, b])
        segments.append([w[0][0], w[0][1], new[0], new[1]])
        w[0], w[1] = new, heading
        if gen.uniform() < BRANCH_PROB:
            # sprout from the vessel point nearest to the worst-supplied probe
            target_pt = _PROBES[int(np.argmax(clearance))]
            tips = np.array(segments)[:, 2:4]
            start = tips[int(np.argmin(((tips - target_pt) ** 2).sum(axis=1)))]
            direction = target_pt - start
            walkers.append([start.copy(), math.atan2(direction[1], direction[0])])
    return VascularLayout(np.array(segments), seeds, float(density_SV), float(seeds_fraction))


def point_segment_distances(points, segments, squared=False):
    """Distance matrix of shape ``(n_points, n_segments)``."""
    p = np.asarray(points, dtype=float)
    seg = np.asarray(segments, dtype=float)
    px, py = p[:, 0:1], p[:, 1:2]
    ax, ay = seg[:, 0], seg[:, 1]
    dx, dy = seg[:, 2] - ax, seg[:, 3] - ay
    len2 = dx * dx + dy * dy
    degenerate = len2 == 0
    inv = 1.0 / np.where(degenerate, 1.0, len2)
    rx, ry = px - ax, py - ay
    t = np.clip((rx * dx + ry * dy) * inv, 0.0, 1.0)
    if degenerate.any():
        t[:, degenerate] = 0.0
    ex, ey = rx - t * dx, ry - t * dy
    d2 = ex * ex + ey * ey
    return d2 if squared else np.sqrt(d2)


def _unit_nodes(grid):
    x, y = grid.coordinates(unit=True)
    return np.column_stack([x.ravel(), y.ravel()])


def extravascular_distance(layout, grid):
    """Distance (in domain sides) from each grid node to the nearest segment."""
    return np.sqrt(point_segment_distances(_unit_nodes(grid), layout.segments, squared=True).min(axis=1))


def inlet_indicator(layout, grid):
    """1 at nodes within one grid spacing of an inlet, 0 elsewhere."""
    nodes = _unit_nodes(grid)
    h = 1.0 / (grid.nx - 1)
    d = np.sqrt(((nodes[:, None, :] - layout.inlets[None, :, :]) ** 2).sum(-1)).min(axis=1)
    return (d <= h * (1.0 + 1e-12)).astype(float)


def segment_cell_lengths(layout, grid):
    """Centreline length (metres) falling in each node's dual cell, flattened row-major."""
    nx, ny = grid.nx, grid.ny
    h = 1.0 / (nx - 1)
    side = grid.extent[0]
    out = np.zeros(grid.size)
    for x0, y0, x1, y1 in layout.segments:
        length = math.hypot(x1 - x0, y1 - y0)
        if length == 0.0:
            continue
        ts = [0.0, 1.0]
        for a, b, n in ((x0, x1, nx), (y0, y1, ny)):
            if a != b:
                lo, hi = min(a, b), max(a, b)
                k0 = math.ceil(lo / h - 0.5)
                k1 = math.floor(hi / h - 0.5)
                for k in range(max(k0, 0), min(k1, n - 2) + 1):
                    t = ((k + 0.5) * h - a) / (b - a)
                    if 0.0 < t < 1.0:
                        ts.append(t)
        ts = np.unique(ts)
        mids = 0.5 * (ts[1:] + ts[:-1])
        xm = x0 + mids * (x1 - x0)
        ym = y0 + mids * (y1 - y0)
        ix = np.clip(np.rint(xm / h).astype(int), 0, nx - 1)
        iy = np.clip(np.rint(ym / h).astype(int), 0, ny - 1)
        np.add.at(out, iy * nx + ix, np.diff(ts) * length * side)
    return out
