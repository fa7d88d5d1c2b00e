"""POD surrogate: truncated basis, ridge coefficient map and a per-node closure.

The surrogate field is ``V @ coeff(features(mu)) + closure(d, eta)``. The
coefficient map is ridge regression on engineered features (physical
parameters, geometry summaries of the extravascular distance ``d`` and the
inlet indicator ``eta``, and their products). The closure is a per-node
linear function of a fixed lifting of ``(d, eta)`` fitted to the residual the
coefficient map leaves behind, with the coefficient map frozen.
"""

import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InsufficientDataError, SnapshotFormatError
from .model import FieldSolution, Grid, SnapshotSet
from .oxygen.network import extravascular_distance, inlet_indicator

__all__ = [
    "RankError",
    "PodBasis",
    "compute_pod_basis",
    "projection_error",
    "geometry_features",
    "physical_features",
    "feature_vector",
    "RidgeRegressor",
    "fit_ridge",
    "train_coefficient_regressor",
    "ClosureMap",
    "closure_loss",
    "closure_least_squares",
    "train_closure",
    "SurrogateModel",
    "train_surrogate",
    "rom_evaluate",
    "save_surrogate",
    "load_surrogate",
]

D_EDGES = np.array([0.0, 0.025, 0.05, 0.075, 0.1, 0.15, 0.2, 0.3, np.inf])
N_GEOMETRY = 13
CLOSURE_EPOCHS = 10


class RankError(DomainError):
    pass


@dataclass(frozen=True, eq=False)
class PodBasis:
    V: np.ndarray
    singular_values: np.ndarray

    @property
    def k(self):
        return self.V.shape[1]

    def project(self, u):
        return self.V.T @ u

    def lift(self, coeffs):
        return self.V @ coeffs


def _as_matrix(snapshots):
    if isinstance(snapshots, SnapshotSet):
        return snapshots.matrix()
    return np.atleast_2d(np.asarray(snapshots, dtype=float))


def compute_pod_basis(snapshots, k):
    """Leading ``k`` left singular vectors of the ``N_h x n`` snapshot matrix.

    Column signs are fixed so the largest-magnitude entry is positive.
    """
    U = _as_matrix(snapshots)
    n = U.shape[1]
    if not 1 <= k <= min(n, U.shape[0]):
        raise RankError(f"POD rank k={k} needs 1 <= k <= min(N_h, n)={min(n, U.shape[0])}")
    left, s, _ = np.linalg.svd(U, full_matrices=False)
    V = left[:, :k].copy()
    flip = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(k)])
    V *= np.where(flip == 0, 1.0, flip)
    return PodBasis(V=V, singular_values=s[:k].copy())


def projection_error(basis, snapshots):
    """Frobenius norm of ``U - V V^T U``."""
    U = _as_matrix(snapshots)
    return float(np.linalg.norm(U - basis.V @ (basis.V.T @ U)))


# -- features -----------------------------------------------------------------


def geometry_features(d, eta, grid):
    """13 summaries of ``(d, eta)``: 8 histogram fractions of ``d``, mean and
    max of ``d``, number of inlet nodes, inlet-node centroid ``(x, y)``."""
    d = np.asarray(d, dtype=float)
    eta = np.asarray(eta, dtype=float)
    hist = np.histogram(d, bins=D_EDGES)[0] / d.size
    x, y = grid.coordinates(unit=True)
    count = float(eta.sum())
    if count > 0:
        cx, cy = float(np.dot(eta, x.ravel()) / count), float(np.dot(eta, y.ravel()) / count)
    else:
        cx = cy = 0.5
    return np.concatenate([hist, [d.mean(), d.max(), count, cx, cy]])


def physical_features(physical, ranges):
    """Physical parameters mapped to [-1, 1] plus their squares and pairwise products."""
    lo = np.array([r[0] for r in ranges])
    hi = np.array([r[1] for r in ranges])
    z = 2.0 * (np.asarray(physical, dtype=float) - lo) / (hi - lo) - 1.0
    iu = np.triu_indices(z.size, 1)
    return np.concatenate([z, z**2, np.outer(z, z)[iu]])


def feature_vector(physical, d, eta, grid, ranges):
    """Physical block, geometry block and their outer-product interaction."""
    ph = physical_features(physical, ranges)
    geo = geometry_features(d, eta, grid)
    z = ph[: len(ranges)]
    return np.concatenate([ph, geo, np.outer(geo, z).ravel()])


# -- ridge regression -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RidgeRegressor:
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    weights: np.ndarray  # (n_features, n_outputs)
    alpha: float

    def predict(self, X):
        X = np.atleast_2d(X)
        return ((X - self.x_mean) / self.x_scale) @ self.weights + self.y_mean

    def parameters(self):
        return (self.x_mean, self.x_scale, self.y_mean, self.weights, np.array([self.alpha]))


ALPHA_GRID = np.geomspace(1e-10, 1e2, 49)


def fit_ridge(X, Y, alphas=None):
    """Ridge on standardized features with strength picked by leave-one-out error.

    Strengths are relative to the largest squared singular value of the
    standardized design. With fewer samples than features the smallest
    admissible strength is raised to ``1e-6`` so the fit stays well posed.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, p = X.shape
    if n < 1:
        raise InsufficientDataError("ridge regression needs at least one sample")
    x_mean, y_mean = X.mean(axis=0), Y.mean(axis=0)
    x_scale = X.std(axis=0)
    x_scale = np.where(x_scale > 1e-12 * np.maximum(np.abs(x_mean), 1.0), x_scale, 1.0)
    Xs = (X - x_mean) / x_scale
    Yc = Y - y_mean
    if n == 1 or not np.any(Xs):
        return RidgeRegressor(x_mean, x_scale, y_mean, np.zeros((p, Y.shape[1])), float("inf"))
    u, s, vt = np.linalg.svd(Xs, full_matrices=False)
    rel = ALPHA_GRID if alphas is None else np.asarray(alphas, dtype=float)
    if n <= p:
        rel = rel[rel >= 1e-6] if np.any(rel >= 1e-6) else rel[-1:]
    uty = u.T @ Yc
    best = None
    for a in rel * s[0] ** 2:
        f = s**2 / (s**2 + a)
        fitted = u @ (f[:, None] * uty)
        # hat diagonal of the centred fit; the intercept adds 1/n
        h = np.einsum("ij,j,ij->i", u, f, u) + 1.0 / n
        loo = (Yc - fitted) / np.maximum(1.0 - h, 1e-12)[:, None]
        score = float(np.sum(loo**2))
        if best is None or score < best[0] - 1e-15 * abs(best[0]):
            best = (score, a)
    a = best[1]
    W = vt.T @ ((s / (s**2 + a))[:, None] * uty)
    return RidgeRegressor(x_mean, x_scale, y_mean, W, float(a))


def train_coefficient_regressor(features, snapshots, basis):
    """Ridge map from per-sample feature rows to POD coefficients ``V^T u``."""
    U = _as_matrix(snapshots)
    targets = (basis.V.T @ U).T
    return fit_ridge(np.atleast_2d(features), targets)


# -- closure ------------------------------------------------------------------------


PROXIMITY_SCALES = (0.02, 0.05)


@dataclass(frozen=True, eq=False)
class ClosureMap:
    """Per-node linear map on a fixed lifting of ``(d, eta)``.

    The lifting is ``1, exp(-d/0.02), exp(-d/0.05), eta, eta * exp(-d/0.02)``
    with ``d`` in domain sides, so the closure can act near vessels without
    extrapolating in raw distance.
    """

    theta: np.ndarray  # (N_h, 5)

    @staticmethod
    def design(d, eta):
        d = np.asarray(d, dtype=float)
        eta = np.asarray(eta, dtype=float)
        near = [np.exp(-d / s) for s in PROXIMITY_SCALES]
        return np.stack([np.ones_like(d), *near, eta, eta * near[0]], axis=-1)

    def evaluate(self, d, eta):
        return np.einsum("...j,...j->...", self.design(d, eta), self.theta)

    @classmethod
    def zero(cls, n_nodes):
        return cls(np.zeros((n_nodes, 2 + len(PROXIMITY_SCALES) + 1)))


def closure_loss(residuals, outputs, xi):
    """Mean over samples of ``xi * rms(e) + (1 - xi) * max|e|`` with ``e = residual - output``."""
    e = np.asarray(residuals) - np.asarray(outputs)
    rms = np.sqrt(np.mean(e**2, axis=1))
    return float(np.mean(xi * rms + (1.0 - xi) * np.max(np.abs(e), axis=1)))


def _closure_subgradient(e, Phi, xi):
    n, nh = e.shape
    rms = np.sqrt(np.mean(e**2, axis=1))
    coef = xi * e / (nh * np.where(rms > 0, rms, 1.0))[:, None]
    # the whole infinity-norm subgradient goes to the first argmax node
    imax = np.argmax(np.abs(e), axis=1)
    coef[np.arange(n), imax] += (1.0 - xi) * np.sign(e[np.arange(n), imax])
    return -np.einsum("si,sij->ij", coef, Phi) / n


def closure_least_squares(residuals, Phi, shrink=1.0):
    """Pooled least-squares map plus per-node deviations shrunk towards it.

    Returns ``(theta, G)`` where ``G`` holds the regularized per-node Gram
    matrices used as the preconditioner.
    """
    n, nh, m = Phi.shape
    A = np.einsum("sij,sik->jk", Phi, Phi)
    b = np.einsum("sij,si->j", Phi, residuals)
    pooled = np.linalg.solve(A + 1e-12 * np.trace(A) * np.eye(m), b)
    G = np.einsum("sij,sik->ijk", Phi, Phi) / n
    G = G + shrink * np.einsum("ijj->ij", G)[:, :, None] * np.eye(m) + 1e-14 * np.eye(m)
    bi = np.einsum("sij,si->ij", Phi, residuals) / n
    rhs = bi - np.einsum("sij,sik,k->ij", Phi, Phi, pooled) / n
    theta = pooled + np.linalg.solve(G, rhs[..., None])[..., 0]
    return theta, G


def train_closure(residuals, d, eta, xi, epochs=CLOSURE_EPOCHS, shrink=1.0):
    """Fit the closure on residual fields (rows are samples).

    Starts from :func:`closure_least_squares`, then runs ``epochs``
    full-batch preconditioned subgradient steps on the mixed loss with a
    backtracking step size. The returned map is the best iterate seen, the
    zero map included, so its loss never exceeds the zero-closure loss.
    """
    if not 0.0 <= xi <= 1.0:
        raise DomainError(f"xi must lie in [0, 1], got {xi}")
    R = np.atleast_2d(np.asarray(residuals, dtype=float))
    Phi = ClosureMap.design(d, eta)
    nh, m = R.shape[1], Phi.shape[-1]
    theta_ls, G = closure_least_squares(R, Phi, shrink)

    def outputs(theta):
        return np.einsum("sij,ij->si", Phi, theta)

    zero = np.zeros((nh, m))
    candidates = [(closure_loss(R, 0.0, xi), zero), (closure_loss(R, outputs(theta_ls), xi), theta_ls)]
    theta, current = theta_ls, candidates[-1][0]
    scale = max(float(np.max(np.abs(R))), 1e-300)
    for _ in range(epochs):
        grad = _closure_subgradient(R - outputs(theta), Phi, xi)
        direction = np.linalg.solve(G, grad[..., None])[..., 0]
        t = scale / max(float(np.max(np.abs(outputs(direction)))), 1e-300)
        for _ in range(30):
            trial = theta - t * direction
            value = closure_loss(R, outputs(trial), xi)
            if value < current:
                theta, current = trial, value
                candidates.append((value, trial))
                break
            t *= 0.5
        else:
            break
    best = min(candidates, key=lambda c: c[0])[1]
    return ClosureMap(np.array(best))


# -- surrogate ----------------------------------------------------------------------


@dataclass(eq=False)
class SurrogateModel:
    basis: PodBasis
    coeff_regressor: RidgeRegressor
    closure_regressor: ClosureMap
    xi: float
    trained_on: int
    grid: Grid
    ranges: tuple
    training_cost: float = 0.0
    training_seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    def check_inputs(self, physical):
        for v, (lo, hi) in zip(physical, self.ranges):
            if not lo <= v <= hi:
                raise DomainError(f"parameter {v:g} outside training range [{lo:g}, {hi:g}]")

    def evaluate_descriptors(self, physical, d, eta):
        self.check_inputs(physical)
        x = feature_vector(physical, d, eta, self.grid, self.ranges)
        coeffs = self.coeff_regressor.predict(x)[0]
        return self.basis.lift(coeffs) + self.closure_regressor.evaluate(d, eta)


def train_surrogate(physical, d, eta, fields, grid, ranges, k=10, xi=0.75, training_cost=0.0,
                    closure=True):
    """Fit basis, coefficient map and closure on ``n`` samples.

    ``physical`` is ``(n, 3)``, ``d``/``eta``/``fields`` are ``(n, N_h)``.
    """
    start = time.perf_counter()
    fields = np.atleast_2d(np.asarray(fields, dtype=float))
    n = fields.shape[0]
    U = fields.T
    basis = compute_pod_basis(U, min(k, n))
    X = np.array([feature_vector(p, di, ei, grid, ranges) for p, di, ei in zip(physical, d, eta)])
    reg = train_coefficient_regressor(X, U, basis)
    if closure:
        resid = fields - (basis.V @ reg.predict(X).T).T
        clos = train_closure(resid, np.asarray(d), np.asarray(eta), xi)
    else:
        clos = ClosureMap.zero(grid.size)
    return SurrogateModel(
        basis=basis,
        coeff_regressor=reg,
        closure_regressor=clos,
        xi=float(xi),
        trained_on=n,
        grid=grid,
        ranges=tuple(tuple(float(v) for v in r) for r in ranges),
        training_cost=float(training_cost),
        training_seconds=time.perf_counter() - start,
    )


def rom_evaluate(model, mu, ledger=None, phase=None):
    """Surrogate field for a sample whose descriptor carries ``d`` and ``eta``.

    ``mu.network_descriptor`` may be a layout (``d``/``eta`` computed here)
    or a ``(d, eta)`` pair. Surrogate evaluations are charged at zero cost.
    """
    desc = mu.network_descriptor
    if isinstance(desc, tuple):
        d, eta = desc
    else:
        d, eta = extravascular_distance(desc, model.grid), inlet_indicator(desc, model.grid)
    values = model.evaluate_descriptors(mu.physical, d, eta)
    if ledger is not None:
        ledger.charge("rom", 0.0, phase=phase)
    return FieldSolution(values, model.grid)


# -- serialization ------------------------------------------------------------------

ROM_MAGIC = b"MFUQROM\x00"
ROM_VERSION = 1
_ROM_HEADER = struct.Struct("<8sII")


def _write_array(fh, name, arr):
    arr = np.asarray(arr, dtype="<f8")
    raw = name.encode()
    fh.write(struct.pack("<I", len(raw)) + raw)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes())


def save_surrogate(model, path):
    meta = {
        "xi": model.xi,
        "trained_on": model.trained_on,
        "grid": [model.grid.nx, model.grid.ny, model.grid.spacing],
        "ranges": [list(r) for r in model.ranges],
        "training_cost": model.training_cost,
        "alpha": model.coeff_regressor.alpha,
        "meta": model.meta,
    }
    arrays = {
        "V": model.basis.V,
        "singular_values": model.basis.singular_values,
        "x_mean": model.coeff_regressor.x_mean,
        "x_scale": model.coeff_regressor.x_scale,
        "y_mean": model.coeff_regressor.y_mean,
        "weights": model.coeff_regressor.weights,
        "theta": model.closure_regressor.theta,
    }
    raw_meta = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_ROM_HEADER.pack(ROM_MAGIC, ROM_VERSION, len(arrays)))
        fh.write(struct.pack("<I", len(raw_meta)) + raw_meta)
        for name, arr in arrays.items():
            _write_array(fh, name, arr)


def load_surrogate(path):
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise SnapshotFormatError(f"{path}: truncated surrogate file")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    magic, version, count = _ROM_HEADER.unpack(take(_ROM_HEADER.size))
    if magic != ROM_MAGIC:
        raise SnapshotFormatError(f"{path}: not a surrogate file (magic {magic!r})")
    if version != ROM_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported surrogate format version {version}")
    meta = json.loads(take(struct.unpack("<I", take(4))[0]).decode())
    arrays = {}
    for _ in range(count):
        name = take(struct.unpack("<I", take(4))[0]).decode()
        ndim = struct.unpack("<I", take(4))[0]
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(take(8 * size), dtype="<f8").astype(float).reshape(shape)
    if pos != len(data):
        raise SnapshotFormatError(f"{path}: trailing bytes after surrogate payload")
    nx, ny, h = meta["grid"]
    return SurrogateModel(
        basis=PodBasis(arrays["V"], arrays["singular_values"]),
        coeff_regressor=RidgeRegressor(arrays["x_mean"], arrays["x_scale"], arrays["y_mean"],
                                       arrays["weights"], float(meta["alpha"])),
        closure_regressor=ClosureMap(arrays["theta"]),
        xi=float(meta["xi"]),
        trained_on=int(meta["trained_on"]),
        grid=Grid(int(nx), int(ny), float(h)),
        ranges=tuple(tuple(r) for r in meta["ranges"]),
        training_cost=float(meta["training_cost"]),
        meta=dict(meta["meta"]),
    )
