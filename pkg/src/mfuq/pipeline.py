"""End-to-end DL-MFMC campaigns, the plain Monte Carlo baseline and replication studies.

A campaign follows the budget-management policy: preliminary FOM samples,
surrogates trained on nested subsets to observe ``rho(n)`` and ``t(n)``,
trend fits, the optimal training size, a final surrogate, the FOM/ROM
sample allocation and the two-fidelity estimate. Every cost is charged to
a :class:`~mfuq.model.CostLedger` in declared units, so a report is a pure
function of the configuration and the master seed.
"""

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional, Protocol

import numpy as np

from .errors import (
    BudgetError,
    ConfigError,
    DegenerateVarianceError,
    DomainError,
    InsufficientDataError,
    PolicyInapplicableError,
)
from .estimators import (
    QoiSamplePair,
    dl_mfmc_confidence_interval,
    mc_fom_estimate,
    mfmc_mse_theoretical,
    mfmc_point_estimate,
)
from .model import CostLedger, FieldSolution, SnapshotSet
from .oxygen.qoi import QOI_NAMES
from .policy import (
    CostModel,
    TrendCoefficients,
    compute_policy,
    fit_correlation_trend,
    fit_training_time_trend,
    mse_upper_bound,
    optimal_training_size,
)
from .stats import RngStream, sample_correlation, sample_moments

__all__ = [
    "CampaignConfig",
    "CampaignReport",
    "Testbed",
    "make_testbed",
    "default_subset_sizes",
    "plan_campaign",
    "run_campaign",
    "run_mc_baseline",
    "replication_study",
    "fit_trends_from_snapshots",
    "write_report",
    "format_summary",
]

EXIT_OK = 0
EXIT_FALLBACK = 5


class Testbed(Protocol):
    """What a campaign needs from a concrete model pair."""

    name: str
    version: str
    min_training_size: int

    def sample(self, stream: RngStream, sample_id: int) -> Any: ...

    def solve(self, mu) -> Any: ...

    def qoi(self, output) -> float: ...

    def features(self, mu) -> Any: ...

    def train(self, samples, features, outputs) -> Any: ...


@dataclass
class CampaignConfig:
    budget: float
    g: float = 1.0
    w0: float = 100.0
    gamma: float = 0.99
    qoi: str = "avg_po2"
    n0: int = 60
    subset_sizes: tuple = ()
    pod_rank: int = 10
    xi: float = 0.75
    seed: int = 0
    train_cost_per_sample: float = 1.0
    train_cost_fixed: float = 20.0
    testbed: str = "oxygen"
    grid_n: int = 40
    synthetic: dict = field(default_factory=dict)
    force_lambda: Optional[float] = None
    workers: int = 1
    measure: bool = False
    out: Optional[str] = None

    def __post_init__(self):
        self.subset_sizes = tuple(int(n) for n in self.subset_sizes)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        if "budget" not in data:
            raise ConfigError("configuration must set 'budget'")
        try:
            cfg = cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self):
        d = asdict(self)
        d["subset_sizes"] = list(self.sizes)
        return d

    @property
    def sizes(self):
        return self.subset_sizes or default_subset_sizes(self.n0)

    @property
    def cost(self):
        return CostModel(g=self.g, w0=self.w0)

    def training_cost(self, n):
        return self.train_cost_per_sample * n + self.train_cost_fixed

    def validate(self):
        def fail(msg):
            raise ConfigError(msg)

        if not self.budget > 0:
            fail(f"budget must be positive, got {self.budget}")
        if not (self.g > 0 and self.w0 > 0):
            fail("costs g and w0 must be positive")
        if not 0 < self.gamma < 1:
            fail(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.qoi not in QOI_NAMES:
            fail(f"qoi must be one of {', '.join(QOI_NAMES)}, got {self.qoi!r}")
        if self.testbed not in ("oxygen", "synthetic"):
            fail(f"testbed must be 'oxygen' or 'synthetic', got {self.testbed!r}")
        if not 0 <= int(self.seed) < 2**64:
            fail("seed must be a 64-bit unsigned integer")
        if self.train_cost_per_sample < 0 or self.train_cost_fixed < 0:
            fail("training costs must be non-negative")
        if self.pod_rank < 1:
            fail("pod_rank must be >= 1")
        if not 0 <= self.xi <= 1:
            fail("xi must lie in [0, 1]")
        if self.workers < 1:
            fail("workers must be >= 1")
        if self.grid_n < 3:
            fail("grid_n must be >= 3")
        sizes = self.sizes
        if len(set(sizes)) < 3 or list(sizes) != sorted(set(sizes)) or sizes[0] < 2:
            fail(f"subset sizes must be >= 3 distinct increasing integers >= 2, got {list(sizes)}")
        if not sizes[-1] < self.n0:
            fail(f"largest subset size {sizes[-1]} must be below n0={self.n0} to leave a test set")
        if not self.budget > self.n0 * (self.g + self.w0):
            fail(f"budget {self.budget:g} does not exceed the preliminary cost n0*(g+w0)="
                 f"{self.n0 * (self.g + self.w0):g}")
        if self.testbed == "synthetic":
            from .synthetic import SyntheticTestbed

            allowed = {f.name for f in fields(SyntheticTestbed)} - {"name", "version"}
            bad = sorted(set(self.synthetic) - allowed)
            if bad:
                fail(f"unknown synthetic testbed keys: {', '.join(bad)}")


def default_subset_sizes(n0):
    """Six evenly spaced sizes on ``[0.2 n0, 0.67 n0]``."""
    return tuple(sorted({int(round(x)) for x in np.linspace(0.2 * n0, 0.67 * n0, 6)}))


def make_testbed(config):
    if config.testbed == "synthetic":
        from .synthetic import SyntheticTestbed

        return SyntheticTestbed(**config.synthetic)
    from .oxygen.testbed import OxygenTestbed

    return OxygenTestbed(qoi=config.qoi, grid_n=config.grid_n, pod_rank=config.pod_rank, xi=config.xi)


# -- report -------------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


@dataclass
class CampaignReport:
    kind: str
    config: dict
    status: str = "ok"
    exit_code: int = EXIT_OK
    records: list = field(default_factory=list)
    trend: Optional[dict] = None
    n_star: Optional[int] = None
    predicted_bound: Optional[float] = None
    rho_preliminary: Optional[float] = None
    policy: Optional[dict] = None
    estimate: Optional[dict] = None
    baseline: Optional[dict] = None
    ledger: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    samples: list = field(default_factory=list)  # (sample_id, fidelity, qoi) rows
    training: list = field(default_factory=list, repr=False)  # (mu, output) pairs

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("samples", "training")}
        return _plain(d)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def format_summary(report):
    """Aligned two-column text rendering of the main report fields."""
    rows = [("kind", report.kind), ("status", report.status), ("exit code", report.exit_code)]
    cfg = report.config
    rows += [("budget p", cfg.get("budget")), ("g / w0", f"{_fmt(cfg.get('g'))} / {_fmt(cfg.get('w0'))}"),
             ("qoi", cfg.get("qoi")), ("seed", cfg.get("seed"))]
    if report.trend:
        t = report.trend
        rows += [("zeta, c1, c2", ", ".join(_fmt(t[k]) for k in ("zeta", "c1", "c2"))),
                 ("c3, c4", ", ".join(_fmt(t[k]) for k in ("c3", "c4")))]
    for r in report.records:
        rows.append((f"rho(n={r['n']})", f"{_fmt(r['rho'])}  t={_fmt(r['t'])}"))
    if report.n_star is not None:
        rows.append(("n*", report.n_star))
    if report.predicted_bound is not None:
        rows.append(("MSE bound at n*", report.predicted_bound))
    if report.policy:
        p = report.policy
        rows += [("m0*, m1*", f"{p['m0_star']}, {p['m1_star']}"), ("r", p["r"]),
                 ("leftover budget", p["leftover_budget"])]
    if report.kind == "replication" and report.estimate:
        rows += [(k.replace("_", " "), v) for k, v in report.estimate.items()]
    for label, est in (("estimate", report.estimate), ("baseline", report.baseline)):
        if est and report.kind != "replication":
            rows += [(f"{label} method", est["method"]), (f"{label} point", est["point"]),
                     (f"{label} CI", f"[{_fmt(est['ci_low'])}, {_fmt(est['ci_high'])}]"),
                     (f"{label} half-width", est["half_width"])]
    if report.ledger:
        rows.append(("ledger total", report.ledger["total"]))
        for k, v in report.ledger["components"].items():
            rows.append((f"  {k}", v))
    for k, v in report.timings.items():
        rows.append((f"time {k} [s]", v))
    for note in report.notes:
        rows.append(("note", note))
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {_fmt(v)}" for k, v in rows) + "\n"


def write_report(report, out_dir):
    """Write ``report.json``, ``summary.txt`` and ``samples.csv`` into ``out_dir``."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(format_summary(report))
    with open(os.path.join(out_dir, "samples.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "fidelity", "qoi_value"])
        for sid, fid, q in report.samples:
            w.writerow([sid, fid, repr(float(q))])


# -- campaign internals -------------------------------------------------------------


class _Clock:
    def __init__(self, enabled):
        self.enabled = enabled
        self.timings = {}

    def phase(self, name):
        clock = self

        class _Ctx:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                if clock.enabled:
                    clock.timings[name] = clock.timings.get(name, 0.0) + time.perf_counter() - self.t

        return _Ctx()


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class _Sample:
    mu: Any
    features: Any
    output: Any
    qoi: float


def _draw_fom(testbed, stream, ids, ledger, config, phase):
    """Generate inputs and FOM solutions; costs are charged before any work."""
    for _ in ids:
        ledger.charge("generate", config.g, phase=phase)
        ledger.charge("fom", config.w0, phase=phase)

    def one(i):
        mu = testbed.sample(stream.child(str(i)), i)
        out = testbed.solve(mu)
        return _Sample(mu, testbed.features(mu), out, testbed.qoi(out))

    return _map(one, list(ids), config.workers)


def _surrogate_qois(testbed, surrogate, samples, ledger, phase):
    qs = []
    for s in samples:
        qs.append(testbed.qoi(surrogate.solve(s.mu, s.features)))
        ledger.charge("rom", 0.0, phase=phase)
    return np.array(qs)


def _train(testbed, samples, ledger, config, phase):
    ledger.charge("train", config.training_cost(len(samples)), phase=phase)
    return testbed.train([s.mu for s in samples], [s.features for s in samples],
                         [s.output for s in samples])


def _observe_trends(testbed, samples, ledger, config):
    """Step 3: surrogates on nested subsets, correlation on the shared test tail."""
    sizes = config.sizes
    test = samples[sizes[-1]:]
    fom_test = np.array([s.qoi for s in test])
    records = []
    for n in sizes:
        sur = _train(testbed, samples[:n], ledger, config, phase="preliminary-training")
        rom_test = _surrogate_qois(testbed, sur, test, ledger, phase="preliminary-training")
        try:
            rho = sample_correlation(fom_test, rom_test)
        except DegenerateVarianceError:
            rho = 0.0
        records.append({"n": n, "rho": float(rho), "t": config.training_cost(n)})
    return records


def _fit_trends(records):
    corr = fit_correlation_trend([(r["n"], r["rho"]) for r in records])
    c3, c4 = fit_training_time_trend([(r["n"], r["t"]) for r in records])
    coeffs = TrendCoefficients(zeta=corr.zeta, c1=corr.c1, c2=corr.c2, c3=c3, c4=c4)
    resid = [1.0 - r["rho"] ** 2 - coeffs.correlation_gap(r["n"]) for r in records]
    return coeffs, resid


def _preliminary(config, testbed, ledger, clock, root):
    with clock.phase("preliminary"):
        samples = _draw_fom(testbed, root.child("train"), range(config.n0), ledger, config,
                            phase="preliminary")
    with clock.phase("preliminary-training"):
        records = _observe_trends(testbed, samples, ledger, config)
    coeffs, resid = _fit_trends(records)
    sigma0 = sample_moments([s.qoi for s in samples]).std
    return samples, records, coeffs, resid, sigma0


def _planning_budget(config, records):
    """Budget left for the policy once preliminary training costs are sunk."""
    return config.budget - sum(r["t"] for r in records)


def _plan(config, testbed, coeffs, sigma0, records):
    p_eff = _planning_budget(config, records)
    n_min = max(config.n0, testbed.min_training_size)
    n_star = optimal_training_size(coeffs, p_eff, config.cost, sigma0, n_min=n_min)
    bound = mse_upper_bound(n_star, coeffs, p_eff, config.cost, sigma0)
    return n_star, bound, p_eff


def _base_report(kind, config, ledger, clock):
    return CampaignReport(kind=kind, config=config.to_dict(), ledger=ledger.to_dict(),
                          timings=dict(clock.timings))


def plan_campaign(config, testbed=None):
    """Steps 1-5: preliminary sampling, trend fits and the optimal training size."""
    testbed = testbed or make_testbed(config)
    ledger = CostLedger(config.budget)
    clock = _Clock(config.measure)
    root = RngStream(int(config.seed), "campaign")
    samples, records, coeffs, resid, sigma0 = _preliminary(config, testbed, ledger, clock, root)
    n_star, bound, _ = _plan(config, testbed, coeffs, sigma0, records)
    report = _base_report("plan", config, ledger, clock)
    report.records = records
    report.trend = {**coeffs.to_dict(), "residuals": resid, "sigma0_hat": sigma0}
    report.n_star = int(n_star)
    report.predicted_bound = bound
    return report


def _fallback(config, testbed, ledger, clock, root, fom_values, report, reason):
    """Plain Monte Carlo on every FOM value already paid for plus what the budget still buys."""
    extra = int(math.floor(ledger.remaining / (config.g + config.w0)))
    with clock.phase("fallback"):
        new = _draw_fom(testbed, root.child("fallback"), range(extra), ledger, config, phase="fallback")
    values = list(fom_values) + [s.qoi for s in new]
    if len(values) < 2:
        raise BudgetError("fallback Monte Carlo has fewer than two FOM samples", phase="fallback")
    est = mc_fom_estimate(values, config.gamma, cost_ledger=ledger.to_dict())
    report.status = "fallback"
    report.exit_code = EXIT_FALLBACK
    report.notes.append(f"fell back to MC-FOM: {reason}")
    report.estimate = est.to_dict()
    report.samples += [(f"fallback-{i}", "fom", s.qoi) for i, s in enumerate(new)]
    return report


def _final_sampling(config, testbed, surrogate, policy, ledger, stream, workers):
    """Step 9 inputs: ``m1`` fresh inputs, FOM on the first ``m0``."""
    m0, m1 = policy.m0_star, policy.m1_star
    for i in range(m1):
        ledger.charge("generate", config.g, phase="mfmc-sampling")
        if i < m0:
            ledger.charge("fom", config.w0, phase="mfmc-sampling")
        ledger.charge("rom", 0.0, phase="mfmc-sampling")

    def one(i):
        mu = testbed.sample(stream.child(str(i)), i)
        q1 = testbed.qoi(surrogate.solve(mu, testbed.features(mu)))
        q0 = testbed.qoi(testbed.solve(mu)) if i < m0 else None
        return q0, q1

    pairs = _map(one, range(m1), workers)
    fom = np.array([q0 for q0, _ in pairs[:m0]])
    rom = np.array([q1 for _, q1 in pairs])
    return fom, rom


def _prepare(config, testbed, ledger, clock, root, report):
    """Steps 2-8. Returns ``(training samples, surrogate, policy)``; policy is None on fallback."""
    samples, records, coeffs, resid, sigma0 = _preliminary(config, testbed, ledger, clock, root)
    report.records = records
    report.trend = {**coeffs.to_dict(), "residuals": resid, "sigma0_hat": sigma0}
    n_star, bound, p_eff = _plan(config, testbed, coeffs, sigma0, records)
    report.n_star = int(n_star)
    report.predicted_bound = bound

    extra = max(0, n_star - config.n0)
    with clock.phase("augment"):
        samples += _draw_fom(testbed, root.child("train"), range(config.n0, config.n0 + extra),
                             ledger, config, phase="augment")
    training = samples[:n_star]
    with clock.phase("final-training"):
        surrogate = _train(testbed, training, ledger, config, phase="final-training")
    fom_train = np.array([s.qoi for s in training])
    rom_train = _surrogate_qois(testbed, surrogate, training, ledger, phase="final-training")
    try:
        rho_pre = sample_correlation(fom_train, rom_train)
        sigma1 = sample_moments(rom_train).std
        sigma0_n = sample_moments(fom_train).std
    except (DegenerateVarianceError, InsufficientDataError) as exc:
        return samples, surrogate, None, f"degenerate preliminary statistics ({exc})"
    report.rho_preliminary = float(rho_pre)
    try:
        policy = compute_policy(n_star, rho_pre, sigma0_n, sigma1, p_eff, config.cost,
                                config.training_cost(n_star))
    except PolicyInapplicableError as exc:
        return samples, surrogate, None, str(exc)
    except DomainError as exc:
        return samples, surrogate, None, f"policy undefined ({exc})"
    report.policy = policy.to_dict()
    return samples, surrogate, policy, None


def run_campaign(config, testbed=None):
    """Full DL-MFMC campaign (steps 1-9) with MC-FOM fallback."""
    testbed = testbed or make_testbed(config)
    ledger = CostLedger(config.budget)
    clock = _Clock(config.measure)
    root = RngStream(int(config.seed), "campaign")
    report = CampaignReport(kind="dl-mfmc", config=config.to_dict())

    samples, surrogate, policy, reason = _prepare(config, testbed, ledger, clock, root, report)
    training_fom = [s.qoi for s in samples]
    report.samples += [(s.mu.id, "fom-train", s.qoi) for s in samples]
    report.training = [(s.mu, s.output) for s in samples]
    if policy is None:
        _fallback(config, testbed, ledger, clock, root, training_fom, report, reason)
    else:
        with clock.phase("mfmc-sampling"):
            fom, rom = _final_sampling(config, testbed, surrogate, policy, ledger,
                                       root.child("mfmc-sample"), config.workers)
        report.samples += [(f"mfmc-{i}", "fom", q) for i, q in enumerate(fom)]
        report.samples += [(f"mfmc-{i}", "rom", q) for i, q in enumerate(rom)]
        try:
            est = dl_mfmc_confidence_interval(QoiSamplePair(fom, rom), config.gamma,
                                              lam=config.force_lambda, cost_ledger=ledger.to_dict())
            report.estimate = est.to_dict()
        except (DegenerateVarianceError, ArithmeticError) as exc:
            _fallback(config, testbed, ledger, clock, root, training_fom + list(fom), report,
                      f"degenerate final sample ({exc})")
    report.ledger = ledger.to_dict()
    if report.estimate is not None:
        report.estimate["cost_ledger"] = report.ledger
    report.timings = dict(clock.timings)
    return report


def run_mc_baseline(config, testbed=None):
    """MC-FOM at the same declared budget: ``N = floor(p / (g + w0))`` samples."""
    testbed = testbed or make_testbed(config)
    n = int(math.floor(config.budget / (config.g + config.w0)))
    if n < 2:
        raise BudgetError(f"budget {config.budget:g} buys N={n} < 2 FOM samples", phase="baseline")
    ledger = CostLedger(config.budget)
    clock = _Clock(config.measure)
    root = RngStream(int(config.seed), "baseline")
    with clock.phase("baseline"):
        samples = _draw_fom(testbed, root.child("mc"), range(n), ledger, config, phase="baseline")
    values = [s.qoi for s in samples]
    est = mc_fom_estimate(values, config.gamma, cost_ledger=ledger.to_dict())
    report = _base_report("mc-fom", config, ledger, clock)
    report.estimate = est.to_dict()
    report.samples = [(s.mu.id, "fom", s.qoi) for s in samples]
    return report


def replication_study(config, replications, testbed=None, true_mean=None):
    """Plan and train once, then repeat the final sampling stage ``replications`` times.

    The MSE formula assumes a fixed coupling, so its check uses the estimate
    at ``lambda_theory`` (the testbed's exact optimum when it exposes its
    moments, pooled estimates otherwise, or the forced value) on the same
    draws. The plug-in estimate's variance and the interval coverage are
    reported alongside.
    """
    if replications < 100:
        raise DomainError(f"a replication study needs R >= 100, got {replications}")
    testbed = testbed or make_testbed(config)
    ledger = CostLedger(config.budget)
    clock = _Clock(config.measure)
    root = RngStream(int(config.seed), "campaign")
    report = CampaignReport(kind="replication", config=config.to_dict())
    _, surrogate, policy, reason = _prepare(config, testbed, ledger, clock, root, report)
    if policy is None:
        raise PolicyInapplicableError(f"replication study needs a valid policy: {reason}")
    if true_mean is None:
        true_mean = getattr(testbed, "mean0", None)

    plugin, covered, widths, mc_covered, mc_widths = [], [], [], [], []
    draws = []
    for r in range(replications):
        rep_ledger = CostLedger(config.budget)
        rep_ledger.components = dict(ledger.components)
        fom, rom = _final_sampling(config, testbed, surrogate, policy, rep_ledger,
                                   root.child(f"replicate/{r}"), 1)
        est = dl_mfmc_confidence_interval(QoiSamplePair(fom, rom), config.gamma, lam=config.force_lambda)
        mc = mc_fom_estimate(fom, config.gamma)
        plugin.append(est.point)
        widths.append(est.half_width)
        mc_widths.append(mc.half_width)
        if true_mean is not None:
            covered.append(est.contains(true_mean))
            mc_covered.append(mc.contains(true_mean))
        draws.append((fom, rom))

    if hasattr(testbed, "sigma0") and hasattr(surrogate, "rho") and not getattr(surrogate, "perfect", False):
        sigma0, sigma1, rho = testbed.sigma0, surrogate.sigma1, surrogate.rho
    else:
        f = np.concatenate([fom for fom, _ in draws])
        g_ = np.concatenate([rom[: len(fom)] for fom, rom in draws])
        sigma0, sigma1, rho = f.std(ddof=1), g_.std(ddof=1), sample_correlation(f, g_)
    lam = config.force_lambda if config.force_lambda is not None else rho * sigma0 / sigma1
    theory = mfmc_mse_theoretical(sigma0, sigma1, rho, lam, policy.m0_star, policy.m1_star)
    # the MSE formula holds for a fixed coupling, so it is checked on the same draws at lam
    fixed = [mfmc_point_estimate(QoiSamplePair(fom, rom), lam) for fom, rom in draws]
    report.estimate = {
        "replications": replications,
        "m0": policy.m0_star,
        "m1": policy.m1_star,
        "lambda_theory": lam,
        "mean_point": float(np.mean(plugin)),
        "empirical_variance": float(np.var(fixed, ddof=1)),
        "theoretical_mse": theory,
        "variance_ratio": float(np.var(fixed, ddof=1)) / theory,
        "plugin_variance": float(np.var(plugin, ddof=1)),
        "plugin_variance_ratio": float(np.var(plugin, ddof=1)) / theory,
        "coverage": float(np.mean(covered)) if covered else None,
        "mean_half_width": float(np.mean(widths)),
        "mc_fom_coverage": float(np.mean(mc_covered)) if mc_covered else None,
        "mc_fom_mean_half_width": float(np.mean(mc_widths)),
        "confidence_level": config.gamma,
    }
    report.ledger = ledger.to_dict()
    report.timings = dict(clock.timings)
    return report


def fit_trends_from_snapshots(config, snapshots, testbed=None):
    """Steps 2-4 on an existing snapshot set (first ``n0`` entries)."""
    testbed = testbed or make_testbed(config)
    if not isinstance(snapshots, SnapshotSet):
        raise DomainError("expected a SnapshotSet")
    if len(snapshots) < config.n0:
        raise InsufficientDataError(f"snapshot file holds {len(snapshots)} < n0={config.n0} entries")
    ledger = CostLedger(config.budget)
    clock = _Clock(config.measure)
    samples = []
    for mu, sol in snapshots.entries[: config.n0]:
        ledger.charge("generate", config.g, phase="preliminary")
        ledger.charge("fom", config.w0, phase="preliminary")
        samples.append(_Sample(mu, testbed.features(mu), sol, testbed.qoi(sol)))
    with clock.phase("preliminary-training"):
        records = _observe_trends(testbed, samples, ledger, config)
    coeffs, resid = _fit_trends(records)
    report = _base_report("fit-trends", config, ledger, clock)
    report.records = records
    report.trend = {**coeffs.to_dict(), "residuals": resid,
                    "sigma0_hat": sample_moments([s.qoi for s in samples]).std}
    return report

