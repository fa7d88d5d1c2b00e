import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfuq.errors import BudgetError, ConfigError, DomainError, InsufficientDataError
from mfuq.model import SnapshotSet
from mfuq.pipeline import (
    CampaignConfig,
    default_subset_sizes,
    fit_trends_from_snapshots,
    format_summary,
    plan_campaign,
    replication_study,
    run_campaign,
    run_mc_baseline,
    write_report,
)
from mfuq.stats import normal_quantile, t_quantile
from mfuq.synthetic import SyntheticTestbed


def synthetic(**kw):
    base = dict(budget=1e4, testbed="synthetic", n0=40)
    base.update(kw)
    return CampaignConfig.from_dict(base)


def committed(report, cfg):
    pol = report["policy"] if isinstance(report, dict) else report.policy
    n = pol["n_star"]
    return n * (cfg.g + cfg.w0) + cfg.training_cost(n) + pol["m0_star"] * cfg.w0 + pol["m1_star"] * cfg.g


# -- configuration ----------------------------------------------------------------


@pytest.mark.parametrize("data, match", [
    ({"budget": 1e4, "colour": 1}, "unknown"),
    ({"n0": 40}, "budget"),
    ({"budget": 1e4, "gamma": 1.0}, "gamma"),
    ({"budget": 1e4, "qoi": "max_po2"}, "qoi"),
    ({"budget": 1e4, "n0": 40, "subset_sizes": [10, 20, 40]}, "below n0"),
    ({"budget": 1e4, "n0": 40, "subset_sizes": [10, 10, 20]}, "distinct"),
    ({"budget": 4040, "n0": 40}, "preliminary cost"),
    ({"budget": 1e4, "testbed": "lattice"}, "testbed"),
    ({"budget": 1e4, "seed": -1}, "seed"),
    ({"budget": 1e4, "testbed": "synthetic", "synthetic": {"kappa": 1}}, "synthetic"),
    ({"budget": 1e4, "xi": 1.5}, "xi"),
])
def test_config_errors(data, match):
    with pytest.raises(ConfigError, match=match):
        CampaignConfig.from_dict(data)


def test_config_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        CampaignConfig.from_json(path)
    with pytest.raises(ConfigError):
        CampaignConfig.from_json(tmp_path / "missing.json")
    cfg = synthetic(seed=5)
    path.write_text(json.dumps(cfg.to_dict()))
    assert CampaignConfig.from_json(path).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("n0", [20, 60, 300])
def test_default_subset_sizes(n0):
    sizes = default_subset_sizes(n0)
    assert len(sizes) == 6 and list(sizes) == sorted(set(sizes))
    assert sizes[0] >= round(0.2 * n0) and sizes[-1] <= math.ceil(0.67 * n0) < n0
    assert default_subset_sizes(300) == (60, 88, 116, 145, 173, 201)


# -- campaign ---------------------------------------------------------------------


def test_campaign_deterministic():
    cfg = synthetic(seed=42)
    a, b = run_campaign(cfg), run_campaign(cfg)
    assert a.to_json() == b.to_json()
    assert a.samples == b.samples
    assert run_campaign(synthetic(seed=43)).to_json() != a.to_json()


def test_campaign_workers_do_not_change_results():
    a = run_campaign(synthetic(seed=3))
    b = run_campaign(synthetic(seed=3, workers=4))
    assert a.estimate == b.estimate and a.samples == b.samples


def test_campaign_report_structure():
    cfg = synthetic(seed=1)
    rep = run_campaign(cfg)
    assert rep.status == "ok" and rep.exit_code == 0
    assert rep.estimate["method"] == "DL-MFMC"
    assert len(rep.records) == len(cfg.sizes)
    assert rep.ledger["total"] <= cfg.budget
    # preliminary training at n_1..n_k is charged on top of the planned spend
    preliminary_training = sum(r["t"] for r in rep.records)
    assert rep.ledger["total"] == pytest.approx(committed(rep, cfg) + preliminary_training)
    assert rep.policy["n_star"] == rep.n_star >= cfg.n0
    # step 8 uses a fresh stream, so no final input repeats a training input
    assert rep.estimate["ci_low"] <= rep.estimate["point"] <= rep.estimate["ci_high"]


@settings(max_examples=15, deadline=None)
@given(budget=st.floats(5e3, 6e4), n0=st.integers(12, 60), w0=st.floats(20, 300), seed=st.integers(0, 2**64 - 1),
       zeta=st.floats(0.3, 2), c1=st.floats(0, 2), c2=st.floats(0.001, 0.1))
def test_campaign_ledger_within_budget(budget, n0, w0, seed, zeta, c1, c2):
    try:
        cfg = synthetic(budget=budget, n0=n0, w0=w0, seed=seed, synthetic=dict(zeta=zeta, c1=c1, c2=c2))
    except ConfigError:
        return
    try:
        rep = run_campaign(cfg)
    except BudgetError as exc:
        assert exc.phase
        return
    assert rep.ledger["total"] <= cfg.budget * (1 + 1e-12)
    assert rep.exit_code in (0, 5)
    if rep.exit_code == 0:
        assert committed(rep, cfg) + sum(r["t"] for r in rep.records) <= cfg.budget * (1 + 1e-12)


def test_perfect_surrogate_falls_back():
    cfg = synthetic(synthetic={"perfect": True}, seed=2)
    rep = run_campaign(cfg)
    assert rep.status == "fallback" and rep.exit_code == 5
    assert rep.estimate["method"] == "MC-FOM" and rep.estimate["ci_low"] <= rep.estimate["ci_high"]
    assert rep.ledger["total"] <= cfg.budget
    assert rep.notes


def test_policy_grows_with_budget():
    m0, m1 = [], []
    for p in (1e4, 2e4, 4e4, 8e4):
        rep = run_campaign(synthetic(budget=p, seed=0))
        m0.append(rep.policy["m0_star"])
        m1.append(rep.policy["m1_star"])
    assert m0 == sorted(m0) and m1 == sorted(m1)


def test_plan_only_charges_preliminary():
    cfg = synthetic(seed=9)
    rep = plan_campaign(cfg)
    assert rep.n_star >= cfg.n0 and rep.predicted_bound > 0
    assert set(rep.ledger["phases"]) <= {"preliminary", "preliminary-training"}
    assert rep.policy is None and rep.estimate is None


# -- baseline -----------------------------------------------------------------------


def test_baseline_flooring():
    cfg = synthetic(budget=100 * 101 + 50)
    rep = run_mc_baseline(cfg)
    assert rep.ledger["counts"]["fom"] == 100 and rep.ledger["total"] == 100 * 101


def test_baseline_constant_qoi():
    rep = run_mc_baseline(synthetic(synthetic={"sigma0": 0.0, "mean0": 2.5}))
    assert rep.estimate["point"] == 2.5 and rep.estimate["ci_low"] == rep.estimate["ci_high"] == 2.5


def test_baseline_budget_error():
    cfg = synthetic()
    cfg.budget = 150.0
    with pytest.raises(BudgetError) as exc:
        run_mc_baseline(cfg)
    assert exc.value.phase == "baseline"


def test_baseline_coverage():
    hits = 0
    for seed in range(400):
        rep = run_mc_baseline(synthetic(budget=3000, n0=10, seed=seed))
        hits += rep.estimate["ci_low"] <= 1.0 <= rep.estimate["ci_high"]
    assert abs(hits / 400 - 0.99) <= 0.02


# -- replication study ------------------------------------------------------------


def replication_config(**kw):
    # cheap FOM and a moderate correlation keep m0 large enough for the asymptotic interval
    return synthetic(budget=4000, n0=30, w0=20, seed=4, synthetic={"c2": 0.05}, **kw)


def test_replication_study_matches_theory():
    est = replication_study(replication_config(), 1000).estimate
    assert est["variance_ratio"] == pytest.approx(1.0, abs=0.1)
    assert 0.975 <= est["coverage"] <= 0.999
    assert abs(est["mean_point"] - 1.0) < 4 * math.sqrt(est["plugin_variance"] / 1000)
    # estimating the coupling from m0 pairs can only add variance
    assert est["plugin_variance_ratio"] >= est["variance_ratio"] * 0.9


def test_replication_study_lambda_zero_is_mc():
    est = replication_study(replication_config(force_lambda=0.0), 300).estimate
    # same sample variance; only the normal and t quantiles differ
    quantiles = normal_quantile(0.005) / t_quantile(0.005, est["m0"])
    assert est["mean_half_width"] == pytest.approx(est["mc_fom_mean_half_width"] * quantiles, rel=1e-9)
    assert abs(est["coverage"] - est["mc_fom_coverage"]) <= 0.03
    assert est["variance_ratio"] == pytest.approx(1.0, abs=0.2)


def test_replication_study_needs_100():
    with pytest.raises(DomainError):
        replication_study(synthetic(), 50)


# -- outputs ----------------------------------------------------------------------


def test_write_report(tmp_path):
    rep = run_campaign(synthetic(seed=6))
    write_report(rep, tmp_path / "out")
    data = json.loads((tmp_path / "out" / "report.json").read_text())
    assert data["estimate"]["point"] == rep.estimate["point"]
    assert data["config"]["seed"] == 6
    summary = (tmp_path / "out" / "summary.txt").read_text()
    assert summary == format_summary(rep) and "DL-MFMC" in summary
    rows = list(csv.reader(open(tmp_path / "out" / "samples.csv")))
    assert rows[0] == ["sample_id", "fidelity", "qoi_value"]
    assert len(rows) - 1 == len(rep.samples)
    assert {r[1] for r in rows[1:]} == {"fom-train", "fom", "rom"}


# -- snapshots --------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_oxygen_run():
    cfg = CampaignConfig.from_dict(dict(budget=2500, n0=16, grid_n=12, pod_rank=3, seed=3,
                                        subset_sizes=[5, 7, 9, 11]))
    return cfg, run_campaign(cfg)


def test_oxygen_small_campaign(small_oxygen_run):
    cfg, rep = small_oxygen_run
    assert rep.exit_code in (0, 5)
    assert rep.ledger["total"] <= cfg.budget
    assert len(rep.training) >= cfg.n0


def test_fit_trends_from_snapshots(small_oxygen_run):
    cfg, rep = small_oxygen_run
    snaps = SnapshotSet(rep.training, seed=cfg.seed, solver_version="test")
    fitted = fit_trends_from_snapshots(cfg, snaps)
    assert [r["n"] for r in fitted.records] == [r["n"] for r in rep.records]
    for a, b in zip(fitted.records, rep.records):
        assert a["rho"] == pytest.approx(b["rho"], abs=1e-12)
    with pytest.raises(InsufficientDataError):
        fit_trends_from_snapshots(cfg, SnapshotSet(rep.training[:5]))
    with pytest.raises(DomainError):
        fit_trends_from_snapshots(cfg, rep.training)


def test_synthetic_rho_law():
    tb = SyntheticTestbed(c1=1.0, c2=0.0, zeta=1.0)
    assert tb.rho_at(4) == pytest.approx(np.sqrt(0.75))
    assert SyntheticTestbed(perfect=True).rho_at(3) == 1.0
