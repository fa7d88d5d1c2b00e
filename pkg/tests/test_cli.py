import json
import subprocess
import sys

import pytest

from mfuq.cli import main


def write_config(tmp_path, **kw):
    data = dict(budget=1e4, testbed="synthetic", n0=40)
    data.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--config", write_config(tmp_path), "--seed", "7", "--out", str(out)])
    assert code == 0
    assert "DL-MFMC" in capsys.readouterr().out
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["seed"] == 7 and report["exit_code"] == 0
    assert (out / "summary.txt").exists() and (out / "samples.csv").exists()


def test_overrides_take_precedence(tmp_path):
    out = tmp_path / "out"
    main(["plan", "--config", write_config(tmp_path, gamma=0.9), "--budget", "20000", "--gamma", "0.95",
          "--out", str(out)])
    cfg = json.loads((out / "report.json").read_text())["config"]
    assert cfg["budget"] == 20000 and cfg["gamma"] == 0.95


def test_plan_prints_n_star(tmp_path, capsys):
    assert main(["plan", "--config", write_config(tmp_path)]) == 0
    assert "n*" in capsys.readouterr().out


def test_baseline(tmp_path, capsys):
    assert main(["baseline", "--config", write_config(tmp_path)]) == 0
    assert "MC-FOM" in capsys.readouterr().out


def test_replicate(tmp_path, capsys):
    code = main(["replicate", "--config", write_config(tmp_path, budget=6000, n0=30), "--replications", "100"])
    assert code == 0
    assert "coverage" in capsys.readouterr().out


@pytest.mark.parametrize("args, code", [
    (["run", "--config", "{cfg}", "--gamma", "1.5"], 2),
    (["run", "--config", "{missing}"], 2),
    (["plan"], 2),
    (["run", "--config", "{cfg}", "--qoi", "max_po2"], 2),
    (["replicate", "--config", "{cfg}", "--replications", "10"], 2),
    (["fit-trends", "--config", "{cfg}", "{missing}"], 2),
])
def test_error_exit_codes(tmp_path, capsys, args, code):
    subs = {"cfg": write_config(tmp_path), "missing": str(tmp_path / "nope")}
    assert main([a.format(**subs) for a in args]) == code
    assert "mfuq: error" in capsys.readouterr().err


def test_budget_exit_code(tmp_path):
    # a flat correlation law and a steep training cost leave nothing to plan with
    cfg = write_config(tmp_path, budget=4200, train_cost_fixed=100)
    assert main(["run", "--config", cfg]) == 3


def test_fallback_exit_code(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, synthetic={"perfect": True})
    assert main(["run", "--config", cfg, "--out", str(out)]) == 5
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "fallback" and report["estimate"]["method"] == "MC-FOM"


def test_save_snapshots_then_fit_trends(tmp_path, capsys):
    cfg = write_config(tmp_path, testbed="oxygen", budget=2500, n0=16, grid_n=12, pod_rank=3,
                       subset_sizes=[5, 7, 9, 11])
    snaps = tmp_path / "snaps.bin"
    main(["run", "--config", cfg, "--seed", "3", "--save-snapshots", str(snaps), "--out", str(tmp_path / "a")])
    assert snaps.exists()
    assert main(["fit-trends", "--config", cfg, str(snaps), "--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert [r["rho"] for r in a["records"]] == pytest.approx([r["rho"] for r in b["records"]], abs=1e-12)


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "mfuq.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("plan", "run", "baseline", "replicate", "fit-trends"):
        assert sub in res.stdout
