import io
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from locasso import fixtures
from locasso.cli import main
from locasso.io import read_csv, write_csv
from locasso.simulation import generate

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def fixture_csv(tmp_path_factory):
    data, _ = generate(fixtures.selection_spec(n=4000))
    path = tmp_path_factory.mktemp("data") / "fixture.csv"
    write_csv(data, path)
    return path


def test_select_fixture(fixture_csv):
    before = fixture_csv.read_bytes()
    code, out, _ = run("select", "--data", str(fixture_csv), "--x", "0", "--strict",
                       "--constants-file", str(CONFIGS / "constants_d10.json"))
    assert code == 0
    res = json.loads(out)
    assert res["selected"] == [1, 2] and res["compliant"] is True
    assert res["kkt_residual"] <= 1e-8
    assert fixture_csv.read_bytes() == before


def test_select_strict_bad_bandwidth(fixture_csv):
    code, _, err = run("select", "--data", str(fixture_csv), "--x", "0", "--strict",
                       "--h", "1.5", "--constants-file", str(CONFIGS / "constants_d10.json"))
    assert code == 1
    assert "h < min(mu_m/(32 (d0+1) L_mu M_K), eta)" in err


def test_select_explicit_parameters_csv_output(fixture_csv):
    code, out, _ = run("--format", "csv", "select", "--data", str(fixture_csv), "--x", "0",
                       "--h", "0.9", "--lambda", "1e-4", "--procedure", "plain")
    assert code == 0
    header, row = out.strip().splitlines()
    assert header.startswith("selected,theta")
    assert "compliant" in header


def test_select_trace(fixture_csv, tmp_path):
    trace = tmp_path / "trace.csv"
    code, _, _ = run("select", "--data", str(fixture_csv), "--x", "0", "--h", "0.9",
                     "--lambda", "1e-4", "--procedure", "plain", "--trace", str(trace))
    assert code == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == "sweep,objective,kkt_residual" and len(lines) >= 2
    objs = [float(l.split(",")[1]) for l in lines[1:]]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(objs, objs[1:]))


def test_select_non_convergence_exit_2(fixture_csv):
    code, out, err = run("select", "--data", str(fixture_csv), "--x", "0", "--h", "0.9",
                         "--lambda", "1e-4", "--procedure", "plain", "--max-iter", "1",
                         "--kkt-tol", "0")
    assert code == 2 and "did not converge" in err
    assert json.loads(out)["converged"] is False


def test_strict_without_constants_is_usage_error(fixture_csv):
    code, _, err = run("select", "--data", str(fixture_csv), "--x", "0", "--strict")
    assert code == 1 and "constants-file" in err


def test_missing_constant_named(fixture_csv, tmp_path):
    raw = json.loads((CONFIGS / "constants_d10.json").read_text())
    del raw["mu_m"]
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps(raw))
    code, _, err = run("select", "--data", str(fixture_csv), "--x", "0", "--strict",
                       "--constants-file", str(bad))
    assert code == 1 and "mu_m" in err


def test_empty_csv(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    code, _, err = run("select", "--data", str(p), "--x", "0", "--h", "0.5", "--lambda", "1",
                       "--procedure", "plain")
    assert code == 1 and "no data rows" in err


def test_malformed_row_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x1,y\n0.1,1\n0.2,abc\n")
    code, _, err = run("select", "--data", str(p), "--x", "0", "--h", "0.5", "--lambda", "1",
                       "--procedure", "plain")
    assert code == 1 and "line 3" in err
    p.write_text("0.1,1\n0.2\n")
    assert run("select", "--data", str(p), "--x", "0", "--h", "0.5", "--lambda", "1",
               "--procedure", "plain")[0] == 1


def test_headerless_csv_and_npy(tmp_path):
    rng = np.random.default_rng(0)
    arr = np.column_stack([rng.uniform(-1, 1, (50, 2)), rng.normal(size=50)])
    np.savetxt(tmp_path / "d.csv", arr, delimiter=",")
    np.save(tmp_path / "d.npy", arr)
    a = read_csv(tmp_path / "d.csv")
    assert a.n == 50 and a.d == 2
    args = ["--x", "0,0", "--h", "0.8", "--lambda", "0.01", "--procedure", "plain"]
    c1, o1, _ = run("select", "--data", str(tmp_path / "d.csv"), *args)
    c2, o2, _ = run("select", "--data", str(tmp_path / "d.npy"), *args)
    assert c1 == c2 == 0
    assert json.loads(o1)["theta"] == pytest.approx(json.loads(o2)["theta"], abs=1e-15)


def test_bad_npy_shape(tmp_path):
    np.save(tmp_path / "v.npy", np.zeros(5))
    assert run("select", "--data", str(tmp_path / "v.npy"), "--x", "0", "--h", "1",
               "--lambda", "1", "--procedure", "plain")[0] == 1


def test_estimate_auto_select(fixture_csv):
    code, out, _ = run("estimate", "--data", str(fixture_csv), "--x", "0", "--fmax", "1",
                       "--auto-select", "--strict",
                       "--constants-file", str(CONFIGS / "constants_d10.json"))
    assert code == 0
    res = json.loads(out)
    assert res["selected"] == [1, 2] and res["unique"] is True
    assert abs(res["fhat"]) <= 1.0 and res["fhat"] == pytest.approx(0.5, abs=1e-6)


def test_estimate_empty_selection_is_mean(tmp_path):
    rng = np.random.default_rng(1)
    arr = np.column_stack([rng.uniform(-1, 1, (40, 3)), rng.normal(size=40)])
    np.save(tmp_path / "d.npy", arr)
    code, out, _ = run("estimate", "--data", str(tmp_path / "d.npy"), "--x", "0",
                       "--fmax", "10", "--selected", "")
    assert code == 0
    res = json.loads(out)
    assert res["selected"] == [] and res["unique"] is True
    assert res["fhat"] == pytest.approx(arr[:, -1].mean(), abs=1e-12)


def test_estimate_clamped(tmp_path):
    arr = np.column_stack([np.linspace(-1, 1, 30), np.full(30, 7.0)])
    np.save(tmp_path / "d.npy", arr)
    code, out, _ = run("estimate", "--data", str(tmp_path / "d.npy"), "--x", "0",
                       "--fmax", "2", "--selected", "1")
    assert code == 0 and json.loads(out)["fhat"] == 2.0


def test_estimate_unreadable_file(tmp_path):
    code, _, err = run("estimate", "--data", str(tmp_path / "missing.csv"), "--x", "0",
                       "--fmax", "1", "--selected", "1")
    assert code == 1 and "error" in err


def test_estimate_needs_selection_mode(fixture_csv):
    assert run("estimate", "--data", str(fixture_csv), "--x", "0", "--fmax", "1")[0] == 1
    assert run("estimate", "--data", str(fixture_csv), "--x", "0", "--fmax", "1",
               "--selected", "11")[0] == 1


def _small_rate_config(tmp_path, **overrides):
    cfg = json.loads((CONFIGS / "rate_headline.json").read_text())
    cfg.update(replicates=10, n_grid=[250, 500, 1000])
    cfg.update(overrides)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_experiment_rate(tmp_path):
    cfg = _small_rate_config(tmp_path)
    code, out, err = run("--seed", "5", "--jobs", "2", "--out", str(tmp_path / "o"),
                         "experiment", "--config", str(cfg))
    assert code == 0, err
    brief = json.loads(out)
    assert "rate_slope" in brief and brief["seed"] == 5
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert "rate_slope" in summary and summary["compliance"]["penalty_rule"]["passed"]
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["seed"] == 5 and "finished_at" in manifest
    first = (tmp_path / "o" / "replicates.csv").read_text().splitlines()[0]
    assert first.startswith("# manifest=manifest.json")


def test_experiment_deterministic(tmp_path):
    cfg = _small_rate_config(tmp_path)
    outs = []
    for i, jobs in enumerate(("1", "3")):
        d = tmp_path / f"run{i}"
        assert run("--seed", "11", "--jobs", jobs, "--out", str(d), "experiment",
                   "--config", str(cfg))[0] == 0
        outs.append((d / "replicates.csv").read_bytes())
    assert outs[0] == outs[1]


def test_experiment_zero_replicates(tmp_path):
    cfg = _small_rate_config(tmp_path, replicates=0)
    code, _, err = run("--seed", "1", "--out", str(tmp_path / "o"), "experiment",
                       "--config", str(cfg))
    assert code == 1 and "replicates" in err


def test_experiment_schema_error_names_key(tmp_path):
    cfg = json.loads((CONFIGS / "selection_noiseless.json").read_text())
    cfg["generator"]["sigma"] = "loud"
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    code, _, err = run("--seed", "1", "--out", str(tmp_path / "o"), "experiment",
                       "--config", str(p))
    assert code == 1 and "generator.sigma" in err
    cfg["generator"]["sigma"] = 0.0
    cfg["extra_key"] = 1
    p.write_text(json.dumps(cfg))
    code, _, err = run("--seed", "1", "--out", str(tmp_path / "o"), "experiment",
                       "--config", str(p))
    assert code == 1 and "extra_key" in err


def test_experiment_random_seed_recorded(tmp_path):
    cfg = json.loads((CONFIGS / "selection_noiseless.json").read_text())
    cfg.update(replicates=2)
    cfg["generator"]["n"] = 300
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    code, out, err = run("--out", str(tmp_path / "o"), "experiment", "--config", str(p))
    assert code == 0 and "using seed" in err
    seed = json.loads(out)["seed"]
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["seed"] == seed


@pytest.mark.parametrize("kernel,dim", [("uniform", 2), ("gaussian_trunc", 1),
                                        ("ball_uniform", 2)])
def test_validate_kernel(kernel, dim):
    code, out, _ = run("validate-kernel", "--kernel", kernel, "--dim", str(dim))
    assert code == 0
    rep = json.loads(out)
    if kernel == "uniform":
        assert rep["diagonal"] and rep["M_K_dominates"]
    else:
        assert rep["passed"]


def test_validate_kernel_unavailable():
    code, out, _ = run("validate-kernel", "--kernel", "uniform", "--dim", "8")
    assert code == 0 and json.loads(out)["status"] == "validation unavailable"


def test_usage_errors():
    assert run()[0] == 1
    assert run("select")[0] == 1
    assert run("--version")[0] == 0


def test_console_script_installed():
    assert shutil.which("locasso") is not None
