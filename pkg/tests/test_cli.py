import csv
import json
import math

import pytest

from entilt.cli import main


def _write(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


LN_MU = math.log(50.0) + 0.03


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_calibrate_zero_views_reproduces_analytic_prices(tmp_path):
    cfg = {
        "version": 1,
        "prior": {"kind": "lognormal", "mu": LN_MU, "sigma2": 0.04},
        "rate": 0.05, "maturity": 1.0, "views": [],
        "strikes": [50, 55, 60, 65, 70, 75, 80],
        "divergence": {"kind": "polynomial", "beta": 1.0},
    }
    rc = main(["calibrate", "--config", _write(tmp_path, "c.json", cfg),
               "--out", str(tmp_path)])
    assert rc == 0
    rows = _read_csv(tmp_path / "prices.csv")
    got = [float(r["posterior_price"]) for r in rows]
    want = [5.2253, 3.0200, 1.6237, 0.8198, 0.3925, 0.1798, 0.0795]
    for g, w in zip(got, want):
        assert g == pytest.approx(w, abs=1e-3)


def test_calibrate_two_views(tmp_path):
    cfg = {
        "version": 1,
        "prior": {"kind": "lognormal", "mu": LN_MU, "sigma2": 0.04},
        "rate": 0.05, "maturity": 1.0,
        "views": [{"strike": 55, "price": 5.0}, {"strike": 60, "price": 3.0}],
        "strikes": [55, 60],
        "divergence": {"kind": "polynomial", "beta": 1.0},
    }
    rc = main(["calibrate", "--config", _write(tmp_path, "c.json", cfg),
               "--out", str(tmp_path)])
    assert rc == 0
    rows = _read_csv(tmp_path / "prices.csv")
    assert float(rows[0]["posterior_price"]) == pytest.approx(5.0, abs=1e-3)
    assert float(rows[1]["posterior_price"]) == pytest.approx(3.0, abs=1e-3)
    summary = json.loads((tmp_path / "posterior.json").read_text())
    assert summary["status"] == "Converged"


def test_update_exponential_mean(tmp_path):
    cfg = {
        "version": 1,
        "prior": {"kind": "exponential", "rate": 2.0},
        "divergence": {"kind": "i"},
        "views": {"moments": [{"fn": "linear", "target": 0.8}]},
    }
    rc = main(["update", "--config", _write(tmp_path, "u.json", cfg),
               "--out", str(tmp_path)])
    assert rc == 0
    summary = json.loads((tmp_path / "posterior.json").read_text())
    assert summary["lambda"][0] == pytest.approx(2.0 - 1.25, abs=1e-8)


def test_markowitz_and_var(tmp_path):
    cfg = {
        "version": 1, "seed": 3,
        "prior": {"kind": "gaussian_nd", "mean": [0.0, 0.1],
                  "cov": [[1.0, 0.5], [0.5, 1.0]]},
        "views": {
            "marginal": {"block_size": 1,
                         "density": {"kind": "student_t", "dof": 3, "scale": 0.57735}},
            "mean_targets": [0.5],
        },
        "var": {"weights": [0.5, 0.5], "notional": 1000,
                "levels": [0.95, 0.99], "n_samples": 50000},
    }
    path = _write(tmp_path, "m.json", cfg)
    assert main(["markowitz", "--config", path, "--out", str(tmp_path)]) == 0
    mk = json.loads((tmp_path / "markowitz.json").read_text())
    assert mk["cond_mean_slope"][0][0] == pytest.approx(0.5, abs=1e-12)
    assert main(["var", "--config", path, "--out", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "var.csv")
    assert [r["level"] for r in rows] == ["0.95", "0.99"]
    assert float(rows[1]["var"]) > float(rows[0]["var"]) > 0.0


def test_sweep_and_diagnose(tmp_path):
    sw = {"version": 1, "sweep": {"rho": 0.25, "n": 1, "grid": 8}}
    assert main(["sweep", "--config", _write(tmp_path, "s.json", sw),
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sweep.csv").exists()
    tr = {"version": 1,
          "diagnose": {"alpha": 4.0, "target_mean": 1.0, "M_grid": [100, 1000]}}
    assert main(["diagnose-truncation", "--config", _write(tmp_path, "t.json", tr),
                 "--out", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "truncation.csv")
    assert float(rows[0]["lambda"]) > float(rows[1]["lambda"]) > 0.0


def test_infeasible_exit_code(tmp_path):
    cfg = {
        "version": 1,
        "prior": {"kind": "lognormal", "mu": 0.0, "sigma2": 0.04},
        "divergence": {"kind": "polynomial", "beta": 1.0},
        "views": {"moments": [{"fn": "linear", "target": math.exp(0.04) * 1.1}]},
    }
    rc = main(["update", "--config", _write(tmp_path, "i.json", cfg),
               "--out", str(tmp_path)])
    assert rc == 1


def test_config_error_exit_code(tmp_path, capsys):
    rc = main(["calibrate", "--config", _write(tmp_path, "b.json", {"version": 1}),
               "--out", str(tmp_path)])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["status"] == "ConfigError"
    assert err["field"]


def test_version_mismatch(tmp_path):
    rc = main(["sweep", "--config", _write(tmp_path, "v.json", {"version": 99}),
               "--out", str(tmp_path)])
    assert rc == 2
