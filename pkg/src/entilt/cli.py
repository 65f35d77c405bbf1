"""Command-line front end.

Subcommands
-----------
calibrate            fit a risk-neutral density to option quotes, price a strike grid
update               moment-view update of a prior, posterior summary as JSON
markowitz            closed-form Gaussian update under a marginal + mean views
var                  portfolio loss quantiles under the markowitz posterior
sweep                attainable (a, b) region for a bivariate lognormal prior
diagnose-truncation  multiplier/divergence decay of a truncated heavy-tail tilt

Configuration is a JSON file (``--config``); outputs land in ``--out`` as
CSV/JSON with a summary on stdout.  Exit codes: 0 ok, 1 solver reports the
views infeasible, 2 malformed configuration.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import payoffs
from .dist_core import Density, ExpectationEngine
from .divergences import i_divergence, polynomial_divergence
from .errors import ConfigError, EntiltError, Infeasible
from .gaussian_toolkit import GaussianPrior, markowitz_update, var_estimate
from .marginal_update import MarginalView, solve_marginal_i, solve_marginal_poly
from .tilt_solvers import ConstraintSet, solve_i_divergence, solve_polynomial, truncated_pareto_diagnostic
from .wls_perturb import solve_perturbed

SCHEMA_VERSION = 1


def _require(cfg: dict, field: str, typ=None):
    cur = cfg
    for part in field.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise ConfigError(field, "missing")
        cur = cur[part]
    if typ is not None and not isinstance(cur, typ):
        raise ConfigError(field, f"expected {typ.__name__}")
    return cur


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be an object")
    version = cfg.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("version", f"unsupported schema version {version}")
    return cfg


def density_from_spec(spec: dict, field: str = "prior") -> Density:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(field, "needs a 'kind'")
    kind = spec["kind"]
    try:
        if kind == "exponential":
            return Density.exponential(spec["rate"])
        if kind == "pareto":
            return Density.pareto(spec["alpha"])
        if kind == "lognormal":
            return Density.lognormal(spec["mu"], spec["sigma2"])
        if kind == "gamma":
            return Density.gamma(spec["shape"], spec["rate"])
        if kind == "student_t":
            return Density.student_t(spec["dof"], spec.get("loc", 0.0), spec.get("scale", 1.0))
        if kind == "gaussian_nd":
            return Density.gaussian_nd(spec["mean"], spec["cov"])
    except KeyError as exc:
        raise ConfigError(f"{field}.{exc.args[0]}", "missing")
    except EntiltError as exc:
        raise ConfigError(field, str(exc))
    raise ConfigError(f"{field}.kind", f"unknown density kind {kind!r}")


def constraint_set_from(views: list, field: str = "views") -> ConstraintSet:
    gs, cs, senses, weights = [], [], [], []
    for i, v in enumerate(views):
        try:
            gs.append(payoffs.from_spec(v))
        except EntiltError as exc:
            raise ConfigError(f"{field}[{i}]", str(exc))
        if "target" not in v:
            raise ConfigError(f"{field}[{i}].target", "missing")
        cs.append(float(v["target"]))
        senses.append(v.get("sense", "equality"))
        weights.append(float(v.get("weight", 1.0)))
    w = np.asarray(weights, dtype=float)
    if len(w):
        w = w / w.sum()
    try:
        return ConstraintSet(tuple(gs), np.asarray(cs), tuple(senses), w if len(w) else None)
    except EntiltError as exc:
        raise ConfigError(field, str(exc))


def _engine(cfg: dict, seed: int) -> ExpectationEngine:
    solver = cfg.get("solver", {})
    return ExpectationEngine(
        abs_tol=solver.get("abs_tol", 1e-10),
        rel_tol=solver.get("rel_tol", 1e-8),
        seed=seed,
        n_samples=solver.get("n_samples", 100_000),
    )


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)


def _write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _summary(post, report, beta, divergence_value) -> dict:
    return {
        "lambda": [float(v) for v in post.lam],
        "beta": beta,
        "divergence": float(divergence_value),
        "residuals": [float(r) for r in report.residuals],
        "status": report.status,
    }


def _black_scholes_call(mu: float, sigma2: float, strike: float, discount: float) -> float:
    """Discounted E[(S - K)^+] for lognormal S with log S ~ N(mu, sigma2)."""
    sd = math.sqrt(sigma2)
    d1 = (mu - math.log(strike) + sigma2) / sd
    d2 = d1 - sd
    fwd = math.exp(mu + sigma2 / 2.0)
    return discount * (fwd * stats.norm.cdf(d1) - strike * stats.norm.cdf(d2))


# ---------------------------------------------------------------------
# subcommands


def cmd_calibrate(cfg, out: Path, seed: int, beta: float, penalty_t) -> int:
    prior_spec = _require(cfg, "prior", dict)
    prior = density_from_spec(prior_spec)
    rate = float(cfg.get("rate", 0.0))
    maturity = float(cfg.get("maturity", 1.0))
    discount = math.exp(-rate * maturity)
    views = cfg.get("views", [])
    if not isinstance(views, list):
        raise ConfigError("views", "expected a list of option quotes")
    for i, v in enumerate(views):
        if "strike" not in v:
            raise ConfigError(f"views[{i}].strike", "missing")
        v.setdefault("fn", "call")
        v.setdefault("discount", discount)
        if "price" in v and "target" not in v:
            v["target"] = v["price"]
    cs = constraint_set_from(views)
    strikes = cfg.get("strikes", sorted({float(v["strike"]) for v in views}))
    if not strikes:
        raise ConfigError("strikes", "no strikes to price")
    eng = _engine(cfg, seed)
    beta = beta if beta is not None else cfg.get("divergence", {}).get("beta", 1.0)
    penalty_t = penalty_t if penalty_t is not None else cfg.get("solver", {}).get("penalty_t")

    if cs.k == 0:
        post, report = solve_polynomial(prior, cs, beta, eng)
    elif penalty_t is not None:
        sol = solve_perturbed(prior, cs, beta, float(penalty_t), eng)
        post = sol.posterior
        from .tilt_solvers import SolveReport

        report = SolveReport(np.abs(sol.y), sol.objective, 0, "Converged")
    else:
        post, report = solve_polynomial(prior, cs, beta, eng)

    rows = []
    analytic_prior = prior.kind == "lognormal"
    for K in strikes:
        g = payoffs.call(float(K), discount)
        if analytic_prior:
            prior_price = _black_scholes_call(prior.params["mu"], prior.params["sigma2"], float(K), discount)
        else:
            f = lambda x: g(x)
            f.kinks = g.kinks
            from .dist_core import expectation

            prior_price = expectation(prior, f, eng)
        post_price = post.expect(g, eng)
        rows.append((f"{float(K):g}", f"{prior_price:.4f}", f"{post_price:.4f}"))
    _write_csv(out / "prices.csv", ["strike", "prior_price", "posterior_price"], rows)
    div = polynomial_divergence(post.ratio, prior, beta, eng)
    _write_json(out / "posterior.json", _summary(post, report, beta, float(div)))
    for row in rows:
        print(",".join(row))
    return 0 if report.status in ("Converged", "NotStronglyFeasible") else 1


def cmd_update(cfg, out: Path, seed: int, beta: float, penalty_t) -> int:
    prior = density_from_spec(_require(cfg, "prior", dict))
    div_cfg = cfg.get("divergence", {"kind": "i"})
    kind = div_cfg.get("kind", "i")
    if kind not in ("i", "polynomial"):
        raise ConfigError("divergence.kind", f"unknown divergence {kind!r}")
    beta = beta if beta is not None else div_cfg.get("beta")
    eng = _engine(cfg, seed)
    views = cfg.get("views", {})
    marginal = views.get("marginal") if isinstance(views, dict) else None
    moments = views.get("moments", []) if isinstance(views, dict) else views

    if marginal is not None:
        g = density_from_spec(_require(views, "marginal.density", dict), "views.marginal.density")
        hs, targets = [], []
        for i, m in enumerate(moments):
            comp = m.get("component")
            if comp is None:
                raise ConfigError(f"views.moments[{i}].component", "missing")

            def h(x, y, comp=int(comp)):
                return np.asarray(y, dtype=float)[:, comp]

            hs.append(h)
            targets.append(float(m["target"]))
        view = MarginalView(g, tuple(hs), np.asarray(targets),
                            beta if kind == "polynomial" else None)
        if kind == "polynomial":
            tilt, report = solve_marginal_poly(prior, view, eng)
        else:
            tilt, report = solve_marginal_i(prior, view, eng)
        _write_json(out / "posterior.json", {
            "lambda": [float(v) for v in tilt.lam],
            "beta": view.beta,
            "residuals": [float(r) for r in report.residuals],
            "status": report.status,
        })
        print(json.dumps({"status": report.status, "lambda": [float(v) for v in tilt.lam]}))
        return 0 if report.status == "Converged" else 1

    cs = constraint_set_from(moments, "views.moments")
    penalty_t = penalty_t if penalty_t is not None else cfg.get("solver", {}).get("penalty_t")
    try:
        if kind == "i":
            post, report = solve_i_divergence(prior, cs, eng)
            div = i_divergence(post.ratio, prior, eng) if cs.k else 0.0
            summary = _summary(post, report, None, float(div))
        elif penalty_t is not None:
            sol = solve_perturbed(prior, cs, beta or 1.0, float(penalty_t), eng)
            from .tilt_solvers import SolveReport

            report = SolveReport(np.abs(sol.y), sol.objective, 0, "Converged")
            div = polynomial_divergence(sol.posterior.ratio, prior, beta or 1.0, eng)
            summary = _summary(sol.posterior, report, beta or 1.0, float(div))
            summary["achieved"] = [float(v) for v in sol.achieved]
            summary["distance"] = sol.distance
        else:
            post, report = solve_polynomial(prior, cs, beta or 1.0, eng)
            div = polynomial_divergence(post.ratio, prior, beta or 1.0, eng) if cs.k else 1.0
            summary = _summary(post, report, beta or 1.0, float(div))
    except Infeasible as exc:
        _write_json(out / "posterior.json", {"status": "Infeasible", "message": str(exc)})
        print(json.dumps({"status": "Infeasible", "message": str(exc)}))
        return 1
    _write_json(out / "posterior.json", summary)
    print(json.dumps({"status": summary["status"], "lambda": summary["lambda"]}))
    return 0 if summary["status"] in ("Converged", "NotStronglyFeasible") else 1


def _markowitz_from_cfg(cfg):
    prior_spec = _require(cfg, "prior", dict)
    if prior_spec.get("kind") != "gaussian_nd":
        raise ConfigError("prior.kind", "markowitz/var need a gaussian_nd prior")
    n_x = int(cfg.get("views", {}).get("marginal", {}).get("block_size", 1))
    try:
        gp = GaussianPrior.from_joint(prior_spec["mean"], prior_spec["cov"], n_x)
    except KeyError as exc:
        raise ConfigError(f"prior.{exc.args[0]}", "missing")
    except EntiltError as exc:
        raise ConfigError("prior", str(exc))
    g = density_from_spec(_require(cfg, "views.marginal.density", dict), "views.marginal.density")
    a = np.asarray(_require(cfg, "views.mean_targets", list), dtype=float)
    try:
        return markowitz_update(gp, g, a)
    except EntiltError as exc:
        raise ConfigError("views", str(exc))


def cmd_markowitz(cfg, out: Path, seed: int, beta, penalty_t) -> int:
    post = _markowitz_from_cfg(cfg)
    obj = {
        "lambda": [float(v) for v in post.lam],
        "cond_mean_slope": post.cond_mean_slope.tolist(),
        "cond_mean_intercept": post.cond_mean_intercept.tolist(),
        "cond_cov": post.cond_cov.tolist(),
        "status": "Converged",
    }
    _write_json(out / "markowitz.json", obj)
    print(json.dumps({"status": "Converged", "lambda": obj["lambda"]}))
    return 0


def cmd_var(cfg, out: Path, seed: int, beta, penalty_t) -> int:
    post = _markowitz_from_cfg(cfg)
    var_cfg = cfg.get("var", {})
    weights = var_cfg.get("weights")
    if weights is None:
        raise ConfigError("var.weights", "missing")
    notional = float(var_cfg.get("notional", 1.0))
    levels = var_cfg.get("levels", [0.95, 0.975, 0.99])
    n = int(var_cfg.get("n_samples", 100_000))
    try:
        table = var_estimate(post, np.asarray(weights, dtype=float), notional, levels, n, seed)
    except EntiltError as exc:
        raise ConfigError("var", str(exc))
    rows = [(f"{l:g}", f"{v:.2f}") for l, v in table]
    _write_csv(out / "var.csv", ["level", "var"], rows)
    for row in rows:
        print(",".join(row))
    return 0


def _lognormal_moment(j: int, k: int, rho: float) -> float:
    return math.exp(0.5 * (j * j + k * k + 2.0 * rho * j * k))


def cmd_sweep(cfg, out: Path, seed: int, beta, penalty_t) -> int:
    sweep = cfg.get("sweep", {})
    rho = float(sweep.get("rho", 0.0))
    if not -1.0 < rho < 1.0:
        raise ConfigError("sweep.rho", "must lie in (-1, 1)")
    n = int(sweep.get("n", 1))
    if n < 1:
        raise ConfigError("sweep.n", "must be a positive integer")
    grid = int(sweep.get("grid", 50))
    hi = float(sweep.get("range_max", 10.0 * n))
    lam_grid = np.linspace(0.0, hi, grid)
    xi_grid = np.linspace(0.0, hi, grid)
    # closed-form bivariate lognormal moments keep the sweep exact and fast
    rows = []
    skipped = 0
    for lam in lam_grid:
        for xi in xi_grid:
            Z = ax = by = 0.0
            for j in range(n + 1):
                for k in range(n - j + 1):
                    coef = (math.factorial(n) / (math.factorial(j) * math.factorial(k) * math.factorial(n - j - k))) \
                        * (lam / n) ** j * (xi / n) ** k
                    Z += coef * _lognormal_moment(j, k, rho)
                    ax += coef * _lognormal_moment(j + 1, k, rho)
                    by += coef * _lognormal_moment(j, k + 1, rho)
            if not (math.isfinite(Z) and Z > 0):
                skipped += 1
                continue
            ex = _lognormal_moment(1, 0, rho)
            a = ax / (ex * Z)
            b = by / (ex * Z)
            rows.append((f"{lam:.6g}", f"{xi:.6g}", f"{a:.8g}", f"{b:.8g}"))
    _write_csv(out / "sweep.csv", ["lambda", "xi", "a", "b"], rows)
    if skipped:
        print(f"warning: skipped {skipped} divergent grid points", file=sys.stderr)
    print(f"wrote {len(rows)} attainable points to {out / 'sweep.csv'}")
    return 0


def cmd_diagnose_truncation(cfg, out: Path, seed: int, beta, penalty_t) -> int:
    diag = cfg.get("diagnose", {})
    alpha = float(diag.get("alpha", 0.0))
    c = float(diag.get("target_mean", 0.0))
    m_grid = diag.get("M_grid")
    if alpha <= 2:
        raise ConfigError("diagnose.alpha", "must exceed 2")
    if m_grid is None:
        raise ConfigError("diagnose.M_grid", "missing")
    try:
        table = truncated_pareto_diagnostic(alpha, c, [float(m) for m in m_grid])
    except EntiltError as exc:
        raise ConfigError("diagnose", str(exc))
    rows = [(f"{M:g}", f"{lam:.8e}", f"{kl:.8e}") for M, lam, kl in table]
    _write_csv(out / "truncation.csv", ["M", "lambda", "kl"], rows)
    for row in rows:
        print(",".join(row))
    return 0


COMMANDS = {
    "calibrate": cmd_calibrate,
    "update": cmd_update,
    "markowitz": cmd_markowitz,
    "var": cmd_var,
    "sweep": cmd_sweep,
    "diagnose-truncation": cmd_diagnose_truncation,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="entilt", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory for CSV/JSON reports")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--penalty-t", type=float, default=None, dest="penalty_t")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        rc = COMMANDS[args.command](cfg, out, seed, args.beta, args.penalty_t)
        return rc
    except ConfigError as exc:
        print(json.dumps({"status": "ConfigError", "field": exc.field, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except Infeasible as exc:
        print(json.dumps({"status": "Infeasible", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
