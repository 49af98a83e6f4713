"""Command-line harness: configure, run, and report experiments and gain
certificates.

Subcommands
-----------
run      execute an experiment (or certificate check) from a JSON config
         and/or flags; writes trajectory CSVs, tidy per-figure CSVs, PNG
         figures, and one summary JSON into the output directory.
report   align one or more summary JSONs from the same experiment into a
         text/CSV comparison table plus a comparison figure.
certify  alias for ``run --experiment certify``.

Exit codes: 0 success, 1 configuration error, 2 any integrator failure.
Randomness comes exclusively from NumPy's seeded PCG64 generator, so a
config plus seed reproduces instances and summaries byte for byte.
The output directory resolves from ``--outdir``, then the config, then the
``PROXCMO_OUTDIR`` environment variable, then ``./proxcmo-out``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import report as reporting
from .dynamics import GainSet, Variant, simulate, zero_state
from .gains import (
    certify_dynamic_constrained,
    certify_dynamic_unconstrained,
    certify_static,
)
from .integrate import IntegratorConfig
from .problem import AffineConstraint, CompositeProblem, spectral_constants
from .prox import L1Norm
from .experiments import lasso as lasso_exp
from .experiments import shidoku as shidoku_exp
from .experiments import sysid as sysid_exp

__all__ = ["main", "ConfigError"]

SCHEMA = "proxcmo-summary-v1"

EXPERIMENTS = ("lasso", "shidoku", "sysid", "certify", "custom")

DEFAULT_METHODS = {
    "lasso": ["dynamic", "static", "pi-pgd", "grad-flow"],
    "shidoku": ["static", "dynamic"],
    "sysid": ["static", "dynamic", "pi-pgd"],
    "custom": ["dynamic"],
}

GAIN_FIELDS = ("mu", "kp", "ki", "k1", "k2", "k3", "gamma")
INTEGRATOR_FIELDS = ("abs_tol", "rel_tol", "t_end", "max_step", "min_step",
                     "stop_residual", "record_stride", "residual_stride")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _clean(obj):
    """JSON-ready copy: numpy to native, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    return obj


def dump_summary(path, summary):
    text = json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n"
    with open(path, "w") as fh:
        fh.write(text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="proxcmo", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command")

    def add_run_flags(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--experiment", choices=EXPERIMENTS)
        p.add_argument("--method", help="comma-separated method tags")
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--outdir")
        p.add_argument("--no-figures", action="store_true")
        p.add_argument("--workers", type=int)
        for f in GAIN_FIELDS:
            p.add_argument(f"--{f}", type=float)
        p.add_argument("--t-end", type=float)
        p.add_argument("--abs-tol", type=float)
        p.add_argument("--rel-tol", type=float)
        p.add_argument("--max-step", type=float)
        p.add_argument("--stop-residual", type=float)
        p.add_argument("--theorem", choices=("t1", "t3", "t4"))
        p.add_argument("--mf", type=float)
        p.add_argument("--lf", type=float)
        p.add_argument("--a1", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--n", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--s", type=int)
        p.add_argument("--rho", type=float)
        p.add_argument("--noise-free", action="store_true")

    run_p = sub.add_parser("run", help="execute an experiment")
    add_run_flags(run_p)
    cert_p = sub.add_parser("certify", help="alias of run --experiment certify")
    add_run_flags(cert_p)
    rep_p = sub.add_parser("report", help="compare summary JSONs")
    rep_p.add_argument("summaries", nargs="*", help="summary JSON paths")
    rep_p.add_argument("--outdir")
    return parser


def load_config(args) -> dict:
    config = {}
    if args.config:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"config parse error at line {exc.lineno}, column {exc.colno}: "
                f"{exc.msg}") from exc
        if not isinstance(config, dict):
            raise ConfigError("config root must be a JSON object")

    if args.command == "certify":
        config["experiment"] = "certify"
    for key in ("experiment", "seed", "runs", "outdir"):
        val = getattr(args, key, None)
        if val is not None:
            config[key] = val
    if args.method:
        config["methods"] = [m.strip() for m in args.method.split(",") if m.strip()]
    if args.no_figures:
        config["figures"] = False
    if args.workers is not None:
        config["workers"] = args.workers

    gains_over = {f: getattr(args, f) for f in GAIN_FIELDS
                  if getattr(args, f) is not None}
    if gains_over:
        config.setdefault("gains", {}).update(gains_over)
    integ_over = {
        "t_end": args.t_end, "abs_tol": args.abs_tol, "rel_tol": args.rel_tol,
        "max_step": args.max_step, "stop_residual": args.stop_residual,
    }
    integ_over = {k: v for k, v in integ_over.items() if v is not None}
    if integ_over:
        config.setdefault("integrator", {}).update(integ_over)

    cert_over = {}
    for src, dst in (("theorem", "theorem"), ("mf", "m_f"), ("lf", "L_f"),
                     ("a1", "a1"), ("epsilon", "epsilon")):
        val = getattr(args, src, None)
        if val is not None:
            cert_over[dst] = val
    for f in ("mu", "ki", "kp", "k1", "k2", "k3"):
        val = getattr(args, f, None)
        if val is not None:
            cert_over[f] = val
    if cert_over:
        config.setdefault("certify", {}).update(cert_over)

    lasso_over = {k: getattr(args, k) for k in ("n", "m", "s", "rho")
                  if getattr(args, k, None) is not None}
    if lasso_over:
        config.setdefault("lasso", {}).update(lasso_over)
    if args.noise_free:
        config.setdefault("sysid", {})["noise_free"] = True
    return config


def _resolve_outdir(config) -> str:
    return (config.get("outdir") or os.environ.get("PROXCMO_OUTDIR")
            or "proxcmo-out")


def _methods(config, experiment) -> list:
    tags = config.get("methods") or DEFAULT_METHODS.get(experiment, [])
    out = []
    for tag in tags:
        try:
            out.append(Variant(tag))
        except ValueError as exc:
            raise ConfigError(f"unknown method tag {tag!r}") from exc
    if not out:
        raise ConfigError("no methods selected")
    return out


def _gain_overrides(config, defaults: dict) -> dict:
    """Apply config['gains'] on top of per-method defaults.

    The gains block is either flat (applied to every method) or keyed by
    method tag.
    """
    block = config.get("gains") or {}
    if not isinstance(block, dict):
        raise ConfigError("gains must be an object")
    flat = {k: v for k, v in block.items() if k in GAIN_FIELDS}
    per_method = {k: v for k, v in block.items() if k not in GAIN_FIELDS}
    out = {}
    for variant, base in defaults.items():
        fields = {f: getattr(base, f) for f in GAIN_FIELDS}
        fields.update(flat)
        fields.update(per_method.get(variant.value, {}))
        try:
            out[variant] = GainSet(**fields)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad gains for {variant.value}: {exc}") from exc
    return out


def _integrator_cfg(config, base: IntegratorConfig) -> IntegratorConfig:
    block = config.get("integrator") or {}
    unknown = set(block) - set(INTEGRATOR_FIELDS)
    if unknown:
        raise ConfigError(f"unknown integrator fields: {sorted(unknown)}")
    fields = {f: getattr(base, f) for f in INTEGRATOR_FIELDS}
    fields.update(block)
    try:
        return IntegratorConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad integrator config: {exc}") from exc


class _Artifacts:
    """Collects written file names so they land in the summary (and can be
    swept up if a run dies half way)."""

    def __init__(self, outdir):
        self.outdir = outdir
        self.trajectories = []
        self.figures = []
        self.tables = []
        os.makedirs(outdir, exist_ok=True)

    def path(self, name, kind):
        getattr(self, kind).append(name)
        return os.path.join(self.outdir, name)

    def as_dict(self):
        return {"trajectories": self.trajectories, "figures": self.figures,
                "tables": self.tables}

    def remove_all(self):
        for group in (self.trajectories, self.figures, self.tables):
            for name in group:
                try:
                    os.remove(os.path.join(self.outdir, name))
                except OSError:
                    pass


def _run_lasso(config, arts: _Artifacts):
    block = config.get("lasso") or {}
    n = int(block.get("n", 40))
    m = int(block.get("m", 44))
    s = int(block.get("s", 8))
    rho = float(block.get("rho", 1.0))
    seed = int(config.get("seed", 0))
    n_runs = int(config.get("runs", 1))
    methods = _methods(config, "lasso")
    base_cfg = IntegratorConfig(t_end=1000.0, max_step=0.5, stop_residual=1e-8,
                                abs_tol=1e-10, rel_tol=1e-8)
    cfg = _integrator_cfg(config, base_cfg)

    runs = []
    failure = False
    for k in range(n_runs):
        instance, problem = lasso_exp.build_lasso(n=n, m=m, s=s, rho=rho,
                                                  seed=seed + k)
        gains = _gain_overrides(config, lasso_exp.default_gains(problem))
        reports = lasso_exp.run_lasso_suite(instance, problem, methods=methods,
                                            gains=gains, cfg=cfg)
        for method in methods:
            rep = reports[method.value]
            entry = {"run": k, "seed": seed + k, "method": method.value,
                     "status": rep["status"], "error": rep["error"]}
            if rep["status"] != "ok":
                failure = True
                runs.append(entry)
                continue
            name = f"lasso_{method.value}_run{k:03d}.csv"
            reporting.write_trajectory_csv(arts.path(name, "trajectories"),
                                           rep["trajectory"])
            entry.update(
                trajectory_csv=name,
                final_residual=rep["final_residual"],
                final_l1=rep["final_l1"],
                final_l0=rep["final_l0"],
                final_support_error=rep["final_support_error"],
                l1_overshoot=rep["l1_overshoot"],
                converged=bool(rep["trajectory"].stopped_early),
                t_final=rep["t_final"],
                n_steps=rep["n_steps"],
            )
            runs.append(entry)
            if k == 0:
                for stem, xcol, ycol in (
                        ("residual_vs_l1", "l1_norm", "residual"),
                        ("residual_vs_t", "t", "residual"),
                        ("l0_vs_t", "t", "l0"),
                        ("support_error_vs_t", "t", "support_error")):
                    cname = f"lasso_fig_{stem}_{method.value}.csv"
                    xs = rep["l1"] if xcol == "l1_norm" else rep["t"]
                    ys = rep[ycol if ycol != "residual" else "residual"]
                    reporting.write_columns_csv(
                        arts.path(cname, "tables"), [xcol, ycol], [xs, ys])
        if k == 0 and config.get("figures", True):
            reporting.lasso_figure(reports,
                                   arts.path("lasso_paths.png", "figures"))

    aggregate = {}
    for method in methods:
        ok = [r for r in runs if r["method"] == method.value
              and r["status"] == "ok"]
        if not ok:
            aggregate[method.value] = {"completed": 0}
            continue
        aggregate[method.value] = {
            "completed": len(ok),
            "final_residual": float(np.mean([r["final_residual"] for r in ok])),
            "support_error": float(np.mean([r["final_support_error"] for r in ok])),
            "l0": float(np.mean([r["final_l0"] for r in ok])),
            "l1_overshoot": float(np.mean([r["l1_overshoot"] for r in ok])),
            "converged": int(sum(r["converged"] for r in ok)),
        }
    return runs, aggregate, failure


def _run_shidoku(config, arts: _Artifacts):
    seed = int(config.get("seed", 0))
    n_runs = int(config.get("runs", 20))
    workers = int(config.get("workers", 1))
    methods = _methods(config, "shidoku")
    block = config.get("shidoku") or {}
    ensemble = bool(block.get("ensemble", False))
    cfg = None
    if config.get("integrator"):
        cfg = _integrator_cfg(config, IntegratorConfig(
            t_end=100.0, abs_tol=1e-6, rel_tol=1e-4, record_stride=50))

    runs = []
    aggregate = {}
    failure = False
    for method in methods:
        gains = _gain_overrides(config, shidoku_exp.default_gains()).get(method)
        if ensemble:
            result = shidoku_exp.run_shidoku_ensemble(
                method, gains=gains, n_runs=n_runs, seed=seed)
            trajs = [None] * n_runs
        else:
            result = shidoku_exp.run_shidoku(
                method, gains=gains, n_runs=n_runs, seed=seed, cfg=cfg,
                n_workers=workers, keep_trajectories=True)
            trajs = result.pop("trajectories")
        rows = {"run": [], "success": [], "t_final": [], "steps": []}
        cells = {f"g{i}": [] for i in range(16)}
        for rec, grid, traj in zip(result["runs"], result["grids"], trajs):
            entry = {"run": rec["run"], "method": method.value,
                     "status": "ok" if rec["error"] is None else "integrator-failure",
                     "error": rec["error"], "success": rec["success"],
                     "t_final": rec["t_final"], "n_steps": rec["steps"]}
            if rec["error"] is not None:
                failure = True
            if traj is not None:
                name = f"shidoku_{method.value}_run{rec['run']:03d}.csv"
                reporting.write_trajectory_csv(
                    arts.path(name, "trajectories"), traj)
                entry["trajectory_csv"] = name
            runs.append(entry)
            rows["run"].append(rec["run"])
            rows["success"].append(int(rec["success"]))
            rows["t_final"].append(rec["t_final"])
            rows["steps"].append(rec["steps"])
            flat = (grid if grid is not None else np.zeros((4, 4))).ravel()
            for i in range(16):
                cells[f"g{i}"].append(flat[i])
        name = f"shidoku_{method.value}_runs.csv"
        header = list(rows) + list(cells)
        reporting.write_columns_csv(arts.path(name, "tables"), header,
                                    [np.asarray(v) for v in
                                     list(rows.values()) + list(cells.values())])
        if config.get("figures", True):
            reporting.shidoku_figure(
                result, arts.path(f"shidoku_{method.value}.png", "figures"))
        aggregate[method.value] = {
            "successes": result["successes"],
            "n_runs": result["n_runs"],
            "success_rate": result["success_rate"],
            "n_variables": result["n_variables"],
            "n_constraint_rows": result["n_constraint_rows"],
        }
    return runs, aggregate, failure


def _run_sysid(config, arts: _Artifacts):
    block = config.get("sysid") or {}
    seed = int(config.get("seed", 0))
    methods = _methods(config, "sysid")
    inst = sysid_exp.build_sysid(
        seed=seed,
        N=int(block.get("N", 50)),
        a=float(block.get("a", 0.75)),
        d=int(block.get("d", 5)),
        snr_db=float(block.get("snr_db", 40.0)),
        noise_free=bool(block.get("noise_free", False)))
    cfg = None
    if config.get("integrator"):
        cfg = _integrator_cfg(config, IntegratorConfig(
            t_end=2500.0, stop_residual=1e-5, abs_tol=1e-9, rel_tol=1e-7,
            record_stride=50, residual_stride=8))

    runs = []
    aggregate = {}
    failure = False
    for method in methods:
        gains = _gain_overrides(config, sysid_exp.default_gains()).get(method)
        result = sysid_exp.run_sysid(inst, method, gains=gains, cfg=cfg,
                                     keep_trajectories=True)
        for i, sign, traj in result.pop("trajectories"):
            tag = "lo" if sign > 0 else "up"
            name = f"sysid_{method.value}_theta{i + 1}_{tag}.csv"
            reporting.write_trajectory_csv(arts.path(name, "trajectories"), traj)
        if result["failures"]:
            failure = True
        entry = {"run": 0, "seed": seed, "method": method.value,
                 "status": "ok" if not result["failures"] else "integrator-failure",
                 "error": "; ".join(f["error"] for f in result["failures"]) or None,
                 "theta_lower": result["theta_lower"],
                 "theta_upper": result["theta_upper"],
                 "theta_hat": result["theta_hat"],
                 "fit": result["fit"],
                 "max_constraint_residual": result["max_constraint_residual"],
                 "max_set_violation": result["max_set_violation"],
                 "contained": result["contained"]}
        runs.append(entry)
        name = f"sysid_{method.value}_bounds.csv"
        reporting.write_columns_csv(
            arts.path(name, "tables"),
            ["index", "theta_lower", "theta_upper", "theta_hat"],
            [np.arange(1, inst.d + 1), result["theta_lower"],
             result["theta_upper"], result["theta_hat"]])
        if config.get("figures", True):
            reporting.sysid_figure(
                result, inst, arts.path(f"sysid_{method.value}.png", "figures"))
        aggregate[method.value] = {
            "fit": result["fit"],
            "max_constraint_residual": result["max_constraint_residual"],
            "contained": result["contained"],
        }
    return runs, aggregate, failure


def _run_certify(config):
    block = dict(config.get("certify") or {})
    theorem = str(block.pop("theorem", "")).lower()
    if theorem not in ("t1", "t3", "t4"):
        raise ConfigError("certify needs theorem set to one of t1, t3, t4")

    def need(*names):
        missing = [n for n in names if n not in block]
        if missing:
            raise ConfigError(
                f"certify {theorem} is missing fields: {', '.join(missing)}")
        return [float(block[n]) for n in names]

    if theorem == "t1":
        cert = certify_static(*need("m_f", "L_f", "mu", "ki", "epsilon", "a1"))
    elif theorem == "t3":
        cert = certify_dynamic_unconstrained(*need("k1", "k2", "k3", "mu",
                                                   "m_f", "L_f"))
    else:
        cert = certify_dynamic_constrained(*need("k1", "k2", "k3", "mu", "m_f",
                                                 "L_f", "a1", "ki", "kp"))
    return cert.as_dict()


def _build_custom_problem(block):
    rho = float(block.get("rho", 1.0))
    if "A" in block:
        A = np.asarray(block["A"], dtype=float)
        b = np.asarray(block.get("b", np.zeros(A.shape[0])), dtype=float)
        n = A.shape[1]
        gram = A.T @ A
        Atb = A.T @ b
        f_value = lambda x: 0.5 * float(np.sum((A @ x - b) ** 2))
        f_grad = lambda x: gram @ x - Atb
        m_f, L_f = spectral_constants(A)
    elif "H" in block:
        H = np.asarray(block["H"], dtype=float)
        q = np.asarray(block.get("q", np.zeros(H.shape[0])), dtype=float)
        n = H.shape[0]
        f_value = lambda x: 0.5 * float(x @ H @ x) + float(q @ x)
        f_grad = lambda x: H @ x + q
        w = np.linalg.eigvalsh(0.5 * (H + H.T))
        m_f, L_f = float(max(w[0], 0.0)), float(w[-1])
    else:
        raise ConfigError("custom problem needs a data matrix A or a Hessian H")
    from .problem import SpectralConstants

    constraint = None
    a1 = a2 = None
    if "C" in block:
        constraint = AffineConstraint(np.asarray(block["C"], dtype=float),
                                      np.asarray(block.get("d", np.zeros(
                                          np.atleast_2d(block["C"]).shape[0])),
                                          dtype=float))
        a1, a2 = spectral_constants(constraint)
    constants = SpectralConstants(m_f=m_f, L_f=L_f, a1=a1, a2=a2)
    if constraint is None:
        return CompositeProblem(n, f_value, f_grad, L1Norm(rho),
                                constants=constants)
    return CompositeProblem.with_affine_constraint(
        n, f_value, f_grad, L1Norm(rho), constraint, constants=constants)


def _run_custom(config, arts: _Artifacts):
    block = config.get("custom") or {}
    problem = _build_custom_problem(block)
    methods = _methods(config, "custom")
    cfg = _integrator_cfg(config, IntegratorConfig(
        t_end=float(block.get("t_end", 100.0)), stop_residual=1e-8))
    runs = []
    aggregate = {}
    failure = False
    from .integrate import NonFinite, StepUnderflow
    from .problem import SystemState

    for method in methods:
        base = {v: GainSet(mu=1.0, kp=1.0, ki=1.0, k1=-2.0, k2=-1.0, k3=-1.0,
                           gamma=1.0) for v in methods}
        gains = _gain_overrides(config, base)[method]
        s0 = zero_state(method, problem)
        if "x0" in block:
            s0 = SystemState(np.asarray(block["x0"], dtype=float),
                             s0.alpha, s0.lam)
        entry = {"run": 0, "method": method.value, "status": "ok", "error": None}
        try:
            traj = simulate(method, problem, gains, s0=s0, cfg=cfg)
        except (StepUnderflow, NonFinite) as exc:
            entry["status"] = "integrator-failure"
            entry["error"] = f"{type(exc).__name__}: {exc}"
            failure = True
            runs.append(entry)
            continue
        name = f"custom_{method.value}_run000.csv"
        reporting.write_trajectory_csv(arts.path(name, "trajectories"), traj)
        entry.update(trajectory_csv=name,
                     final_res_stat=float(traj.metrics["res_stat"][-1]),
                     final_res_feas=float(traj.metrics["res_feas"][-1]),
                     converged=bool(traj.stopped_early),
                     t_final=traj.t_final)
        runs.append(entry)
        aggregate[method.value] = {
            "final_res_stat": entry.get("final_res_stat"),
            "final_res_feas": entry.get("final_res_feas"),
        }
    return runs, aggregate, failure


def cmd_run(args) -> int:
    config = load_config(args)
    experiment = config.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"experiment must be one of {', '.join(EXPERIMENTS)}; "
            f"got {experiment!r}")
    outdir = _resolve_outdir(config)
    summary = {
        "schema": SCHEMA,
        "experiment": experiment,
        "config": config,
        "runs": [],
        "aggregate": {},
        "certificate": None,
    }

    if experiment == "certify":
        summary["certificate"] = _run_certify(config)
        summary["artifacts"] = {"trajectories": [], "figures": [], "tables": []}
        os.makedirs(outdir, exist_ok=True)
        dump_summary(os.path.join(outdir, "summary.json"), summary)
        print(json.dumps(_clean(summary["certificate"]), indent=2,
                         sort_keys=True))
        return 0

    arts = _Artifacts(outdir)
    try:
        if experiment == "lasso":
            runs, aggregate, failure = _run_lasso(config, arts)
        elif experiment == "shidoku":
            runs, aggregate, failure = _run_shidoku(config, arts)
        elif experiment == "sysid":
            runs, aggregate, failure = _run_sysid(config, arts)
        else:
            runs, aggregate, failure = _run_custom(config, arts)
    except ConfigError:
        arts.remove_all()
        raise
    summary["runs"] = runs
    summary["aggregate"] = aggregate
    summary["artifacts"] = arts.as_dict()
    dump_summary(os.path.join(outdir, "summary.json"), summary)
    print(f"wrote {os.path.join(outdir, 'summary.json')}"
          f" ({len(runs)} run entries)")
    return 2 if failure else 0


_PRIMARY_METRIC = {"lasso": "final_residual", "shidoku": "success_rate",
                   "sysid": "fit", "custom": "final_res_feas"}


def _comparison_rows(summaries):
    experiments = {s["experiment"] for s, _ in summaries}
    if len(experiments) > 1:
        raise ConfigError(
            f"cannot compare different experiments: {sorted(experiments)}")
    experiment = experiments.pop()
    rows = []
    for summary, label in summaries:
        for method, agg in sorted(summary.get("aggregate", {}).items()):
            row = {"method": method if len(summaries) == 1
                   else f"{label}:{method}"}
            row["final_residual"] = agg.get("final_residual",
                                            agg.get("max_constraint_residual"))
            row["l0"] = agg.get("l0")
            row["support_error"] = agg.get("support_error")
            row["fit"] = agg.get("fit")
            row["success_rate"] = agg.get("success_rate")
            rows.append(row)
    return experiment, rows


def cmd_report(args) -> int:
    if not args.summaries:
        raise ConfigError("report needs at least one summary JSON path")
    loaded = []
    for path in args.summaries:
        try:
            with open(path) as fh:
                summary = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read summary: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
        if summary.get("schema") != SCHEMA:
            raise ConfigError(f"{path}: not a {SCHEMA} document")
        label = os.path.splitext(os.path.basename(path))[0]
        loaded.append((summary, label))
    experiment, rows = _comparison_rows(loaded)
    if not rows:
        raise ConfigError("summaries contain no aggregated methods")

    table = reporting.format_table(rows)
    print(table)
    outdir = args.outdir or _resolve_outdir({})
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "report.txt"), "w") as fh:
        fh.write(table + "\n")
    header = list(reporting.TABLE_COLUMNS)
    cols = [[("" if r.get(c) is None else r.get(c)) for r in rows]
            for c in header]
    with open(os.path.join(outdir, "report.csv"), "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(rows)):
            fh.write(",".join(str(col[i]) for col in cols) + "\n")
    metric = _PRIMARY_METRIC.get(experiment, "final_residual")
    reporting.comparison_figure(rows, metric,
                                os.path.join(outdir, "report.png"))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command in ("run", "certify"):
            return cmd_run(args)
        if args.command == "report":
            return cmd_report(args)
        parser.print_usage(sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
