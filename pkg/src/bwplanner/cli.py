"""``bw-planner``: scenario files in, reports out.

Exit codes: 0 success, 1 usage or schema error, 2 unstable model, 3 audit
failure.  Machine-readable output is JSON with sorted keys and no
timestamps, so identical scenario and seed give identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import analytic as an
from . import scenario as scn
from . import simulator as sim
from .distributions import Constant, moments
from .errors import (
    BwPlannerError,
    DomainError,
    InfeasibleBudget,
    MonotonicityError,
    NotApplicable,
    PrecisionError,
    UnstableSystem,
)
from .optimizer import optimize

log = logging.getLogger("bwplanner.cli")

EXIT_OK, EXIT_USAGE, EXIT_UNSTABLE, EXIT_AUDIT = 0, 1, 2, 3
DEFAULT_CROSSING_LEVELS = 20
DEFAULT_TV_THRESHOLD = 0.01


class AuditFailure(BwPlannerError):
    def __init__(self, message, report):
        self.report = report
        super().__init__(message)


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


# --- solve -----------------------------------------------------------------


def _solve_quotas(sc, ell):
    N = sc.block("solve").get("N")
    if N is None:
        q = sc.get("quotas_cum")
        return [None] * ell if q is None else list(q)
    if isinstance(N, int):
        return [N] * ell
    if len(N) != ell:
        raise scn.ScenarioError(f"solve.N needs {ell} entries")
    return list(N)


def cmd_solve(sc: scn.Scenario) -> dict:
    if not scn.analytic_applicable(sc):
        raise scn.ScenarioError(
            "analytic results need exponential service at rate mu and a single thinned arrival stream"
        )
    models = scn.cumulative_models(sc)
    ell, C = len(models), models[0].C
    # the top level carries the full load, so it is checked first
    for k in reversed(range(ell)):
        if not models[k].rho < 1:
            raise UnstableSystem(models[k].rho, str(k + 1))
    levels = []
    for k, (m, N) in enumerate(zip(models, _solve_quotas(sc, ell))):
        sol = an.solve_root(m)
        row = {
            "level": k + 1,
            "lambda": m.lambda_k,
            "rho": m.rho,
            "varsigma": sol.varsigma,
            "residual": sol.residual,
            "iterations": sol.iterations,
            "P_empty": an.stationary_pmf(sol, 0),
            "mean_content": an.expected_content(sol),
            "N": N,
        }
        if N is not None:
            row["tail_above_N"] = an.tail_overflow_prob(sol, N)
            try:
                row["loss_exact"] = an.loss_exact(m, N)
            except (PrecisionError, DomainError) as exc:
                row["loss_exact"] = None
                row["loss_exact_note"] = str(exc)
            row["loss_asymptotic"] = an.loss_asymptotic(m, N)
            row["loss_asymptotic_displayed"] = an.loss_asymptotic(m, N, form="displayed")
        levels.append(row)
    report = {"command": "solve", "C": C, "mu": models[0].mu, "levels": levels}
    block = sc.block("solve")
    if C >= 2 and "delta" in block and "Delta" in block:
        mo = moments(models[-1].dist, models[-1].mu)
        d, D = block["delta"], block["Delta"]
        report["heavy_load"] = {
            "delta": d,
            "Delta": D,
            "N": math.ceil(D / d),
            "root": an.heavy_load_root(mo, d, C),
            "loss": an.loss_heavy_load(mo, d, D, C),
            "root_consistent": an.heavy_load_root(mo, d, C, form="consistent"),
            "loss_consistent": an.loss_heavy_load(mo, d, D, C, form="consistent"),
        }
    return report


# --- simulate --------------------------------------------------------------


def cmd_simulate(sc: scn.Scenario, reps: int, out_dir=None) -> dict:
    out = sc.block("output")
    want_csv = bool(out.get("trajectory_csv", False)) and out_dir is not None
    cfg = scn.system_config(sc)
    report = {"command": "simulate", "seed": cfg.seed, "horizon": cfg.horizon, "horizon_kind": cfg.horizon_kind}
    if cfg.horizon == 0:
        log.warning("zero horizon: nothing simulated, the report is empty")
        report["estimate"] = None
        report["warning"] = "zero horizon"
        return report
    trajs = sim.run_replications(cfg, reps)
    merged = sim.merge_estimates([sim.estimate_J(t) for t in trajs])
    report["estimate"] = merged.to_dict()
    if want_csv:
        rec = replace(cfg, record=True, record_every=int(out.get("record_every", 1)))
        sim.write_trajectory_csv(sim.run(rec, 0), os.path.join(out_dir, "trajectory.csv"))
        report["trajectory_csv"] = "trajectory.csv"
    return report


# --- optimize --------------------------------------------------------------


def cmd_optimize(sc: scn.Scenario) -> dict:
    problem = scn.optimization_problem(sc)
    result = optimize(problem)
    d = result.to_dict()
    d["command"] = "optimize"
    d["epsilon"] = problem.epsilon
    d["terms"] = [{"level": k + 1, "alpha_J": t} for k, t in enumerate(result.terms)]
    return d


# --- validate --------------------------------------------------------------


def _check(name, deviation, passed, kind="pathwise", **extra):
    return {"check": name, "kind": kind, "deviation": deviation, "pass": bool(passed), **extra}


def validate_trajectory(traj, levels: int = DEFAULT_CROSSING_LEVELS, tv_threshold: float = DEFAULT_TV_THRESHOLD):
    """Pathwise identities on a fully recorded run, plus statistical checks where a closed form exists."""
    cfg = traj.config
    checks = []
    dev = sim.cumulative_equivalence_check(traj)
    checks.append(_check("cumulative equivalence", dev, dev == 0))
    for k in range(cfg.ell):
        try:
            dev = sim.reflection_check(traj, k)
            checks.append(_check(f"reflection level {k + 1}", dev, dev == 0))
        except NotApplicable:
            pass
    for k in range(cfg.ell):
        worst = max(sim.crossing_audit(traj, m, k, cumulative=True).max_violation for m in range(1, levels + 1))
        checks.append(_check(f"crossings cumulative level {k + 1} (1..{levels})", worst, worst == 0))
    worst = max(sim.crossing_audit(traj, m, 0).max_violation for m in range(1, levels + 1))
    checks.append(_check(f"crossings class 1 (1..{levels})", worst, worst == 0))
    checks.extend(_statistical_checks(traj, tv_threshold))
    return checks


def _statistical_checks(traj, tv_threshold):
    cfg = traj.config
    if not cfg.analytic_ok or any(not (isinstance(u, Constant) and u.value == 1) for u in cfg.unit_length):
        return []
    models = an.cumulative_models(cfg.arrival, cfg.thinning, cfg.mu, cfg.C)
    if not models[-1].rho < 1:
        return []
    out = []
    if cfg.buffer_mode == "infinite":
        for k, m in enumerate(models):
            s = an.solve_root(m).varsigma
            tv = sim.total_variation_geometric(sim.pre_arrival_distribution(traj, k), s)
            out.append(
                _check(f"pre-arrival law level {k + 1} vs geometric (TV)", tv, tv <= tv_threshold, "statistical",
                       threshold=tv_threshold)
            )
    elif cfg.ell == 1 and cfg.quotas_cum[0] is not None and cfg.quotas_cum[0] >= 1:
        N = cfg.quotas_cum[0]
        p = an.loss_exact(models[0], N)
        est = sim.estimate_J(traj)
        n = est.arrivals
        se = math.sqrt(p * (1 - p) / n) if n else math.inf
        gap = abs(est.J_cum[0] - p)
        out.append(
            _check("loss fraction vs exact loss", gap, gap <= 3 * se, "statistical", threshold=3 * se,
                   estimate=est.J_cum[0], exact=p)
        )
    return out


def cmd_validate(sc: scn.Scenario) -> dict:
    block = sc.block("validate")
    horizon = block.get("horizon")
    cfg = scn.system_config(sc, record=True, record_every=1, horizon=horizon)
    traj = sim.run(cfg, 0)
    checks = validate_trajectory(
        traj, int(block.get("levels", DEFAULT_CROSSING_LEVELS)), float(block.get("tv_threshold", DEFAULT_TV_THRESHOLD))
    )
    report = {
        "command": "validate",
        "seed": cfg.seed,
        "events": int(traj.data["n_events"]),
        "checks": checks,
        "pathwise_pass": all(c["pass"] for c in checks if c["kind"] == "pathwise"),
    }
    if not report["pathwise_pass"]:
        bad = [c["check"] for c in checks if c["kind"] == "pathwise" and not c["pass"]]
        raise AuditFailure("pathwise identity violated: " + ", ".join(bad), report)
    return report


# --- rendering -------------------------------------------------------------


def _rows(report: dict):
    cmd = report["command"]
    if cmd == "solve":
        keys = ["level", "lambda", "rho", "varsigma", "residual", "P_empty", "mean_content", "N",
                "tail_above_N", "loss_exact", "loss_asymptotic", "loss_asymptotic_displayed"]
        rows = [[r.get(k) for k in keys] for r in report["levels"]]
        if "heavy_load" in report:
            h = report["heavy_load"]
            rows.append(["heavy", None, None, h["root"], None, None, None, h["N"], None, None, h["loss"], None])
        return keys, rows
    if cmd == "simulate":
        est = report.get("estimate")
        keys = ["level", "J_class", "J_class_hw", "J_cum", "J_cum_hw", "J_class_dep", "J_cum_dep"]
        if not est:
            return keys, []
        hw = est["halfwidth"]
        rows = []
        for k in range(len(est["J_class"])):
            rows.append([
                k + 1,
                est["J_class"][k], hw["J_class"][k],
                est["J_cum"][k], hw["J_cum"][k],
                est["J_class_dep"][k], est["J_cum_dep"][k],
            ])
        rows.append(["J", est["J"], hw["J"], "J_bar", est["J_bar"], hw["J_bar"], None])
        return keys, rows
    if cmd == "optimize":
        label = "N1" if report["decision"] == "quota_N1" else "C"
        keys = [label, "J_bar", "feasible"]
        rows = [[t[label], t["J_bar"], t["J_bar"] <= report["epsilon"]] for t in report["trace"]]
        rows.append(["optimum", report["optimum"], report["certificate"]["binding"]])
        return keys, rows
    if cmd == "validate":
        keys = ["check", "kind", "deviation", "pass"]
        return keys, [[c[k] for k in keys] for c in report["checks"]]
    if cmd == "error":
        keys = [k for k in report["probes"][0]] if report.get("probes") else ["message"]
        rows = [[p[k] for k in keys] for p in report["probes"]] if report.get("probes") else [[report["message"]]]
        return keys, rows
    raise DomainError(f"unknown report {cmd!r}")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render_table(report: dict) -> str:
    keys, rows = _rows(report)
    cells = [list(keys)] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(keys))]
    lines = ["  ".join(c[i].rjust(widths[i]) for i in range(len(keys))) for c in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_csv(report: dict) -> str:
    keys, rows = _rows(_clean(report))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    return buf.getvalue()


RENDERERS = {"json": dumps, "table": render_table, "csv": render_csv}


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bw-planner", description="Priority buffers with batch depletion.")
    p.add_argument("command", choices=["solve", "simulate", "optimize", "validate"])
    p.add_argument("--scenario", required=True, metavar="PATH", help="scenario JSON file")
    p.add_argument("--seed", type=int, help="overrides the scenario seed (0 <= seed < 2**64)")
    p.add_argument("--reps", type=int, help="replications for simulate (overrides the scenario)")
    p.add_argument("--out", metavar="DIR", help="also write <command>.json and <command>.csv here")
    p.add_argument("--format", choices=sorted(RENDERERS), default="table")
    return p


def _emit(report, fmt, out_dir, name):
    if out_dir is not None:
        with open(os.path.join(out_dir, f"{name}.json"), "w") as fh:
            fh.write(dumps(report))
        with open(os.path.join(out_dir, f"{name}.csv"), "w") as fh:
            fh.write(render_csv(report))
    sys.stdout.write(RENDERERS[fmt](report))


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        sc = scn.load(args.scenario)
        raw = dict(sc.raw)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise scn.ScenarioError("--seed must lie in [0, 2**64)")
            raw["seed"] = args.seed
        if args.reps is not None:
            if args.reps < 1:
                raise scn.ScenarioError("--reps must be at least 1")
            raw["replications"] = args.reps
        sc = scn.validate(raw)
        out_dir = args.out or sc.block("output").get("dir")
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
        if args.command == "solve":
            report = cmd_solve(sc)
        elif args.command == "simulate":
            report = cmd_simulate(sc, int(sc.get("replications", 1)), out_dir)
        elif args.command == "optimize":
            report = cmd_optimize(sc)
        else:
            report = cmd_validate(sc)
    except UnstableSystem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except MonotonicityError as exc:
        print(f"audit failure: {exc}", file=sys.stderr)
        sys.stderr.write(render_table({"command": "error", "probes": exc.probes, "message": str(exc)}))
        return EXIT_AUDIT
    except AuditFailure as exc:
        print(f"audit failure: {exc}", file=sys.stderr)
        _emit(exc.report, args.format, out_dir, args.command)
        return EXIT_AUDIT
    except (scn.ScenarioError, DomainError, InfeasibleBudget) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BwPlannerError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(report, args.format, out_dir, args.command)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
