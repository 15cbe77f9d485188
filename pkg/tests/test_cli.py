import csv
import io
import json
import math
import pathlib

import numpy as np
import pytest
from scipy import stats

from bwplanner import analytic as A
from bwplanner import cli
from bwplanner import scenario as scn
from bwplanner import simulator as sim
from bwplanner.approximation import map_costs
from bwplanner.distributions import Erlang
from bwplanner.optimizer import OptimizationProblem

BASE = {
    "schema": "bw-planner/1",
    "seed": 7,
    "arrival": {"family": "exponential", "rate": 0.5},
    "thinning": [1.0],
    "mu": 1.0,
    "C": 1,
}

THREE = {
    "schema": "bw-planner/1",
    "seed": 11,
    "arrival": {"family": "erlang", "shape": 2, "rate": 4.0},
    "thinning": [0.3, 0.3, 0.4],
    "mu": 1.0,
    "C": 3,
    "quotas_class": [5, 5, 5],
    "quotas_cum": [5, 10, 15],
    "alpha_class": [3, 2, 1],
    "beta_class": [1, 1],
    "horizon": 20000,
    "replications": 3,
    "solve": {"N": [5, 10, 15], "delta": 0.02, "Delta": 1.0},
    "optimize": {"epsilon": 0.001},
    "output": {"trajectory_csv": True},
}


def write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, tmp_path, doc, command, *extra):
    code, out, err = run(capsys, command, "--scenario", write(tmp_path, doc), "--format", "json", *extra)
    assert code == 0, err
    return json.loads(out)


# --- solve -----------------------------------------------------------------


def test_solve_single_class(capsys, tmp_path):
    rep = run_json(capsys, tmp_path, {**BASE, "solve": {"N": 6}}, "solve")
    lvl = rep["levels"][0]
    assert lvl["varsigma"] == pytest.approx(0.5, abs=1e-12)
    assert lvl["tail_above_N"] == pytest.approx(0.5 ** 7, rel=1e-12)


def test_solve_values_equal_library_calls(capsys, tmp_path):
    rep = run_json(capsys, tmp_path, THREE, "solve")
    models = A.cumulative_models(Erlang(2, 4.0), THREE["thinning"], 1.0, 3)
    for row, m, N in zip(rep["levels"], models, THREE["solve"]["N"]):
        sol = A.solve_root(m)
        assert row["varsigma"] == sol.varsigma
        assert row["loss_exact"] == A.loss_exact(m, N)
        assert row["loss_asymptotic"] == A.loss_asymptotic(m, N)
        assert row["tail_above_N"] == A.tail_overflow_prob(sol, N)
    assert rep["heavy_load"]["N"] == 50


def test_solve_unstable_exit_code(capsys, tmp_path):
    doc = {**BASE, "arrival": {"family": "exponential", "rate": 2.5}, "thinning": [0.5, 0.5], "C": 2}
    code, _, err = run(capsys, "solve", "--scenario", write(tmp_path, doc))
    assert code == 2
    assert "rho_2" in err and ">= 1" in err


def test_solve_needs_exponential_service(capsys, tmp_path):
    doc = {**BASE, "service": {"family": "deterministic", "value": 1.0}}
    code, _, err = run(capsys, "solve", "--scenario", write(tmp_path, doc))
    assert code == 1 and "exponential service" in err


# --- schema and usage ------------------------------------------------------


@pytest.mark.parametrize(
    "doc",
    [
        {**BASE, "surprise": 1},
        {**BASE, "schema": "bw-planner/0"},
        {k: v for k, v in BASE.items() if k != "mu"},
        {**BASE, "arrival": {"family": "exponential", "rate": -1}},
        {**BASE, "arrival": {"family": "exponential", "rate": 1, "shape": 2}},
        {**BASE, "alpha_class": [1, 2]},
        {**BASE, "solve": {"N": 3, "extra": True}},
    ],
)
def test_schema_errors_exit_1(capsys, tmp_path, doc):
    code, _, err = run(capsys, "solve", "--scenario", write(tmp_path, doc))
    assert code == 1 and "error" in err


def test_usage_errors_exit_1(capsys, tmp_path):
    assert run(capsys, "solve")[0] == 1
    assert run(capsys, "bogus", "--scenario", "x")[0] == 1
    assert run(capsys, "solve", "--scenario", str(tmp_path / "missing.json"))[0] == 1
    (tmp_path / "bad.json").write_text("{not json")
    assert run(capsys, "solve", "--scenario", str(tmp_path / "bad.json"))[0] == 1
    assert run(capsys, "simulate", "--scenario", write(tmp_path, BASE), "--seed", "-1")[0] == 1
    assert run(capsys, "simulate", "--scenario", write(tmp_path, BASE), "--reps", "0")[0] == 1


def test_scenario_round_trip_to_config():
    sc = scn.validate(THREE)
    cfg = scn.system_config(sc)
    assert cfg.ell == 3 and cfg.C == 3 and cfg.quotas_cum == (5, 10, 15)
    # cumulative costs come from the root mapping
    roots = [A.solve_root(m) for m in scn.cumulative_models(sc)]
    assert cfg.alpha_cum == map_costs((3, 2, 1), roots).alpha_cum


# --- simulate --------------------------------------------------------------


def test_simulate_deterministic_files(capsys, tmp_path):
    path = write(tmp_path, THREE)
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert run(capsys, "simulate", "--scenario", path, "--out", str(d))[0] == 0
        outs.append({f: (d / f).read_bytes() for f in ("simulate.json", "simulate.csv", "trajectory.csv")})
    assert outs[0] == outs[1]
    rows = list(csv.reader(io.StringIO(outs[0]["trajectory.csv"].decode())))
    assert rows[0][:3] == ["epoch_time", "event_type", "class"]


def test_simulate_thread_count_does_not_change_output(capsys, tmp_path, monkeypatch):
    path = write(tmp_path, THREE)
    monkeypatch.setenv("BW_PLANNER_THREADS", "1")
    one = run(capsys, "simulate", "--scenario", path, "--format", "json")[1]
    monkeypatch.setenv("BW_PLANNER_THREADS", "4")
    four = run(capsys, "simulate", "--scenario", path, "--format", "json")[1]
    assert one == four


def test_simulate_seed_flag_changes_output(capsys, tmp_path):
    path = write(tmp_path, THREE)
    a = run(capsys, "simulate", "--scenario", path, "--format", "json")[1]
    b = run(capsys, "simulate", "--scenario", path, "--format", "json", "--seed", "12")[1]
    assert a != b and json.loads(b)["seed"] == 12


def test_simulate_estimates_in_unit_interval(capsys, tmp_path):
    rep = run_json(capsys, tmp_path, THREE, "simulate", "--reps", "2")
    est = rep["estimate"]
    assert est["replications"] == 2
    for key in ("J_class", "J_cum", "J_class_dep", "J_cum_dep"):
        assert all(0 <= v <= 1 for v in est[key])


def test_simulate_zero_horizon_warns(capsys, tmp_path, caplog):
    code, out, _ = run(capsys, "simulate", "--scenario", write(tmp_path, {**BASE, "horizon": 0}), "--format", "json")
    assert code == 0
    rep = json.loads(out)
    assert rep["estimate"] is None and rep["warning"] == "zero horizon"
    assert any("zero horizon" in r.message for r in caplog.records)


def test_simulate_geometric_tail(capsys, tmp_path):
    # 10 x 10^5 arrivals; the standard error comes from the spread over
    # replications, which accounts for correlation along each path
    doc = {**BASE, "quotas_class": [6], "quotas_cum": [6], "horizon": 100_000, "replications": 10}
    est = run_json(capsys, tmp_path, doc, "simulate")["estimate"]
    se = est["halfwidth"]["J_cum"][0] / stats.t.ppf(0.975, 9)
    assert abs(est["J_cum"][0] - 0.5 ** 7) <= 3 * se


# --- optimize --------------------------------------------------------------


def test_optimize_single_class(capsys, tmp_path):
    rep = run_json(capsys, tmp_path, {**BASE, "optimize": {"epsilon": 0.01}}, "optimize")
    assert rep["optimum"] == 6 and rep["decision"] == "quota_N1"
    assert rep["terms"] == [{"level": 1, "alpha_J": rep["J_bar_at_optimum"]}]


def test_optimize_generous_budget(capsys, tmp_path):
    rep = run_json(capsys, tmp_path, {**BASE, "optimize": {"epsilon": 1.0}}, "optimize")
    assert rep["optimum"] == 0 and rep["certificate"]["binding"] == "lower-bound binding"


def test_optimize_C_trace_starts_at_stability_bound(capsys, tmp_path):
    doc = {
        **BASE,
        "arrival": {"family": "exponential", "rate": 2.5},
        "optimize": {"decision": "depletion_C", "epsilon": 0.03, "N1": 10},
    }
    rep = run_json(capsys, tmp_path, doc, "optimize")
    assert rep["trace"][0]["C"] == 3 and rep["optimum"] == 9


def test_optimize_infeasible_budget(capsys, tmp_path):
    doc = {
        **BASE,
        "arrival": {"family": "exponential", "rate": 2.5},
        "optimize": {"decision": "depletion_C", "epsilon": 1e-4, "N1": 10},
    }
    code, _, err = run(capsys, "optimize", "--scenario", write(tmp_path, doc))
    assert code == 1 and "limit" in err


def test_optimize_monotonicity_failure_exit_3(capsys, tmp_path, monkeypatch):
    orig = OptimizationProblem.J_bar
    monkeypatch.setattr(
        OptimizationProblem, "J_bar", lambda self, N1=None, C=None: orig(self, N1, C) / (100 if N1 == 5 else 1)
    )
    code, _, err = run(capsys, "optimize", "--scenario", write(tmp_path, {**BASE, "optimize": {"epsilon": 0.01}}))
    assert code == 3
    assert "N1" in err and "J_bar" in err


# --- validate --------------------------------------------------------------


def test_validate_default_scenario(capsys, tmp_path):
    rep = run_json(capsys, tmp_path, THREE, "validate")
    path = [c for c in rep["checks"] if c["kind"] == "pathwise"]
    assert path and all(c["deviation"] == 0 and c["pass"] for c in path)
    stat = [c for c in rep["checks"] if c["kind"] == "statistical"]
    assert len(stat) == 3 and all("threshold" in c for c in stat)


def test_validate_finite_mode_reports_loss_check(capsys, tmp_path):
    doc = {**BASE, "buffer_mode": "finite_cumulative", "quotas_cum": [5], "horizon": 50_000}
    rep = run_json(capsys, tmp_path, doc, "validate")
    names = [c["check"] for c in rep["checks"]]
    assert "loss fraction vs exact loss" in names
    assert not any(n.startswith("reflection") for n in names)


def test_validate_fails_loudly_on_corrupted_trajectory(capsys, tmp_path, monkeypatch):
    real = sim.run

    def corrupted(config, replication=0, **kw):
        t = real(config, replication, **kw)
        q = t.data["rec_q"].copy()
        q[len(q) // 2, 0] += 1
        t.data["rec_q"] = q
        return t

    monkeypatch.setattr(cli.sim, "run", corrupted)
    code, out, err = run(capsys, "validate", "--scenario", write(tmp_path, THREE), "--format", "json")
    assert code == 3 and "pathwise identity violated" in err
    rep = json.loads(out)
    assert not rep["pathwise_pass"]
    assert any(c["deviation"] > 0 for c in rep["checks"])


# --- formats and determinism ----------------------------------------------


@pytest.mark.parametrize("command", ["solve", "simulate", "optimize", "validate"])
def test_every_command_is_byte_identical_on_rerun(capsys, tmp_path, command):
    path = write(tmp_path, THREE)
    for fmt in ("json", "csv", "table"):
        a = run(capsys, command, "--scenario", path, "--format", fmt)
        b = run(capsys, command, "--scenario", path, "--format", fmt)
        assert a[0] == 0 and a == b


def test_csv_and_table_formats(capsys, tmp_path):
    path = write(tmp_path, THREE)
    _, out, _ = run(capsys, "solve", "--scenario", path, "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0][:4] == ["level", "lambda", "rho", "varsigma"]
    assert len(rows) == 1 + 3 + 1
    _, out, _ = run(capsys, "solve", "--scenario", path, "--format", "table")
    lines = out.splitlines()
    assert lines[0].split()[:2] == ["level", "lambda"] and set(lines[1]) <= {"-", " "}


def test_json_output_has_no_nonfinite_numbers():
    text = cli.dumps({"command": "x", "a": math.inf, "b": np.float64(0.5), "c": np.arange(2)})
    assert json.loads(text) == {"a": "inf", "b": 0.5, "c": [0, 1], "command": "x"}


SHIPPED = sorted((pathlib.Path(__file__).parent.parent / "scenarios").glob("*.json"))


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.name)
def test_shipped_scenarios_validate(path):
    assert scn.load(path).get("schema") == "bw-planner/1"
