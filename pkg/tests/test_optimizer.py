import math

import numpy as np
import pytest

from bwplanner import analytic as A
from bwplanner import optimizer
from bwplanner.distributions import Exponential
from bwplanner.errors import DomainError, InfeasibleBudget, MonotonicityError, UnstableSystem
from bwplanner.optimizer import (
    OptimizationProblem,
    bounds_N1,
    first_feasible,
    minimize_C,
    minimize_N1,
    optimize,
    scan_C,
    scan_N1,
)
from scenario_factory import (
    certificate_holds,
    random_C_problem,
    random_N1_problem,
)


def single(lam=0.5, mu=1.0, C=1, eps=0.01, **kw):
    return OptimizationProblem(arrival=Exponential(lam), thinning=(1.0,), mu=mu, epsilon=eps, C=C, **kw)


def test_single_class_quota():
    p = single()
    assert bounds_N1(p) == (6, 6)
    r = minimize_N1(p)
    assert r.optimum == 6
    assert r.J_bar_at_optimum == pytest.approx(0.5 ** 7, rel=1e-12)
    assert r.certificate["feasible"] and r.certificate["infeasible_below"]
    assert r.certificate["J_bar_below"] == pytest.approx(0.5 ** 6, rel=1e-12)
    assert certificate_holds(p, r)


def test_generous_budget_gives_zero_quota():
    p = single(eps=1.0)
    assert bounds_N1(p)[0] == 0
    r = minimize_N1(p)
    assert r.optimum == 0 and r.certificate["binding"] == "lower-bound binding"
    r = minimize_N1(single(eps=0.5))  # J_bar(0) = 0.5
    assert r.optimum == 0


def test_budget_just_below_J_bar_at_zero():
    p0 = single(lam=0.7)
    j0 = p0.J_bar(N1=0)
    p = single(lam=0.7, eps=j0 * (1 - 1e-9))
    r = minimize_N1(p)
    assert r.optimum == first_feasible(scan_N1(p, 50), p.epsilon) == 1
    assert certificate_holds(p, r)


def test_bounds_are_ordered():
    p = OptimizationProblem(
        arrival=Exponential(1.5), thinning=(0.3, 0.7), mu=1.0, epsilon=1e-3, C=2,
        alpha_class=(2.0, 1.0), beta_class=(1.0,),
    )
    lo, hi = bounds_N1(p)
    assert lo <= hi
    r = minimize_N1(p)
    assert r.optimum == first_feasible(scan_N1(p, 100), p.epsilon)


def test_two_class_search_matches_scan():
    p = OptimizationProblem(
        arrival=Exponential(2.5), thinning=(0.1, 0.9), mu=1.0, epsilon=1e-4, C=3,
        alpha_class=(1.0, 1.0), beta_class=(0.2,),
    )
    r = minimize_N1(p)
    assert r.optimum == first_feasible(scan_N1(p, 400), p.epsilon)
    assert certificate_holds(p, r)


def test_upper_bound_is_widened_when_infeasible(monkeypatch):
    monkeypatch.setattr(optimizer, "bounds_N1", lambda problem: (0, 1))
    p = single(eps=1e-3)
    r = minimize_N1(p)
    assert r.optimum == 9 and r.bounds["widenings"] == 4
    assert certificate_holds(p, r)


def test_C_lower_and_generous_budget():
    p = OptimizationProblem(
        arrival=Exponential(2.5), thinning=(1.0,), mu=1.0, epsilon=1.0, decision="depletion_C", N1=10
    )
    assert p.C_lower() == 3
    r = minimize_C(p)
    assert r.optimum == 3 and r.certificate["binding"] == "lower-bound binding"
    assert r.trace[0]["C"] == 3


def test_budget_below_large_C_limit_is_infeasible():
    p = OptimizationProblem(
        arrival=Exponential(2.5), thinning=(1.0,), mu=1.0, epsilon=1e-4, decision="depletion_C", N1=10
    )
    limit = p.J_bar_limit_in_C()
    # each root tends to B(mu) = lambda / (lambda + mu)
    assert limit == pytest.approx((2.5 / 3.5) ** 11, rel=1e-12)
    scan = scan_C(p, 20)
    assert first_feasible(scan, p.epsilon) is None
    assert all(v > limit for v in scan.values())
    with pytest.raises(InfeasibleBudget):
        minimize_C(p)


def test_minimize_C_matches_scan():
    p = OptimizationProblem(
        arrival=Exponential(2.5), thinning=(1.0,), mu=1.0, epsilon=0.03, decision="depletion_C", N1=10
    )
    r = minimize_C(p)
    assert r.optimum == first_feasible(scan_C(p, 30), p.epsilon) == 9
    assert certificate_holds(p, r)
    assert [t["C"] for t in r.trace][0] == 3


def test_finite_mode_C_limit_is_reached():
    # with C >= the largest quota every departure empties the buffer
    p = OptimizationProblem(
        arrival=Exponential(2.0), thinning=(1.0,), mu=1.0, epsilon=1.0, decision="depletion_C",
        N1=4, mode="finite",
    )
    assert p.J_bar(C=5) == p.J_bar(C=9) == p.J_bar_limit_in_C()
    p = OptimizationProblem(
        arrival=Exponential(2.0), thinning=(1.0,), mu=1.0, epsilon=p.J_bar_limit_in_C(),
        decision="depletion_C", N1=4, mode="finite",
    )
    r = minimize_C(p)
    assert r.optimum == first_feasible(scan_C(p, 12), p.epsilon)


def test_monotonicity_audit_aborts(monkeypatch):
    p = single(eps=0.01)
    orig = OptimizationProblem.J_bar

    def bumpy(self, N1=None, C=None):
        v = orig(self, N1, C)
        # J_bar(5) drops below J_bar(6): an increase along the probe order
        return v / 100 if N1 == 5 else v

    monkeypatch.setattr(OptimizationProblem, "J_bar", bumpy)
    with pytest.raises(MonotonicityError) as info:
        minimize_N1(p)
    probes = info.value.probes
    assert [row["N1"] for row in probes] == [6, 5]
    assert all(set(row) == {"N1", "J_bar"} for row in probes)


def test_problem_validation():
    with pytest.raises(DomainError):
        single(eps=0.0)
    with pytest.raises(DomainError):
        OptimizationProblem(arrival=Exponential(1), thinning=(1.0,), mu=1.0, epsilon=0.1)
    with pytest.raises(DomainError):
        OptimizationProblem(arrival=Exponential(1), thinning=(1.0,), mu=1.0, epsilon=0.1, decision="depletion_C")
    with pytest.raises(DomainError):
        OptimizationProblem(arrival=Exponential(1), thinning=(0.5, 0.4), mu=1.0, epsilon=0.1, C=2)
    with pytest.raises(UnstableSystem):
        minimize_N1(single(lam=1.0))
    with pytest.raises(DomainError):
        minimize_C(single())


def test_result_serializes():
    d = optimize(single()).to_dict()
    assert d["optimum"] == 6 and d["decision"] == "quota_N1"
    assert set(d) == {"decision", "optimum", "J_bar_at_optimum", "terms", "certificate", "bounds", "trace"}


def test_roots_are_shared_across_probes():
    A.solve_root.cache_clear()
    p = OptimizationProblem(
        arrival=Exponential(1.5), thinning=(0.3, 0.7), mu=1.0, epsilon=1e-6, C=2, beta_class=(1.0,)
    )
    minimize_N1(p)
    info = A.solve_root.cache_info()
    assert info.misses == 2 and info.hits > 0


@pytest.mark.parametrize("mode", ["infinite", "finite"])
def test_randomized_quota_problems_match_scan(mode):
    rng = np.random.default_rng(4242 if mode == "infinite" else 4343)
    for _ in range(15):
        prob, vals = random_N1_problem(rng, mode)
        r = minimize_N1(prob)
        assert r.optimum == first_feasible(vals, prob.epsilon)
        assert certificate_holds(prob, r)


@pytest.mark.parametrize("mode", ["infinite", "finite"])
def test_randomized_depletion_problems_match_scan(mode):
    rng = np.random.default_rng(5151 if mode == "infinite" else 5252)
    for _ in range(15):
        prob, vals = random_C_problem(rng, mode)
        r = minimize_C(prob)
        assert r.optimum == first_feasible(vals, prob.epsilon)
        assert certificate_holds(prob, r)
        assert math.isfinite(r.J_bar_at_optimum)
