import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bwplanner import analytic as A
from bwplanner.approximation import J_bar, J_terms, cumulative_beta, map_costs, map_quotas
from bwplanner.distributions import Erlang, Exponential
from bwplanner.errors import DomainError, UnstableSystem
from bwplanner.optimizer import OptimizationProblem


def test_map_costs_hand_case():
    m = map_costs([1.0, 3.0], [1 / 3, 1 / 2])
    assert m.p_weights[0][0] == pytest.approx(0.5, rel=1e-15)
    assert m.alpha_cum == pytest.approx((1.0, 2.0), rel=1e-15)


def test_map_costs_equal_roots_and_equal_costs():
    m = map_costs([2.0, 5.0], [0.4, 0.4])
    assert m.p_weights == ((1.0, 0.0),) and m.alpha_cum == (2.0, 2.0)
    m = map_costs([1.5] * 3, [0.2, 0.5, 0.7])
    assert m.alpha_cum == pytest.approx((1.5,) * 3, rel=1e-15)


def test_map_costs_accepts_solutions_and_rejects_bad_roots():
    models = A.cumulative_models(Exponential(1.6), (0.5, 0.5), 1.0, 2)
    sols = [A.solve_root(m) for m in models]
    assert map_costs([1, 2], sols).alpha_cum == map_costs([1, 2], [s.varsigma for s in sols]).alpha_cum
    with pytest.raises(DomainError):
        map_costs([1, 2], [0.6, 0.4])
    with pytest.raises(DomainError):
        map_costs([1, 2], [0.6, 1.0])
    with pytest.raises(DomainError):
        map_costs([1, 2, 3], [0.1, 0.2])


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0, 100), min_size=1, max_size=5),
    st.lists(st.floats(0.001, 0.999), min_size=5, max_size=5),
)
def test_cumulative_costs_are_convex_combinations(alpha, roots):
    roots = sorted(roots)[: len(alpha)]
    m = map_costs(alpha, roots)
    assert m.alpha_cum[0] == alpha[0]
    for k, a in enumerate(m.alpha_cum):
        lo, hi = min(alpha[: k + 1]), max(alpha[: k + 1])
        assert lo - 1e-9 * (1 + hi) <= a <= hi + 1e-9 * (1 + hi)
    for p1, p2 in m.p_weights:
        assert 0 <= p1 <= 1 and p1 + p2 == pytest.approx(1)


def test_cumulative_beta():
    assert cumulative_beta(1.0) == Fraction(1, 2)
    assert float(cumulative_beta(1e12)) == pytest.approx(1.0, abs=1e-11)
    with pytest.raises(DomainError):
        cumulative_beta(0.0)


def test_map_quotas_picks_largest():
    q = map_quotas([1.0], 10)
    assert q.beta_cum == (0.5,)
    assert q.N_cum == (10, 21)
    assert q.N_class == (10, 10)


def test_map_quotas_large_ratio():
    # beta_2 is just below 1, so floor(beta_2 * 8) is still 7
    q = map_quotas([1e9], 7)
    assert q.beta_cum[0] == pytest.approx(1.0, abs=1e-8)
    assert q.N_cum == (7, 8)


def test_per_class_quota_when_ratio_skips_N1():
    # floor(2 n) is never 25; the largest n with floor(2 n) <= 25 is 12
    assert map_quotas([2.0], 25).N_class == (25, 12)
    assert map_quotas([2.0], 24).N_class == (24, 12)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0.01, 50), min_size=0, max_size=3), st.integers(0, 500))
def test_map_quotas_floor_round_trip(betas, N1):
    q = map_quotas(betas, N1)
    for b, Nk in zip(betas, q.N_cum[1:]):
        exact = cumulative_beta(b)
        assert math.floor(exact * Nk) == N1
        assert math.floor(exact * (Nk + 1)) > N1
    for b, Nk in zip(betas, q.N_class[1:]):
        fb = Fraction(b)
        assert math.floor(fb * Nk) <= N1 < math.floor(fb * (Nk + 1))
        if fb <= 1:
            assert math.floor(fb * Nk) == N1


def test_map_quotas_guards():
    with pytest.raises(DomainError):
        map_quotas([1.0], -1)
    with pytest.raises(DomainError):
        map_quotas([1.0], 2.5)


def test_J_bar_single_class():
    assert J_bar([1.0], [3], [0.5], [1.0]) == pytest.approx(0.0625, rel=1e-15)


def test_J_bar_two_level_hand_case():
    val = J_bar([1.0, 1.0], [5, 11], [0.4, 0.6], [0.5, 1.0])
    assert val == pytest.approx(0.5 * 0.4 ** 6 + 0.6 ** 12, rel=1e-14)
    assert val == pytest.approx(0.004225, abs=1e-6)


def test_J_bar_zero_costs():
    assert J_bar([0.0, 0.0], [1, 2], [0.4, 0.6], [0.5, 1.0]) == 0.0


def test_J_bar_accepts_mapping_objects():
    costs = map_costs([1.0, 3.0], [1 / 3, 1 / 2])
    quotas = map_quotas([1.0], 4)
    direct = J_bar(costs.alpha_cum, quotas.N_cum, [1 / 3, 1 / 2], [0.4, 1.0])
    assert J_bar(costs, quotas, [1 / 3, 1 / 2], [0.4, 1.0]) == direct


def test_J_bar_finite_mode_sums_losses():
    models = A.cumulative_models(Exponential(1.2), (0.5, 0.5), 1.0, 2)
    sols = [A.solve_root(m) for m in models]
    terms = J_terms([1.0, 2.0], [3, 7], sols, [0.5, 1.0], "finite", models)
    p = [A.loss_exact(models[0], 3), A.loss_exact(models[1], 7)]
    assert terms[0] == pytest.approx(0.5 * p[0], rel=1e-15)
    assert terms[1] == pytest.approx(2.0 * (p[0] + p[1]), rel=1e-15)
    # zero capacity loses everything
    assert J_terms([1.0], [0], sols[:1], [1.0], "finite", models[:1]) == [1.0]


def test_J_bar_guards():
    with pytest.raises(DomainError):
        J_bar([1.0], [3], [0.5], [1.0], mode="other")
    with pytest.raises(DomainError):
        J_bar([1.0], [3], [0.5], [1.0], mode="finite")
    with pytest.raises(DomainError):
        J_bar([1.0, 1.0], [3], [0.5], [1.0])
    unstable = A.AnalyticSolution(0.999, 1.2, 0, 0.0)
    with pytest.raises(UnstableSystem):
        J_bar([1.0], [3], [unstable], [1.0])


SCENARIOS = [
    dict(arrival=Exponential(1.5), thinning=(0.4, 0.6), C=2, alpha_class=(3.0, 1.0), beta_class=(1.0,)),
    dict(arrival=Erlang(2, 5.0), thinning=(0.2, 0.3, 0.5), C=3, alpha_class=(5.0, 2.0, 1.0), beta_class=(1.0, 2.0)),
    dict(arrival=Exponential(0.6), thinning=(1.0,), C=1, alpha_class=(1.0,), beta_class=()),
]


@pytest.mark.parametrize("mode", ["infinite", "finite"])
@pytest.mark.parametrize("sc", SCENARIOS)
def test_J_bar_strictly_decreasing_in_N1(sc, mode):
    p = OptimizationProblem(mu=1.0, epsilon=0.01, mode=mode, **sc)
    vals = [p.J_bar(N1=n) for n in range(20)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("mode", ["infinite", "finite"])
@pytest.mark.parametrize("sc", SCENARIOS)
def test_J_bar_strictly_decreasing_in_C(sc, mode):
    sc = dict(sc)
    sc.pop("C")
    # quotas large enough that no C on the grid empties every buffer at once
    p = OptimizationProblem(mu=1.0, epsilon=0.01, decision="depletion_C", N1=25, mode=mode, **sc)
    lo = p.C_lower()
    vals = [p.J_bar(C=c) for c in range(lo, lo + 20)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
