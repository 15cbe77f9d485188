"""Smallest quota N_1 or depletion rate C meeting a cost budget ``J_bar <= epsilon``.

Both searches rely on ``J_bar`` decreasing in the decision variable.  That
is audited on every probe sequence rather than assumed: a violation raises
:class:`MonotonicityError` carrying the probes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import analytic as an
from .approximation import J_terms, cumulative_beta, map_costs, map_quotas
from .distributions import Interarrival
from .errors import DomainError, InfeasibleBudget, MonotonicityError, NonConvergence, UnstableSystem

log = logging.getLogger(__name__)

MAX_DOUBLINGS = 64


@dataclass(frozen=True)
class OptimizationProblem:
    """Analytic view of a scenario plus a budget.

    ``decision`` is ``"quota_N1"`` (``C`` fixed) or ``"depletion_C"``
    (quotas fixed, either as ``quotas_cum`` or via ``N1`` and
    ``beta_class``).  ``alpha_cum`` overrides the cost mapping; otherwise
    it is derived from ``alpha_class`` and the roots at each probed C.
    """

    arrival: Interarrival
    thinning: tuple
    mu: float
    epsilon: float
    decision: str = "quota_N1"
    C: Optional[int] = None
    N1: Optional[int] = None
    quotas_cum: Optional[tuple] = None
    alpha_class: Optional[tuple] = None
    alpha_cum: Optional[tuple] = None
    beta_class: tuple = ()
    mode: str = "infinite"

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("thinning", tuple(float(p) for p in self.thinning))
        ell = len(self.thinning)
        if abs(sum(self.thinning) - 1) > 1e-12:
            raise DomainError("thinning probabilities must sum to 1")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if self.decision not in ("quota_N1", "depletion_C"):
            raise DomainError(f"unknown decision {self.decision!r}")
        if self.mode not in ("infinite", "finite"):
            raise DomainError(f"mode must be 'infinite' or 'finite', got {self.mode!r}")
        if self.alpha_class is None and self.alpha_cum is None:
            set_("alpha_class", (1.0,) * ell)
        for name in ("alpha_class", "alpha_cum"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(float(a) for a in v)
                if len(v) != ell or any(a < 0 for a in v):
                    raise DomainError(f"{name} needs {ell} nonnegative entries")
                set_(name, v)
        set_("beta_class", tuple(float(b) for b in self.beta_class))
        if len(self.beta_class) != ell - 1 and self.quotas_cum is None:
            raise DomainError(f"beta_class needs {ell - 1} entries")
        if self.decision == "quota_N1" and self.C is None:
            raise DomainError("quota_N1 needs a fixed C")
        if self.decision == "depletion_C":
            if self.quotas_cum is None and self.N1 is None:
                raise DomainError("depletion_C needs quotas_cum or N1")
            if self.quotas_cum is not None:
                set_("quotas_cum", tuple(int(n) for n in self.quotas_cum))
                if len(self.quotas_cum) != ell:
                    raise DomainError(f"quotas_cum needs {ell} entries")

    @property
    def ell(self):
        return len(self.thinning)

    @property
    def lam(self):
        return 1.0 / self.arrival.mean

    @property
    def shares(self) -> tuple:
        """``lambda_k / lambda_ell`` for each cumulative level."""
        return tuple(np.minimum(np.cumsum(self.thinning), 1.0).tolist())

    def C_lower(self) -> int:
        """Smallest C with ``lambda / (C mu) < 1``."""
        return math.floor(self.lam / self.mu) + 1

    def models(self, C: int):
        return an.cumulative_models(self.arrival, self.thinning, self.mu, C)

    def roots(self, C: int):
        models = self.models(C)
        if not models[-1].rho < 1:
            raise UnstableSystem(models[-1].rho, str(self.ell))
        return models, [an.solve_root(m) for m in models]

    def alpha_at(self, roots) -> tuple:
        if self.alpha_cum is not None:
            return self.alpha_cum
        return map_costs(self.alpha_class, roots).alpha_cum

    def quotas_for(self, N1: int) -> tuple:
        if self.ell == 1:
            return (int(N1),)
        return map_quotas(self.beta_class, N1).N_cum

    def fixed_quotas(self) -> tuple:
        return self.quotas_cum if self.quotas_cum is not None else self.quotas_for(self.N1)

    def terms(self, N1: Optional[int] = None, C: Optional[int] = None) -> list:
        """``alpha_k J_k`` at the given decision values."""
        C = self.C if C is None else C
        quotas = self.fixed_quotas() if N1 is None else self.quotas_for(N1)
        models, sols = self.roots(C)
        return J_terms(self.alpha_at(sols), quotas, sols, self.shares, self.mode, models)

    def J_bar(self, N1: Optional[int] = None, C: Optional[int] = None) -> float:
        return math.fsum(self.terms(N1, C))

    def J_bar_limit_in_C(self) -> float:
        """Infimum of J_bar over C at the fixed quotas.

        As C grows, ``z**C`` vanishes and each root tends to ``B_k(mu)``, the
        chance that no departure epoch falls in an interarrival gap.  With
        finite buffers, every C at or above the largest quota empties the
        buffer at each departure, so the losses stop changing there.
        """
        quotas = self.fixed_quotas()
        big = max(max(quotas) + 1, self.C_lower())
        models = self.models(big)
        roots = [m.dist.lst(self.mu) for m in models]
        alpha = self.alpha_cum if self.alpha_cum is not None else map_costs(self.alpha_class, roots).alpha_cum
        return math.fsum(J_terms(alpha, quotas, roots, self.shares, self.mode, models))


@dataclass
class OptimizationResult:
    decision: str
    optimum: int
    J_bar_at_optimum: float
    terms: list
    certificate: dict
    bounds: dict
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "optimum": self.optimum,
            "J_bar_at_optimum": self.J_bar_at_optimum,
            "terms": self.terms,
            "certificate": self.certificate,
            "bounds": self.bounds,
            "trace": self.trace,
        }


class _Probe:
    """Memoized J_bar evaluations with a monotonicity audit."""

    def __init__(self, fn, label):
        self.fn, self.label, self.seen, self.order = fn, label, {}, []

    def __call__(self, x):
        if x not in self.seen:
            self.seen[x] = self.fn(x)
            self.order.append(x)
            self.audit()
        return self.seen[x]

    def audit(self):
        xs = sorted(self.seen)
        vals = [self.seen[x] for x in xs]
        for (x0, v0), (x1, v1) in zip(zip(xs, vals), zip(xs[1:], vals[1:])):
            if v1 > v0:
                raise MonotonicityError(
                    f"J_bar increased from {v0:.6g} at {self.label}={x0} to {v1:.6g} at {self.label}={x1}",
                    self.trace(),
                )

    def trace(self):
        return [{self.label: x, "J_bar": self.seen[x]} for x in self.order]


def _smallest_feasible(probe, lo, hi, eps):
    """Smallest x in [lo, hi] with probe(x) <= eps, given probe(hi) <= eps."""
    while lo < hi:
        mid = (lo + hi) // 2
        if probe(mid) <= eps:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _level_threshold(problem, k, sol, alpha_k, share, eps) -> int:
    """Smallest N_1 with ``alpha_k J_k < eps`` from the geometric tail."""
    s = sol.varsigma
    c = alpha_k * share
    if c < eps:
        return 0
    # smallest M >= 0 with c s**(M+1) < eps
    M = max(0, math.floor(math.log(eps / c) / math.log(s)))
    while M > 0 and c * s ** M < eps:
        M -= 1
    while not c * s ** (M + 1) < eps:
        M += 1
    if k == 0:
        return M
    # N_k(N1) >= M iff floor(beta_k M) <= N1
    return math.floor(cumulative_beta(problem.beta_class[k - 1]) * M)


def _level_threshold_search(problem, k, eps) -> int:
    """Smallest N_1 with ``alpha_k J_k(N_1) < eps``, by bracketing on the terms."""
    f = lambda n: problem.terms(N1=n)[k]  # noqa: E731
    if f(0) < eps:
        return 0
    hi = 1
    for _ in range(MAX_DOUBLINGS):
        if f(hi) < eps:
            break
        hi *= 2
    else:
        raise NonConvergence("per-level bound search did not terminate")
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if f(mid) < eps:
            hi = mid
        else:
            lo = mid
    return hi


def bounds_N1(problem: OptimizationProblem) -> tuple:
    """``(lower, upper)``: the largest over levels of the smallest N_1 with
    ``alpha_k J_k`` below ``epsilon`` (lower) and below ``epsilon / ell`` (upper)."""
    models, sols = problem.roots(problem.C)
    alpha = problem.alpha_at(sols)
    shares = problem.shares
    out = []
    for eps in (problem.epsilon, problem.epsilon / problem.ell):
        if problem.mode == "infinite":
            vals = [_level_threshold(problem, k, sols[k], alpha[k], shares[k], eps) for k in range(problem.ell)]
        else:
            vals = [_level_threshold_search(problem, k, eps) for k in range(problem.ell)]
        out.append(max(vals))
    return tuple(out)


def minimize_N1(problem: OptimizationProblem) -> OptimizationResult:
    if problem.decision != "quota_N1":
        raise DomainError("problem is not a quota_N1 problem")
    lower, upper = bounds_N1(problem)
    probe = _Probe(lambda n: problem.J_bar(N1=n), "N1")
    eps = problem.epsilon
    hi = upper
    widenings = 0
    while probe(hi) > eps:
        widenings += 1
        if widenings > MAX_DOUBLINGS:
            raise NonConvergence("no feasible N_1 found")
        log.info("J_bar(%d) = %.6g > epsilon; widening the upper bound", hi, probe(hi))
        hi = max(1, 2 * hi)
    lo = min(lower, hi)
    if lo > 0 and probe(lo - 1) <= eps:
        log.info("lower bound %d not binding; searching from 0", lo)
        lo = 0
    opt = _smallest_feasible(probe, lo, hi, eps)
    below = probe(opt - 1) if opt > 0 else None
    cert = {
        "feasible": probe(opt) <= eps,
        "J_bar_below": below,
        "infeasible_below": (below is None) or below > eps,
        "binding": "lower-bound binding" if opt == 0 else "budget binding",
    }
    return OptimizationResult(
        "quota_N1",
        opt,
        probe(opt),
        problem.terms(N1=opt),
        cert,
        {"N1_lower": lower, "N1_upper": upper, "widenings": widenings},
        probe.trace(),
    )


def minimize_C(problem: OptimizationProblem) -> OptimizationResult:
    if problem.decision != "depletion_C":
        raise DomainError("problem is not a depletion_C problem")
    c_low = problem.C_lower()
    probe = _Probe(lambda c: problem.J_bar(C=c), "C")
    eps = problem.epsilon
    limit = problem.J_bar_limit_in_C()
    # infinite buffers approach the limit from above; finite ones reach it
    if limit > eps or (limit == eps and problem.mode == "infinite"):
        raise InfeasibleBudget(
            f"epsilon = {eps:.6g} is not above the large-C limit {limit:.6g} of J_bar; no C is feasible"
        )
    lo, hi = c_low - 1, c_low
    for _ in range(MAX_DOUBLINGS):
        if probe(hi) <= eps:
            break
        lo, hi = hi, 2 * hi
    else:
        raise NonConvergence(f"J_bar still above epsilon after {MAX_DOUBLINGS} doublings of C")
    opt = _smallest_feasible(probe, lo + 1, hi, eps)
    below = probe(opt - 1) if opt > c_low else None
    cert = {
        "feasible": probe(opt) <= eps,
        "J_bar_below": below,
        "infeasible_below": (below is None) or below > eps,
        "binding": "lower-bound binding" if opt == c_low else "budget binding",
    }
    return OptimizationResult(
        "depletion_C",
        opt,
        probe(opt),
        problem.terms(C=opt),
        cert,
        {"C_lower": c_low},
        probe.trace(),
    )


def optimize(problem: OptimizationProblem) -> OptimizationResult:
    return minimize_N1(problem) if problem.decision == "quota_N1" else minimize_C(problem)


def scan_N1(problem: OptimizationProblem, upto: int) -> list:
    """J_bar at N_1 = 0..upto, for exhaustive checks."""
    return [problem.J_bar(N1=n) for n in range(upto + 1)]


def scan_C(problem: OptimizationProblem, upto: int) -> dict:
    return {c: problem.J_bar(C=c) for c in range(problem.C_lower(), upto + 1)}


def first_feasible(values, eps, start=0) -> Optional[int]:
    """Index (offset by ``start``) of the first value ``<= eps``."""
    items = values.items() if isinstance(values, dict) else enumerate(values, start)
    for x, v in items:
        if v <= eps:
            return x
    return None
