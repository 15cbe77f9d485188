"""Map the per-class cost problem onto cumulative buffers.

Costs ``alpha^(k)`` and quotas ``N^(k)`` of individual classes become costs
``alpha_k`` and quotas ``N_k`` of the cumulative contents, whose overflow
fractions the analytic module can compute.  The cumulative cost functional
is ``J_bar = sum_k alpha_k J_k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import analytic as an
from .errors import DomainError, InfeasibleQuota, PrecisionError, UnstableSystem


@dataclass(frozen=True)
class CostMapping:
    alpha_class: tuple
    alpha_cum: tuple
    p_weights: tuple  # (p_{k,1}, p_{k,2}) for k = 2..ell


@dataclass(frozen=True)
class QuotaMapping:
    beta_class: tuple  # beta^(2..ell)
    beta_cum: tuple  # beta_2..beta_ell
    N_class: tuple
    N_cum: tuple


def _root_value(s):
    return s.varsigma if isinstance(s, an.AnalyticSolution) else float(s)


def map_costs(alpha_class: Sequence[float], roots: Sequence) -> CostMapping:
    """Cumulative costs from class costs and the roots of the cumulative models.

    ``p_{k+1,1} = s_k (1 - s_{k+1}) / (s_{k+1} (1 - s_k))`` and
    ``alpha_{k+1} = alpha_k p_{k+1,1} + alpha^(k+1) (1 - p_{k+1,1})``.
    Equal neighbouring roots give ``p = 1``.
    """
    alpha_class = tuple(float(a) for a in alpha_class)
    s = [_root_value(r) for r in roots]
    if len(s) != len(alpha_class):
        raise DomainError("need one root per class")
    if any(not 0 < x < 1 for x in s):
        raise DomainError(f"roots must lie in (0, 1), got {s}")
    alpha = [alpha_class[0]]
    weights = []
    for k in range(len(s) - 1):
        a, b = s[k], s[k + 1]
        if a > b:
            raise DomainError(f"roots must be nondecreasing, got s_{k + 1} = {a} > s_{k + 2} = {b}")
        p1 = 1.0 if a == b else a * (1 - b) / (b * (1 - a))
        weights.append((p1, 1.0 - p1))
        alpha.append(alpha[-1] * p1 + alpha_class[k + 1] * (1 - p1))
    return CostMapping(alpha_class, tuple(alpha), tuple(weights))


def _largest_with_floor(beta: Fraction, target: int, exact: bool = True) -> int:
    """Largest integer n with floor(beta * n) == target (``<= target`` when not exact)."""
    n = math.floor((target + 1) / beta)
    while math.floor(beta * n) > target:
        n -= 1
    if exact and math.floor(beta * n) != target:
        raise InfeasibleQuota(f"no integer n has floor({float(beta)} n) = {target}")
    return n


def cumulative_beta(b: float) -> Fraction:
    """``beta_k = beta^(k) / (1 + beta^(k))``, kept exact."""
    if not b > 0:
        raise DomainError(f"quota ratios must be positive, got {b}")
    fb = Fraction(b)
    return fb / (1 + fb)


def map_quotas(beta_class: Sequence[float], N1: int) -> QuotaMapping:
    """Quota vectors linked to ``N_1 = N^(1)`` through the floor identities.

    ``N^(k)`` is the largest integer with ``floor(beta^(k) N^(k)) = N_1`` and
    ``N_k`` the largest with ``floor(beta_k N_k) = N_1``.  A ratio above one
    can skip ``N_1`` in the per-class identity; ``N^(k)`` is then the largest
    integer with ``floor(beta^(k) N^(k)) <= N_1``.
    """
    if int(N1) != N1 or N1 < 0:
        raise DomainError(f"N_1 must be a nonnegative integer, got {N1}")
    N1 = int(N1)
    bc = tuple(float(b) for b in beta_class)
    exact = [cumulative_beta(b) for b in bc]
    N_cum = (N1,) + tuple(_largest_with_floor(b, N1) for b in exact)
    N_class = (N1,) + tuple(_largest_with_floor(Fraction(b), N1, exact=False) for b in bc)
    return QuotaMapping(bc, tuple(float(b) for b in exact), N_class, N_cum)


def J_terms(
    costs,
    quotas,
    solutions: Sequence,
    shares: Sequence[float],
    mode: str = "infinite",
    models: Sequence[an.CumulativeModel] | None = None,
) -> list:
    """The summands ``alpha_k J_k`` of :func:`J_bar`."""
    alpha = costs.alpha_cum if isinstance(costs, CostMapping) else tuple(costs)
    N = quotas.N_cum if isinstance(quotas, QuotaMapping) else tuple(quotas)
    ell = len(alpha)
    if not (len(N) == len(solutions) == len(shares) == ell):
        raise DomainError("costs, quotas, solutions and shares must have one entry per level")
    for sol in solutions:
        if isinstance(sol, an.AnalyticSolution) and not sol.rho < 1:
            raise UnstableSystem(sol.rho)
    if mode == "infinite":
        J = [shares[k] * an.tail_overflow_prob(solutions[k], N[k]) for k in range(ell)]
    elif mode == "finite":
        if models is None:
            raise DomainError("finite mode needs the cumulative models")
        losses = []
        for k in range(ell):
            if N[k] < 1:
                losses.append(1.0)
                continue
            try:
                losses.append(an.loss_exact(models[k], N[k]))
            except PrecisionError:
                losses.append(an.loss_asymptotic(models[k], N[k]))
        J = [shares[k] * math.fsum(losses[: k + 1]) for k in range(ell)]
    else:
        raise DomainError(f"mode must be 'infinite' or 'finite', got {mode!r}")
    return [a * j for a, j in zip(alpha, J)]


def J_bar(costs, quotas, solutions, shares, mode="infinite", models=None) -> float:
    """``sum_k alpha_k J_k``.

    Infinite buffers: ``J_k = (lambda_k / lambda_ell) s_k**(N_k + 1)``, the
    fraction of all arrivals that are first-k arrivals finding more than
    ``N_k`` units.  Finite buffers: ``J_k = (lambda_k / lambda_ell)
    (p_1 + ... + p_k)`` with ``p_i`` the exact GI/M^C/1/N_i loss.  A level
    with ``N_k = 0`` loses every arrival.
    """
    return math.fsum(J_terms(costs, quotas, solutions, shares, mode, models))
