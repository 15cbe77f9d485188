"""Brute-force reference solvers for finite-buffer batch-service queues.

Used by the tests to check :mod:`bwplanner.analytic`.  The batch-count law is
obtained by quadrature over the interarrival density, not from the closed forms
in :mod:`bwplanner.distributions`, so agreement is a real cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .distributions import (
    Deterministic,
    Erlang,
    Exponential,
    Hyperexponential2,
    Interarrival,
    Thinned,
)
from .errors import DomainError, NumericalDegeneracy

MAX_STATES = 200


@dataclass(frozen=True)
class FiniteChain:
    """Dense chain on contents 0..N; ``kind`` is ``"generator"`` or ``"transition"``."""

    matrix: np.ndarray
    kind: str

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def gth_stationary(matrix: np.ndarray) -> np.ndarray:
    """Stationary row vector by Grassmann-Taksar-Heyman elimination.

    Only off-diagonal entries are read, so the same routine serves generators
    and transition matrices.  No subtractions occur, which keeps tiny
    probabilities accurate to working precision.
    """
    A = np.array(matrix, dtype=float)
    n = A.shape[0]
    np.fill_diagonal(A, 0.0)
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if not s > 0:
            raise NumericalDegeneracy(f"chain is reducible at state {k}")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
        np.fill_diagonal(A[:k, :k], 0.0)
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ A[:k, k]
    return pi / pi.sum()


def _check_size(N, C):
    if int(N) != N or N < 1 or N > MAX_STATES:
        raise DomainError(f"oracle needs 1 <= N <= {MAX_STATES}, got {N}")
    if int(C) != C or C < 1:
        raise DomainError(f"C must be a positive integer, got {C}")


def ctmc_chain(lam: float, mu: float, C: int, N: int) -> FiniteChain:
    _check_size(N, C)
    Q = np.zeros((N + 1, N + 1))
    for m in range(N + 1):
        if m < N:
            Q[m, m + 1] += lam
        if m > 0:
            Q[m, max(0, m - C)] += mu
        Q[m, m] = -Q[m].sum()
    return FiniteChain(Q, "generator")


def ctmc_loss(lam: float, mu: float, C: int, N: int) -> float:
    """Blocking probability of M/M^C/1/N: time-stationary mass at N (PASTA)."""
    return float(gth_stationary(ctmc_chain(lam, mu, C, N).matrix)[N])


def _log_poisson_density(i, mu, x):
    return i * math.log(mu * x) - mu * x - math.lgamma(i + 1)


def _gamma_mix_pmf(shape, rate, mu, n):
    out = np.empty(n + 1)
    log_norm = shape * math.log(rate) - math.lgamma(shape)
    for i in range(n + 1):
        def integrand(x, i=i):
            if x <= 0:
                return 0.0
            return math.exp(
                _log_poisson_density(i, mu, x) + log_norm + (shape - 1) * math.log(x) - rate * x
            )

        # the integrand peaks near (i + shape - 1) / (mu + rate)
        peak = max((i + shape - 1) / (mu + rate), 1e-12)
        val = 0.0
        for a, b in ((0.0, peak), (peak, math.inf)):
            part, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
            val += part
        out[i] = val
    return out


def batch_count_pmf(dist: Interarrival, mu: float, n: int) -> np.ndarray:
    """P(K = i), i = 0..n, K the Poisson(mu) count over one interarrival time."""
    if isinstance(dist, Deterministic):
        return stats.poisson.pmf(np.arange(n + 1), mu * dist.value)
    if isinstance(dist, Exponential):
        return _gamma_mix_pmf(1, dist.rate, mu, n)
    if isinstance(dist, Erlang):
        return _gamma_mix_pmf(dist.shape, dist.rate, mu, n)
    if isinstance(dist, Hyperexponential2):
        return dist.p * _gamma_mix_pmf(1, dist.rate1, mu, n) + (1 - dist.p) * _gamma_mix_pmf(
            1, dist.rate2, mu, n
        )
    if isinstance(dist, Thinned):
        # geometric number of base intervals; counts over them are independent
        base = batch_count_pmf(dist.base, mu, n)
        q = dist.p
        out = np.zeros(n + 1)
        power = base.copy()
        j = 1
        while True:
            w = q * (1 - q) ** (j - 1)
            out += w * power
            if w < 1e-18 or (1 - q) ** j < 1e-18:
                break
            power = np.convolve(power, base)[: n + 1]
            j += 1
        return out
    raise DomainError(f"no oracle batch law for {type(dist).__name__}")


def embedded_chain(dist: Interarrival, mu: float, C: int, N: int) -> FiniteChain:
    """Contents seen by successive arrivals of a GI/M^C/1/N queue.

    An arrival finding ``m < N`` units is admitted, one finding ``N`` is lost.
    Each departure epoch removes ``min(content, C)``.
    """
    _check_size(N, C)
    kmax = N // C + 2
    pk = batch_count_pmf(dist, mu, kmax)
    P = np.zeros((N + 1, N + 1))
    for m in range(N + 1):
        post = min(m + 1, N)
        k = 0
        while post - C * k > 0:
            P[m, post - C * k] = pk[k]
            k += 1
        # K >= k empties the buffer
        P[m, 0] = max(0.0, 1.0 - math.fsum(pk[:k]))
    return FiniteChain(P, "transition")


def embedded_loss(dist: Interarrival, mu: float, C: int, N: int) -> float:
    """Fraction of arrivals that find the GI/M^C/1/N buffer full."""
    return float(gth_stationary(embedded_chain(dist, mu, C, N).matrix)[N])
