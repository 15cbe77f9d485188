"""Stationary laws and loss probabilities of GI/M^C/1 and GI/M^C/1/N queues.

Under thinning of one renewal stream, the k-th cumulative buffer content
behaves as a single GI/M^C/1 queue fed by the first k classes, so every
quantity here is indexed by one :class:`CumulativeModel`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from . import _backend
from .distributions import Interarrival, Moments, thin
from .errors import DomainError, NumericalDegeneracy, PrecisionError, UnstableSystem

ROOT_TOL = 1e-12
MAX_LOSS_N = 10_000


@dataclass(frozen=True)
class CumulativeModel:
    """Renewal input ``dist`` of rate ``lambda_k`` into exponential batch service."""

    dist: Interarrival
    lambda_k: float
    mu: float
    C: int

    def __post_init__(self):
        if int(self.C) != self.C or self.C < 1:
            raise DomainError(f"C must be a positive integer, got {self.C}")
        object.__setattr__(self, "C", int(self.C))
        if not (self.mu > 0 and self.lambda_k > 0):
            raise DomainError("rates must be positive")
        if abs(self.lambda_k * self.dist.mean - 1.0) > 1e-9:
            raise DomainError(
                f"lambda_k = {self.lambda_k} inconsistent with interarrival mean {self.dist.mean}"
            )

    @classmethod
    def of(cls, dist: Interarrival, mu: float, C: int) -> "CumulativeModel":
        return cls(dist, 1.0 / dist.mean, float(mu), C)

    @property
    def rho(self) -> float:
        return self.lambda_k / (self.C * self.mu)

    def require_stable(self):
        if not self.rho < 1:
            raise UnstableSystem(self.rho)


@dataclass(frozen=True)
class AnalyticSolution:
    """Root of ``z = B(mu - mu z**C)`` in (0, 1); the pre-arrival law is geometric in it."""

    varsigma: float
    rho: float
    iterations: int = 0
    residual: float = 0.0


@dataclass(frozen=True)
class SeriesCoefficients:
    r: np.ndarray
    f: np.ndarray
    pi_tilde: np.ndarray


SolutionLike = Union[AnalyticSolution, float]


def _sigma(solution: SolutionLike) -> float:
    return solution.varsigma if isinstance(solution, AnalyticSolution) else float(solution)


def cumulative_models(arrival: Interarrival, thinning: Sequence[float], mu: float, C: int):
    """One model per cumulative level k for a thinned renewal arrival stream."""
    models = []
    acc = 0.0
    for k, p in enumerate(thinning):
        acc += p
        keep = 1.0 if k == len(thinning) - 1 else min(acc, 1.0)
        models.append(CumulativeModel.of(thin(arrival, keep), mu, C))
    return models


def _arg(model: CumulativeModel, z: float) -> float:
    # mu (1 - z**C), accurate for z near 1
    if z <= 0:
        return model.mu
    return -model.mu * math.expm1(model.C * math.log(z))


def _g(model, z):
    return model.dist.lst(_arg(model, z)) - z


def _dg(model, z):
    C, mu = model.C, model.mu
    return -model.dist.lst_derivative(_arg(model, z)) * C * mu * z ** (C - 1) - 1.0


@lru_cache(maxsize=4096)
def solve_root(model: CumulativeModel) -> AnalyticSolution:
    """Unique root of ``z = B(mu - mu z**C)`` in (0, 1).

    Bisection on ``g(z) = B(mu - mu z**C) - z`` over ``(0, 1 - 1e-12)`` until
    the bracket is narrow, then Newton steps kept inside the bracket.
    """
    model.require_stable()
    lo, hi = 0.0, 1.0 - 1e-12
    if _g(model, hi) >= 0:
        raise NumericalDegeneracy(
            f"root not bracketed below 1 - 1e-12 (rho = {model.rho:.15g} too close to 1)"
        )
    it = 0
    while hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        if _g(model, mid) > 0:
            lo = mid
        else:
            hi = mid
        it += 1
    z = 0.5 * (lo + hi)
    for _ in range(100):
        it += 1
        gz = _g(model, z)
        if gz == 0:
            break
        if gz > 0:
            lo = z
        else:
            hi = z
        step = gz / _dg(model, z)
        znew = z - step
        if not lo < znew < hi:
            znew = 0.5 * (lo + hi)
        if abs(znew - z) <= 4e-16 * max(z, 1e-300):
            z = znew
            break
        z = znew
    res = abs(_g(model, z))
    if res > ROOT_TOL:
        raise NumericalDegeneracy(f"root residual {res:.3g} above {ROOT_TOL}")
    return AnalyticSolution(varsigma=z, rho=model.rho, iterations=it, residual=res)


def solve_root_mmc(lambda_k: float, mu: float, C: int) -> float:
    """Root in (0, 1) of ``z + z**2 + ... + z**C = lambda_k / mu`` (Poisson input)."""
    a = lambda_k / mu
    if not a / C < 1:
        raise UnstableSystem(a / C)
    coeffs = np.ones(C + 1)
    coeffs[-1] = -a
    # numpy.roots wants highest degree first: z**C + ... + z - a
    roots = np.roots(coeffs)
    real = [x.real for x in roots if abs(x.imag) < 1e-9 and 0 < x.real < 1 + 1e-9]
    if len(real) != 1:
        raise NumericalDegeneracy(f"expected one root in (0, 1), got {real}")
    z = min(real[0], 1 - 1e-16)
    for _ in range(3):
        p = sum(z ** i for i in range(1, C + 1)) - a
        dp = sum(i * z ** (i - 1) for i in range(1, C + 1))
        z -= p / dp
    return z


def stationary_pmf(solution: SolutionLike, m: int) -> float:
    """P(Q_k = m immediately before an arrival)."""
    s = _sigma(solution)
    return s ** m * (1 - s)


def tail_overflow_prob(solution: SolutionLike, N: int) -> float:
    """P(Q_k > N immediately before an arrival) = sigma**(N+1)."""
    return _sigma(solution) ** (N + 1)


def expected_content(solution: SolutionLike) -> float:
    s = _sigma(solution)
    return s / (1 - s)


def _batch_counts_with_mass(model, min_terms):
    n = max(min_terms, 16)
    while True:
        pk = model.dist.batch_count_pmf(model.mu, n)
        if pk.sum() >= 1 - 1e-14 or n > 10 ** 7:
            return pk
        n *= 2


def series_coefficients(model: CumulativeModel, n_max: int | None = None) -> SeriesCoefficients:
    """Power-series coefficients behind the exact finite-buffer loss.

    ``r``: coefficients of R(z) = B(mu - mu z**C), supported on multiples
    of C.  ``f``: coefficients of F(z) = R(z) / (R(z) - z).  ``pi_tilde``:
    coefficients of (1 + z + ... + z**(C-1)) F(z).

    ``f[n]`` is the pre-arrival weight of the levels N-n..N relative to the
    full level N, whatever N is, so ``1 / f[N]`` is the loss probability.

    With ``n_max=None`` the length is chosen so that ``r`` carries all but
    1e-14 of its mass.
    """
    model.require_stable()
    C = model.C
    if n_max is None:
        pk = _batch_counts_with_mass(model, 1)
        n_max = max(C, C * (len(pk) - 1))
    else:
        n_max = int(n_max)
        if n_max < C:
            raise DomainError(f"n_max must be at least C = {C}")
        pk = model.dist.batch_count_pmf(model.mu, n_max // C)
    r = np.zeros(n_max + 1)
    r[::C] = pk[: len(r[::C])]
    if not r[0] > 0:
        raise NumericalDegeneracy("r_0 = B(mu) vanished; the recursion divides by it")
    f = np.asarray(_backend.takacs_f(r, C, n_max))
    pi_tilde = f.copy()
    for c in range(1, C):
        pi_tilde[c:] += f[:-c]
    return SeriesCoefficients(r=r, f=f, pi_tilde=pi_tilde)


def loss_exact(model: CumulativeModel, N: int) -> float:
    """Loss probability of the GI/M^C/1/N queue.

    Balancing the pre-arrival chain downward from the full level gives
    weights whose generating function is (1 - z) F(z), hence ``1 / f[N]``.
    """
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N}")
    if N > MAX_LOSS_N:
        raise DomainError(f"N = {N} exceeds the series length guard {MAX_LOSS_N}")
    model.require_stable()
    coeffs = series_coefficients(model, max(int(N), model.C))
    top = coeffs.f[int(N)]
    if not (math.isfinite(top) and top > 0):
        raise PrecisionError(
            f"f[{N}] left double range; use loss_asymptotic for this buffer size"
        )
    return float(1.0 / top)


def pole_weight(model: CumulativeModel, varsigma: float | None = None, *, weighted: bool = True):
    """``1 - R'(s) = 1 + C mu B'(mu - mu s**C) s**(C-1)`` at the root ``s``.

    ``weighted=False`` drops the ``s**(C-1)`` factor.
    """
    s = solve_root(model).varsigma if varsigma is None else varsigma
    w = s ** (model.C - 1) if weighted else 1.0
    return 1.0 + model.C * model.mu * model.dist.lst_derivative(_arg(model, s)) * w


def loss_asymptotic(model: CumulativeModel, N: int, *, form: str = "consistent") -> float:
    """Large-N loss probability of the GI/M^C/1/N queue, remainder dropped.

    ``form="consistent"`` (default) expands ``1 / f[N]`` around the dominant
    pole of F(z)::

        (1-rho) K s**N / ((1-rho) - rho K s**N),   K = 1 - R'(s)

    ``form="displayed"`` evaluates the published closed form, which puts
    ``1 + s + ... + s**(C-1)`` in front of ``(1-rho)`` in the denominator
    and uses ``K = 1 + C mu B'(mu - mu s**C)``.  The two coincide at C = 1.
    """
    if form not in ("consistent", "displayed"):
        raise DomainError(f"unknown form {form!r}")
    model.require_stable()
    s, rho = solve_root(model).varsigma, model.rho
    if form == "consistent":
        K, S = pole_weight(model, s), 1.0
    else:
        K, S = pole_weight(model, s, weighted=False), sum(s ** i for i in range(model.C))
    head = K * s ** N
    return float((1 - rho) * head / ((1 - rho) * S - rho * head))


def _check_heavy(delta, C, form):
    if int(C) != C or C < 2:
        raise DomainError("heavy-load formulas need C >= 2 (binom(C, 2) vanishes at C = 1)")
    if not 0 < delta < 0.2:
        raise DomainError(f"delta must lie in (0, 0.2), got {delta}")
    if form not in ("consistent", "displayed"):
        raise DomainError(f"unknown form {form!r}")


def _heavy_scale(moments: Moments, C: int, form: str) -> float:
    if form == "displayed":
        return math.comb(C, 2) * moments.rho_2
    # R''(1) / 2 for R(z) = B(mu - mu z**C)
    return 0.5 * (C * C * moments.rho_2 + C * (C - 1) * moments.rho_1)


def heavy_load_root(moments: Moments, delta: float, C: int, *, form: str = "displayed") -> float:
    """First-order root at load ``1 - delta``: ``1 - delta / h``.

    ``form="displayed"``: ``h = binom(C, 2) rho_2``.  ``form="consistent"``:
    ``h = R''(1) / 2 = (C**2 rho_2 + C (C-1) rho_1) / 2``, the coefficient
    that makes the error o(delta).
    """
    _check_heavy(delta, C, form)
    return 1.0 - delta / _heavy_scale(moments, C, form)


def loss_heavy_load(
    moments: Moments, delta: float, Delta: float, C: int, *, form: str = "displayed"
) -> float:
    """Main term of the loss at load ``1 - delta`` with ``delta * N -> Delta``.

    ``form="displayed"``: ``delta e / (C - e)`` with
    ``e = exp(-Delta / (binom(C, 2) rho_2))``.  ``form="consistent"``:
    ``delta e / (1 - e)`` with ``e = exp(-Delta / h)``, ``h`` as in
    :func:`heavy_load_root`; this is the limit of :func:`loss_exact`.
    """
    _check_heavy(delta, C, form)
    if not Delta > 0:
        raise DomainError("Delta must be positive")
    e = math.exp(-Delta / _heavy_scale(moments, C, form))
    if form == "displayed":
        return delta * e / (C - e)
    return delta * e / (1 - e)
