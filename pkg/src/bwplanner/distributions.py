"""Interarrival-time families with closed-form transforms.

Every family exposes the Laplace-Stieltjes transform ``B(s) = E[exp(-sT)]``,
its derivative, raw moments, a seeded sampler and the law of the number of
Poisson(mu) epochs falling inside one interarrival interval.  The last one
is what the power-series solver in :mod:`bwplanner.analytic` consumes.

``Thinned`` is the interval between marked points when each point of a
renewal stream is kept independently with probability ``p`` (a geometric
sum of base intervals).  It is how the law of the first-k classes of a
thinned arrival stream is represented.

Unit lengths (the integer message sizes) live here as well, as the small
``Constant``/``Geometric``/``UniformInt`` family.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import stats

from .errors import DomainError


@dataclass(frozen=True)
class Moments:
    """Normalized raw moments ``rho_j = mu**j * E[T**j]``."""

    rho_1: float
    rho_2: float
    rho_3: float

    def __post_init__(self):
        vals = (self.rho_1, self.rho_2, self.rho_3)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"moments must be finite, got {vals}")
        if self.rho_1 <= 0:
            raise DomainError("rho_1 must be positive")
        # Jensen, with a little room for rounding
        if self.rho_2 < self.rho_1 ** 2 * (1 - 1e-12):
            raise DomainError("rho_2 must be at least rho_1**2")


def _positive(name, value):
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be a positive finite real, got {value}")
    return value


def _check_s(s):
    if s < 0:
        raise DomainError(f"transform argument must be nonnegative, got {s}")


class Interarrival:
    """Common behaviour of the interarrival families."""

    family = ""

    def lst(self, s: float) -> float:
        raise NotImplementedError

    def lst_derivative(self, s: float) -> float:
        raise NotImplementedError

    def raw_moment(self, j: int) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def batch_count_pmf(self, mu: float, n: int) -> np.ndarray:
        """P(K = i) for i = 0..n, K the Poisson(mu) count over one interval."""
        raise NotImplementedError

    @property
    def mean(self) -> float:
        return self.raw_moment(1)

    @property
    def arrival_rate(self) -> float:
        return 1.0 / self.mean

    def to_spec(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(Interarrival):
    rate: float
    family = "exponential"

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    def lst(self, s):
        _check_s(s)
        return self.rate / (self.rate + s)

    def lst_derivative(self, s):
        _check_s(s)
        return -self.rate / (self.rate + s) ** 2

    def raw_moment(self, j):
        return math.factorial(j) / self.rate ** j

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def batch_count_pmf(self, mu, n):
        p = self.rate / (self.rate + mu)
        i = np.arange(n + 1)
        # geometric on {0, 1, ...}; scipy's geom starts at 1
        return stats.geom.pmf(i + 1, p)

    def to_spec(self):
        return {"family": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Deterministic(Interarrival):
    value: float
    family = "deterministic"

    def __post_init__(self):
        object.__setattr__(self, "value", _positive("value", self.value))

    def lst(self, s):
        _check_s(s)
        return math.exp(-s * self.value)

    def lst_derivative(self, s):
        _check_s(s)
        return -self.value * math.exp(-s * self.value)

    def raw_moment(self, j):
        return self.value ** j

    def sample(self, rng, size):
        return np.full(size, self.value)

    def batch_count_pmf(self, mu, n):
        return stats.poisson.pmf(np.arange(n + 1), mu * self.value)

    def to_spec(self):
        return {"family": "deterministic", "value": self.value}


@dataclass(frozen=True)
class Erlang(Interarrival):
    shape: int
    rate: float
    family = "erlang"

    def __post_init__(self):
        if int(self.shape) != self.shape or self.shape < 1:
            raise DomainError(f"Erlang shape must be a positive integer, got {self.shape}")
        object.__setattr__(self, "shape", int(self.shape))
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    def lst(self, s):
        _check_s(s)
        return (self.rate / (self.rate + s)) ** self.shape

    def lst_derivative(self, s):
        _check_s(s)
        k, lam = self.shape, self.rate
        return -k * lam ** k / (lam + s) ** (k + 1)

    def raw_moment(self, j):
        return math.prod(range(self.shape, self.shape + j)) / self.rate ** j

    def sample(self, rng, size):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def batch_count_pmf(self, mu, n):
        # mixed Poisson with gamma mixing is negative binomial
        p = self.rate / (self.rate + mu)
        return stats.nbinom.pmf(np.arange(n + 1), self.shape, p)

    def to_spec(self):
        return {"family": "erlang", "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class Hyperexponential2(Interarrival):
    p: float
    rate1: float
    rate2: float
    family = "hyperexponential2"

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise DomainError(f"mixing probability must lie in (0, 1), got {self.p}")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "rate1", _positive("rate1", self.rate1))
        object.__setattr__(self, "rate2", _positive("rate2", self.rate2))

    def _branches(self):
        return ((self.p, Exponential(self.rate1)), (1 - self.p, Exponential(self.rate2)))

    def lst(self, s):
        return sum(w * e.lst(s) for w, e in self._branches())

    def lst_derivative(self, s):
        return sum(w * e.lst_derivative(s) for w, e in self._branches())

    def raw_moment(self, j):
        return sum(w * e.raw_moment(j) for w, e in self._branches())

    def sample(self, rng, size):
        first = rng.random(size) < self.p
        scale = np.where(first, 1.0 / self.rate1, 1.0 / self.rate2)
        return rng.exponential(1.0, size) * scale

    def batch_count_pmf(self, mu, n):
        return sum(w * e.batch_count_pmf(mu, n) for w, e in self._branches())

    def to_spec(self):
        return {"family": "hyperexponential2", "p": self.p, "rate1": self.rate1, "rate2": self.rate2}


@dataclass(frozen=True)
class Thinned(Interarrival):
    """Gap between kept points when each base point is kept with probability p."""

    base: Interarrival
    p: float
    family = "thinned"

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise DomainError(f"keep probability must lie in (0, 1], got {self.p}")
        object.__setattr__(self, "p", float(self.p))

    def lst(self, s):
        b = self.base.lst(s)
        return self.p * b / (1 - (1 - self.p) * b)

    def lst_derivative(self, s):
        b = self.base.lst(s)
        db = self.base.lst_derivative(s)
        return self.p * db / (1 - (1 - self.p) * b) ** 2

    def raw_moment(self, j):
        # Leibniz on M(s) (1 - (1-p) B(s)) = p B(s) at s = 0, with B(0) = M(0) = 1
        q = 1 - self.p
        bder = [1.0] + [(-1) ** n * self.base.raw_moment(n) for n in range(1, j + 1)]
        mder = [1.0]
        for n in range(1, j + 1):
            acc = bder[n]
            acc += (q / self.p) * sum(math.comb(n, i) * mder[i] * bder[n - i] for i in range(n))
            mder.append(acc)
        return (-1) ** j * mder[j]

    def sample(self, rng, size):
        counts = rng.geometric(self.p, size)
        draws = self.base.sample(rng, int(counts.sum()))
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        return np.add.reduceat(draws, starts) if size else np.empty(0)

    def batch_count_pmf(self, mu, n):
        # compound geometric: K(w) (1 - q B(w)) = p B(w); every term is positive
        b = self.base.batch_count_pmf(mu, n)
        q = 1 - self.p
        k = np.zeros(n + 1)
        denom = 1 - q * b[0]
        for m in range(n + 1):
            k[m] = (self.p * b[m] + q * np.dot(b[1 : m + 1], k[m - 1 :: -1][:m])) / denom
        return k

    def to_spec(self):
        return {"family": "thinned", "base": self.base.to_spec(), "p": self.p}


def thin(dist: Interarrival, p: float) -> Interarrival:
    """Interval law after independent thinning, simplified where closed under it."""
    if p == 1:
        return dist
    if isinstance(dist, Exponential):
        return Exponential(dist.rate * p)
    if isinstance(dist, Thinned):
        return Thinned(dist.base, dist.p * p)
    return Thinned(dist, p)


# --- unit lengths ---------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: int = 1
    family = "constant"

    def __post_init__(self):
        if int(self.value) != self.value or self.value < 1:
            raise DomainError(f"unit length must be a positive integer, got {self.value}")
        object.__setattr__(self, "value", int(self.value))

    @property
    def mean(self):
        return float(self.value)

    def sample(self, rng, size):
        return np.full(size, self.value, dtype=np.int64)

    def to_spec(self):
        return {"family": "constant", "value": self.value}


@dataclass(frozen=True)
class Geometric:
    """Lengths on {1, 2, ...} with success probability p."""

    p: float
    family = "geometric"

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise DomainError(f"geometric p must lie in (0, 1], got {self.p}")

    @property
    def mean(self):
        return 1.0 / self.p

    def sample(self, rng, size):
        return rng.geometric(self.p, size).astype(np.int64)

    def to_spec(self):
        return {"family": "geometric", "p": self.p}


@dataclass(frozen=True)
class UniformInt:
    low: int
    high: int
    family = "uniform"

    def __post_init__(self):
        if not (1 <= self.low <= self.high):
            raise DomainError(f"need 1 <= low <= high, got {self.low}, {self.high}")

    @property
    def mean(self):
        return (self.low + self.high) / 2

    def sample(self, rng, size):
        return rng.integers(self.low, self.high, size, endpoint=True, dtype=np.int64)

    def to_spec(self):
        return {"family": "uniform", "low": self.low, "high": self.high}


LengthDistribution = Union[Constant, Geometric, UniformInt]


# --- module-level operations ---------------------------------------------


def lst(dist: Interarrival, s: float) -> float:
    return dist.lst(s)


def lst_derivative(dist: Interarrival, s: float) -> float:
    return dist.lst_derivative(s)


def moments(dist: Interarrival, mu: float) -> Moments:
    mu = _positive("mu", mu)
    return Moments(*(mu ** j * dist.raw_moment(j) for j in (1, 2, 3)))


def sample(dist, rng: np.random.Generator, size: int | None = None):
    """Draw from ``dist`` using only the given stream."""
    if size is None:
        return dist.sample(rng, 1)[0]
    return dist.sample(rng, size)


_FAMILIES = {
    "exponential": lambda d: Exponential(d["rate"]),
    "deterministic": lambda d: Deterministic(d["value"]),
    "erlang": lambda d: Erlang(d["shape"], d["rate"]),
    "hyperexponential2": lambda d: Hyperexponential2(d["p"], d["rate1"], d["rate2"]),
    "thinned": lambda d: Thinned(from_spec(d["base"]), d["p"]),
}

_LENGTHS = {
    "constant": lambda d: Constant(d.get("value", 1)),
    "geometric": lambda d: Geometric(d["p"]),
    "uniform": lambda d: UniformInt(d["low"], d["high"]),
}


def from_spec(spec: dict) -> Interarrival:
    """Build an interarrival law from its tagged record, e.g. ``{"family": "erlang", ...}``."""
    try:
        return _FAMILIES[spec["family"]](spec)
    except KeyError as exc:
        raise DomainError(f"bad distribution record {spec!r}: missing {exc}") from None


def length_from_spec(spec: dict):
    try:
        return _LENGTHS[spec["family"]](spec)
    except KeyError as exc:
        raise DomainError(f"bad unit-length record {spec!r}: missing {exc}") from None
