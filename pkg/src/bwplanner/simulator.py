"""Event-driven simulation of priority buffers drained by autonomous batch service.

One arrival stream is split into classes (by independent thinning, or from
independent per-class renewal streams) and one departure stream removes up
to C units per epoch, highest-priority buffer first.  The event loop itself
lives in the kernel selected by :mod:`bwplanner._backend`; this module builds
its inputs, wraps its outputs and implements the estimators and pathwise
audits on top.

Contents seen by an arrival are always the pre-arrival contents ``Q(t-)``.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import _backend
from .distributions import Constant, Exponential, Interarrival
from .errors import DomainError, NotApplicable
from .rng import stream

log = logging.getLogger(__name__)

MODES = ("infinite", "finite_per_class", "finite_cumulative")
HORIZON_KINDS = ("arrivals", "departures", "events")
_MODE_CODE = {m: i for i, m in enumerate(MODES)}
_HORIZON_CODE = {h: i for i, h in enumerate(HORIZON_KINDS)}


def _int_or_none(x):
    if x is None or (isinstance(x, float) and math.isinf(x)):
        return None
    if int(x) != x or x < 0:
        raise DomainError(f"quota must be a nonnegative integer or infinite, got {x}")
    return int(x)


@dataclass(frozen=True)
class SystemConfig:
    """Everything needed to simulate one system; immutable and hashable.

    ``quotas_class`` (per-class ``N^(k)``) and ``quotas_cum`` (cumulative
    ``N_k``) are capacities in the finite modes and overflow thresholds for
    the estimators in infinite mode.  ``None`` entries mean infinite.
    """

    arrival: Interarrival
    thinning: tuple
    mu: float
    C: int
    buffer_mode: str = "infinite"
    quotas_class: Optional[tuple] = None
    quotas_cum: Optional[tuple] = None
    alpha_class: Optional[tuple] = None
    alpha_cum: Optional[tuple] = None
    unit_length: Optional[tuple] = None
    service: Optional[Interarrival] = None
    class_arrivals: Optional[tuple] = None
    horizon: int = 100_000
    horizon_kind: str = "arrivals"
    warmup_fraction: float = 0.1
    seed: int = 0
    record: bool = True
    record_every: int = 1
    hist_levels: int = 0

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        thinning = tuple(float(p) for p in self.thinning)
        if not thinning or any(p < 0 for p in thinning) or abs(sum(thinning) - 1) > 1e-12:
            raise DomainError(f"thinning probabilities must be nonnegative and sum to 1, got {thinning}")
        set_("thinning", thinning)
        ell = len(thinning)
        if int(self.C) != self.C or self.C < 1:
            raise DomainError(f"C must be a positive integer, got {self.C}")
        set_("C", int(self.C))
        if not self.mu > 0:
            raise DomainError("mu must be positive")
        if self.buffer_mode not in MODES:
            raise DomainError(f"buffer_mode must be one of {MODES}")
        if self.horizon_kind not in HORIZON_KINDS:
            raise DomainError(f"horizon_kind must be one of {HORIZON_KINDS}")
        if int(self.horizon) != self.horizon or self.horizon < 0:
            raise DomainError("horizon must be a nonnegative integer")
        if not 0 <= self.warmup_fraction < 1:
            raise DomainError("warmup_fraction must lie in [0, 1)")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise DomainError("record_every must be a positive integer")

        def vec(name, default, conv):
            v = getattr(self, name)
            v = tuple(default for _ in range(ell)) if v is None else tuple(conv(x) for x in v)
            if len(v) != ell:
                raise DomainError(f"{name} needs {ell} entries, got {len(v)}")
            set_(name, v)

        vec("quotas_class", None, _int_or_none)
        vec("quotas_cum", None, _int_or_none)
        vec("alpha_class", 1.0, float)
        if self.alpha_cum is None:
            set_("alpha_cum", self.alpha_class)
        vec("alpha_cum", 1.0, float)
        vec("unit_length", Constant(1), lambda x: x)
        if any(a < 0 for a in self.alpha_class + self.alpha_cum):
            raise DomainError("costs must be nonnegative")
        if self.buffer_mode == "finite_per_class" and None in self.quotas_class:
            raise DomainError("finite_per_class mode needs a finite quota for every class")
        if self.buffer_mode == "finite_cumulative":
            q = self.quotas_cum
            if None in q:
                raise DomainError("finite_cumulative mode needs a finite quota for every level")
            if any(b <= a for a, b in zip(q, q[1:])):
                raise DomainError(f"cumulative quotas must be strictly increasing, got {q}")
        if self.class_arrivals is not None:
            ca = tuple(self.class_arrivals)
            if len(ca) != ell:
                raise DomainError("class_arrivals needs one law per class")
            set_("class_arrivals", ca)
        if self.service is None:
            set_("service", Exponential(self.mu))

    @property
    def ell(self) -> int:
        return len(self.thinning)

    @property
    def lam(self) -> float:
        """Total arrival rate of the superposed stream."""
        if self.class_arrivals is not None:
            return sum(1.0 / d.mean for d in self.class_arrivals)
        return 1.0 / self.arrival.mean

    @property
    def class_rates(self) -> tuple:
        if self.class_arrivals is not None:
            return tuple(1.0 / d.mean for d in self.class_arrivals)
        return tuple(self.lam * p for p in self.thinning)

    @property
    def analytic_ok(self) -> bool:
        """True when the cumulative contents are GI/M^C/1 queues (thinned input,
        Poisson departures, unit lengths)."""
        return (
            self.class_arrivals is None
            and isinstance(self.service, Exponential)
            and abs(self.service.rate - self.mu) <= 1e-12 * self.mu
            and all(isinstance(u, Constant) and u.value == 1 for u in self.unit_length)
        )

    def levels(self) -> int:
        if self.hist_levels:
            return int(self.hist_levels)
        finite = [q for q in self.quotas_class + self.quotas_cum if q is not None]
        return max(256, (max(finite) if finite else 0) + self.C + 3)

    def warmup(self) -> int:
        return int(self.warmup_fraction * self.horizon)


# --- single-step semantics -------------------------------------------------


@dataclass(frozen=True)
class BufferState:
    """Per-class contents plus loss counters, for step-by-step replays."""

    q: tuple
    C: int
    mode: str = "infinite"
    quotas: Optional[tuple] = None
    lost_units: int = 0
    lost_length: int = 0

    @classmethod
    def empty(cls, ell, C, mode="infinite", quotas=None):
        return cls((0,) * ell, C, mode, None if quotas is None else tuple(quotas))

    @property
    def cumulative(self) -> tuple:
        return tuple(np.cumsum(self.q).tolist())

    def admits(self, k: int, length: int) -> bool:
        if self.mode == "finite_per_class":
            return self.q[k] + length <= self.quotas[k]
        if self.mode == "finite_cumulative":
            cum = self.cumulative
            return all(cum[j] + length <= self.quotas[j] for j in range(k, len(self.q)))
        return True


def step_arrival(state: BufferState, k: int, length: int = 1) -> BufferState:
    """A group of ``length`` units arrives to class ``k`` (0-based); in the
    finite modes a group that does not fit is rejected whole."""
    if state.admits(k, length):
        q = list(state.q)
        q[k] += length
        return replace(state, q=tuple(q))
    return replace(
        state, lost_units=state.lost_units + 1, lost_length=state.lost_length + length
    )


def step_departure(state: BufferState) -> BufferState:
    """Remove up to C units, buffer 1 first."""
    rem = state.C
    q = list(state.q)
    for k in range(len(q)):
        take = min(q[k], rem)
        q[k] -= take
        rem -= take
        if rem == 0:
            break
    return replace(state, q=tuple(q))


# --- input streams ---------------------------------------------------------


def _epochs_until(dist, rng, t_end=None, count=None):
    """Renewal epochs from time 0: the first ``count``, or all up to the first past ``t_end``."""
    if count is not None:
        return np.cumsum(dist.sample(rng, int(count))) if count else np.empty(0)
    chunks, total, t = [], 0, 0.0
    chunk = 4096
    while True:
        gaps = dist.sample(rng, chunk)
        times = t + np.cumsum(gaps)
        chunks.append(times)
        t = float(times[-1])
        total += chunk
        if t > t_end:
            break
        chunk = min(chunk * 2, 1 << 22)
    return np.concatenate(chunks)


def _arrival_stream(config: SystemConfig, replication: int, *, count=None, t_end=None):
    seed, ell = config.seed, config.ell
    if config.class_arrivals is None:
        t = _epochs_until(config.arrival, stream(seed, "arrivals", replication), t_end, count)
        cls = stream(seed, "classes", replication).choice(ell, size=len(t), p=config.thinning)
        cls = cls.astype(np.int32)
    else:
        parts = []
        for k, d in enumerate(config.class_arrivals):
            tk = _epochs_until(d, stream(seed, f"arrivals-{k}", replication), t_end, count)
            parts.append((tk, np.full(len(tk), k, dtype=np.int32)))
        t = np.concatenate([p[0] for p in parts])
        cls = np.concatenate([p[1] for p in parts])
        order = np.argsort(t, kind="stable")
        t, cls = t[order], cls[order]
    lengths = np.empty(len(t), dtype=np.int64)
    for k in range(ell):
        idx = np.flatnonzero(cls == k)
        lengths[idx] = config.unit_length[k].sample(stream(seed, f"length-{k}", replication), len(idx))
    return t, cls, lengths


def build_inputs(config: SystemConfig, replication: int = 0):
    """Arrival times, classes, lengths and departure times covering the horizon."""
    H = config.horizon
    dep_rng = stream(config.seed, "departures", replication)
    if H == 0:
        return np.empty(0), np.empty(0, np.int32), np.empty(0, np.int64), np.empty(0)
    if config.horizon_kind == "arrivals":
        at, ac, al = _arrival_stream(config, replication, count=H)
        dt = _epochs_until(config.service, dep_rng, t_end=at[H - 1])
    elif config.horizon_kind == "departures":
        dt = _epochs_until(config.service, dep_rng, count=H)
        at, ac, al = _arrival_stream(config, replication, t_end=dt[-1])
    else:
        at, ac, al = _arrival_stream(config, replication, count=H)
        dt = _epochs_until(config.service, dep_rng, count=H)
    return at, ac, al, dt


# --- trajectories ----------------------------------------------------------


@dataclass
class BufferTrajectory:
    """Kernel output for one replication.

    Histograms count post-warm-up events by the content seen just before
    them; the last bin is an overflow bin.  ``rec_*`` arrays hold one row per
    recorded event with the contents right after it.
    """

    config: SystemConfig
    replication: int
    data: dict

    def __getattr__(self, name):
        data = self.__dict__.get("data")
        if data is not None and name in data:
            return data[name]
        raise AttributeError(name)

    @property
    def ell(self):
        return self.config.ell

    @property
    def complete(self) -> bool:
        """Every event recorded (no decimation), as pathwise audits require."""
        return self.config.record and self.config.record_every == 1

    @property
    def q_class(self) -> np.ndarray:
        return self.data["rec_q"]

    @property
    def q_cum(self) -> np.ndarray:
        return np.cumsum(self.data["rec_q"], axis=1)

    @property
    def arrivals_stats(self) -> int:
        return int(self.data["offered_stats"].sum())


def _simulate(config, at, ac, al, dt, *, warmup, backend=None):
    kern = _backend.kernels(backend)
    quotas = [
        (q if q is not None else -1)
        for q in (config.quotas_class if config.buffer_mode == "finite_per_class" else config.quotas_cum)
    ]
    out = kern.simulate_core(
        np.ascontiguousarray(at, dtype=np.float64),
        np.ascontiguousarray(ac, dtype=np.int32),
        np.ascontiguousarray(al, dtype=np.int64),
        np.ascontiguousarray(dt, dtype=np.float64),
        config.ell,
        config.C,
        _MODE_CODE[config.buffer_mode],
        np.asarray(quotas, dtype=np.int64),
        _HORIZON_CODE[config.horizon_kind],
        config.horizon,
        warmup,
        bool(config.record),
        config.record_every,
        config.levels(),
    )
    if out["ties"]:
        log.warning("%d arrival/departure ties; departures were processed first", out["ties"])
    return out


def run(config: SystemConfig, replication: int = 0, *, backend: Optional[str] = None) -> BufferTrajectory:
    """Simulate one replication; a pure function of ``(config, replication)``."""
    at, ac, al, dt = build_inputs(config, replication)
    out = _simulate(config, at, ac, al, dt, warmup=config.warmup(), backend=backend)
    return BufferTrajectory(config, replication, out)


def run_script(
    events: Sequence,
    ell: int = 1,
    C: int = 1,
    buffer_mode: str = "infinite",
    quotas_class=None,
    quotas_cum=None,
    *,
    backend: Optional[str] = None,
) -> BufferTrajectory:
    """Replay a hand-written event list through the kernel.

    ``events`` items are ``("arr", k, length)`` with 0-based class ``k``, or
    ``("dep",)``.  Event i happens at time i + 1; nothing is discarded as
    warm-up.
    """
    at, ac, al, dt = [], [], [], []
    for i, ev in enumerate(events):
        if ev[0] == "arr":
            at.append(i + 1.0)
            ac.append(ev[1])
            al.append(ev[2] if len(ev) > 2 else 1)
        elif ev[0] == "dep":
            dt.append(i + 1.0)
        else:
            raise DomainError(f"unknown scripted event {ev!r}")
    config = SystemConfig(
        arrival=Exponential(1.0),
        thinning=(1.0 / ell,) * ell,
        mu=1.0,
        C=C,
        buffer_mode=buffer_mode,
        quotas_class=quotas_class,
        quotas_cum=quotas_cum,
        horizon=len(events),
        horizon_kind="events",
        warmup_fraction=0.0,
    )
    out = _simulate(config, np.array(at), np.array(ac), np.array(al), np.array(dt), warmup=0, backend=backend)
    return BufferTrajectory(config, 0, out)


# --- estimators ------------------------------------------------------------


def _count_above(hist_row, N):
    """Events that saw content > N."""
    if N is None:
        return 0
    return int(hist_row[N + 1 :].sum())


def _departure_side(hist_row, N, C):
    """Sum over departures of #{l = 1..C : content >= N + 1 + l}."""
    if N is None:
        return 0
    levels = np.arange(len(hist_row))
    weight = np.clip(levels - N - 1, 0, C)
    return int(hist_row @ weight)


@dataclass
class EstimateReport:
    """Overflow fractions per class and per cumulative level.

    Infinite mode: fraction of all arrivals that are class-k arrivals seeing
    ``Q^(k)(t-) > N^(k)`` (``J_class``) and arrivals of the first k classes
    seeing ``Q_k(t-) > N_k`` (``J_cum``).  The departure-side versions count
    down-crossings instead; they equal the arrival-side ones pathwise up to
    boundary terms for cumulative levels and class 1 with unit lengths.
    Finite modes: fractions of all arrivals that were rejected.
    """

    J_class: list
    J_cum: list
    J: float
    J_bar: float
    J_class_dep: list
    J_cum_dep: list
    arrivals: int
    departures: int
    replications: int = 1
    halfwidth: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "J_class": self.J_class,
            "J_cum": self.J_cum,
            "J": self.J,
            "J_bar": self.J_bar,
            "J_class_dep": self.J_class_dep,
            "J_cum_dep": self.J_cum_dep,
            "arrivals": self.arrivals,
            "departures": self.departures,
            "replications": self.replications,
            "halfwidth": self.halfwidth,
        }


def estimate_J(trajectory: BufferTrajectory, config: Optional[SystemConfig] = None) -> EstimateReport:
    config = config or trajectory.config
    d, ell, C = trajectory.data, config.ell, config.C
    A = int(d["offered_stats"].sum())
    nd = int(d["n_departures_stats"])
    if A == 0:
        z = [0.0] * ell
        return EstimateReport(z, list(z), 0.0, 0.0, list(z), list(z), 0, nd)
    if config.buffer_mode == "infinite":
        J_class = [_count_above(d["arr_pre_class"][k], config.quotas_class[k]) / A for k in range(ell)]
        J_cum = [_count_above(d["arr_pre_cum"][k], config.quotas_cum[k]) / A for k in range(ell)]
    else:
        lost = d["lost_stats"]
        J_class = [int(lost[k]) / A for k in range(ell)]
        J_cum = [int(lost[: k + 1].sum()) / A for k in range(ell)]
    J_class_dep = [_departure_side(d["dep_pre_class"][k], config.quotas_class[k], C) / A for k in range(ell)]
    J_cum_dep = [_departure_side(d["dep_pre_cum"][k], config.quotas_cum[k], C) / A for k in range(ell)]
    J = math.fsum(a * j for a, j in zip(config.alpha_class, J_class))
    J_bar = math.fsum(a * j for a, j in zip(config.alpha_cum, J_cum))
    return EstimateReport(J_class, J_cum, J, J_bar, J_class_dep, J_cum_dep, A, nd)


def _threads(threads):
    if threads is None:
        env = os.environ.get("BW_PLANNER_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def run_replications(config: SystemConfig, replications: int, *, threads=None, backend=None):
    """Independent replications over disjoint streams, in replication order."""
    n = _threads(threads)
    if n == 1 or replications == 1:
        return [run(config, r, backend=backend) for r in range(replications)]
    with ThreadPoolExecutor(max_workers=min(n, replications)) as pool:
        return list(pool.map(lambda r: run(config, r, backend=backend), range(replications)))


def merge_estimates(reports: Sequence[EstimateReport], confidence: float = 0.95) -> EstimateReport:
    """Mean over replications with Student-t half-widths (0 for one replication)."""
    R = len(reports)
    if R == 0:
        raise DomainError("nothing to merge")
    tq = stats.t.ppf(0.5 + confidence / 2, R - 1) if R > 1 else 0.0

    def agg(values):
        arr = np.asarray(values, dtype=float)
        mean = arr.mean(axis=0)
        hw = tq * arr.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros_like(mean)
        return mean.tolist(), hw.tolist()

    out, hws = {}, {}
    for name in ("J_class", "J_cum", "J", "J_bar", "J_class_dep", "J_cum_dep"):
        out[name], hws[name] = agg([getattr(r, name) for r in reports])
    return EstimateReport(
        **out,
        arrivals=sum(r.arrivals for r in reports),
        departures=sum(r.departures for r in reports),
        replications=R,
        halfwidth=hws,
    )


def estimate(config: SystemConfig, replications: int = 1, *, threads=None, backend=None) -> EstimateReport:
    trajs = run_replications(config, replications, threads=threads, backend=backend)
    return merge_estimates([estimate_J(t) for t in trajs])


def pre_arrival_distribution(trajectory: BufferTrajectory, k: int) -> np.ndarray:
    """Empirical law of the k-th cumulative content seen by arrivals of the
    first k classes (last entry: mass at or above the last level)."""
    h = trajectory.data["arr_pre_cum"][k].astype(float)
    total = h.sum()
    return h / total if total else h


def total_variation_geometric(empirical: np.ndarray, varsigma: float) -> float:
    """TV distance to the geometric law ``s**m (1-s)`` with the same overflow bin."""
    m = np.arange(len(empirical))
    geo = varsigma ** m * (1 - varsigma)
    geo[-1] = varsigma ** (len(empirical) - 1)
    return 0.5 * float(np.abs(empirical - geo).sum())


# --- pathwise audits -------------------------------------------------------


def _require_complete(trajectory):
    if not trajectory.complete:
        raise NotApplicable("pathwise audits need every event recorded (record=True, record_every=1)")


def _admitted_increments(trajectory):
    """Per-event admitted arrival length per class (n x ell)."""
    d = trajectory.data
    n, ell = len(d["rec_t"]), trajectory.ell
    inc = np.zeros((n, ell), dtype=np.int64)
    idx = np.flatnonzero((d["rec_kind"] == 0) & (d["rec_adm"] == 1))
    inc[idx, d["rec_cls"][idx]] = d["rec_len"][idx]
    return inc


@dataclass
class CrossingReport:
    level: int
    k: int
    cumulative: bool
    ups: int
    downs: int
    indicator: int
    max_violation: int
    window_exact: bool


def crossing_audit(trajectory: BufferTrajectory, m: int, k: int, *, cumulative: bool = False) -> CrossingReport:
    """Up-crossings of level ``m`` minus down-crossings equals ``1{Q >= m}`` after every event.

    For cumulative contents (and class 1) a departure crosses ``m`` downward
    iff the content before it lies in ``m, ..., m+C-1``; that window count is
    what is audited there.  For lower classes the priority drain removes a
    state-dependent amount, so actual downward passages are counted.
    """
    _require_complete(trajectory)
    if m < 1:
        raise DomainError("level must be at least 1")
    C = trajectory.config.C
    series = trajectory.q_cum[:, k] if cumulative else trajectory.q_class[:, k]
    post = np.asarray(series, dtype=np.int64)
    pre = np.concatenate(([0], post[:-1]))
    is_dep = trajectory.data["rec_kind"] == 1
    ups = (pre < m) & (post >= m)
    window_exact = cumulative or k == 0
    if window_exact:
        downs = is_dep & (pre >= m) & (pre <= m + C - 1)
    else:
        downs = (pre >= m) & (post < m)
    ind = (post >= m).astype(np.int64)
    if len(post) == 0:
        return CrossingReport(m, k, cumulative, 0, 0, 0, 0, window_exact)
    gap = np.cumsum(ups.astype(np.int64)) - np.cumsum(downs.astype(np.int64)) - ind
    return CrossingReport(
        m, k, cumulative, int(ups.sum()), int(downs.sum()), int(ind[-1]), int(np.abs(gap).max()), window_exact
    )


def cumulative_equivalence_check(trajectory: BufferTrajectory, config: Optional[SystemConfig] = None) -> int:
    """Max over events and levels of |single-queue replay - sum of class contents|.

    The replay feeds the admitted arrivals of the first k classes into one
    queue that loses ``min(content, C)`` at every departure epoch.
    """
    _require_complete(trajectory)
    config = config or trajectory.config
    C, ell = config.C, config.ell
    inc = _admitted_increments(trajectory).tolist()
    kinds = trajectory.data["rec_kind"].tolist()
    observed = trajectory.q_cum.tolist()
    q = [0] * ell
    worst = 0
    for i, kind in enumerate(kinds):
        row = inc[i]
        acc = 0
        for k in range(ell):
            acc += row[k]
            if kind == 1:
                q[k] = max(0, q[k] - C)
            else:
                q[k] += acc
            dev = abs(q[k] - observed[i][k])
            if dev > worst:
                worst = dev
    return worst


def reflection_check(trajectory: BufferTrajectory, k: int) -> int:
    """Max over events of |Q_k - (S_k - min(0, min S_k))| with S_k = arrivals - C * departures."""
    if trajectory.config.buffer_mode != "infinite":
        raise NotApplicable("the reflection identity needs unrejected arrivals (infinite mode)")
    _require_complete(trajectory)
    inc = _admitted_increments(trajectory)[:, : k + 1].sum(axis=1)
    is_dep = trajectory.data["rec_kind"] == 1
    S = np.cumsum(inc - trajectory.config.C * is_dep.astype(np.int64))
    if len(S) == 0:
        return 0
    floor = np.minimum(np.minimum.accumulate(S), 0)
    return int(np.abs(trajectory.q_cum[:, k] - (S - floor)).max())


def stability_probe(config: SystemConfig, windows: int = 8, replication: int = 0) -> dict:
    """Drift of offered work minus departure capacity per unit time.

    ``(A(t) - C D(t)) / t`` over ``windows`` geometrically growing prefixes of
    one run.  Advisory only: negative and settling means stable.
    """
    cfg = replace(config, buffer_mode="infinite", record=True, record_every=1, warmup_fraction=0.0)
    traj = run(cfg, replication)
    t = traj.data["rec_t"]
    if len(t) == 0:
        return {"windows": [], "drift": 0.0, "sign": 0, "trend": "flat", "final_content": 0}
    work = np.cumsum(np.where(traj.data["rec_kind"] == 0, traj.data["rec_len"], -config.C))
    n = len(t)
    cuts = sorted({max(1, int(n / 2 ** j)) for j in range(windows)})
    pts = [(float(t[c - 1]), float(work[c - 1] / t[c - 1]) if t[c - 1] > 0 else 0.0) for c in cuts]
    drift = pts[-1][1]
    spread = abs(pts[-1][1] - pts[0][1])
    trend = "settling" if len(pts) < 3 or abs(pts[-1][1] - pts[-2][1]) <= spread else "moving"
    return {
        "windows": [{"t": a, "drift": b} for a, b in pts],
        "drift": drift,
        "sign": int(np.sign(drift)),
        "trend": trend,
        "final_content": int(traj.q_cum[-1, -1]),
    }


# --- export ----------------------------------------------------------------


def write_trajectory_csv(trajectory: BufferTrajectory, path) -> None:
    """Columns: epoch_time, event_type, class, Q1..Ql, cumQ1..cumQl (class is 1-based)."""
    d, ell = trajectory.data, trajectory.ell
    header = ["epoch_time", "event_type", "class"]
    header += [f"Q{k + 1}" for k in range(ell)] + [f"cumQ{k + 1}" for k in range(ell)]
    qc, qu = trajectory.q_class, trajectory.q_cum
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(d["rec_t"])):
            if d["rec_kind"][i] == 1:
                kind, cls = "departure", ""
            else:
                kind = "arrival" if d["rec_adm"][i] else "rejected"
                cls = int(d["rec_cls"][i]) + 1
            w.writerow([repr(float(d["rec_t"][i])), kind, cls, *qc[i].tolist(), *qu[i].tolist()])
