"""Pure-Python kernels; same contracts as the compiled ``_ckernels``."""
import math

import numpy as np

_SPLIT = 134217729.0  # 2**27 + 1, Dekker splitting constant
_SPLIT_MAX = 2.0 ** 995  # above this the split itself would overflow


def _split(a):
    """``a = hi + lo`` with 26-bit halves; huge entries are split after scaling by 2**-28."""
    big = np.abs(a) > _SPLIT_MAX
    s = np.where(big, a * 2.0 ** -28, a)
    c = _SPLIT * s
    hi = c - (c - s)
    lo = s - hi
    return np.where(big, hi * 2.0 ** 28, hi), np.where(big, lo * 2.0 ** 28, lo)


def _two_product_err(a, b):
    """Exact rounding error of the elementwise products ``a * b``."""
    p = a * b
    ahi, alo = _split(a)
    bhi, blo = _split(b)
    return p, ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo


def takacs_f(r, C, n_max):
    """Coefficients of F(z) = R(z) / (R(z) - z) up to degree ``n_max``.

    Solves F(z)(R(z) - z) = R(z) term by term,
    ``f_n = (r_n + f_{n-1} - sum_{m<n} f_m r_{n-m}) / r_0``, where ``r`` is
    supported on multiples of ``C``.  Each right-hand side is summed with
    error-free products and ``math.fsum``.
    """
    r = np.ascontiguousarray(r, dtype=np.float64)
    f = np.empty(n_max + 1)
    f[0] = 1.0
    r0 = float(r[0])
    for n in range(1, n_max + 1):
        terms = [r[n], f[n - 1]]
        m = n - C
        if m >= 0:
            fm = f[m::-C]
            rr = r[C : n + 1 : C]
            p, e = _two_product_err(fm, rr)
            terms.extend((-p).tolist())
            terms.extend((-e).tolist())
        try:
            f[n] = math.fsum(terms) / r0
        except OverflowError:
            f[n] = math.inf
        if not math.isfinite(f[n]):
            f[n:] = math.inf
            break
    return f


def simulate_core(
    arr_t, arr_cls, arr_len, dep_t,
    ell, C, mode, quotas,
    horizon_kind, horizon, warmup,
    record, record_every, hist_levels,
):
    """Merge one arrival stream and one departure stream into buffer dynamics.

    ``mode``: 0 infinite, 1 finite per class, 2 finite cumulative.
    ``horizon_kind``: 0 arrivals, 1 departures, 2 events.  Statistics are
    collected once the horizon counter has reached ``warmup``.
    Departures are processed first on exact time ties.
    """
    arr_t = arr_t.tolist()
    arr_cls = arr_cls.tolist()
    arr_len = arr_len.tolist()
    dep_t = dep_t.tolist()
    quotas = [int(x) for x in quotas]
    n_a, n_d = len(arr_t), len(dep_t)
    H = hist_levels
    top = H - 1

    q = [0] * ell
    arr_pre_class = np.zeros((ell, H), dtype=np.int64)
    arr_pre_cum = np.zeros((ell, H), dtype=np.int64)
    dep_pre_class = np.zeros((ell, H), dtype=np.int64)
    dep_pre_cum = np.zeros((ell, H), dtype=np.int64)
    apc = arr_pre_class.tolist()
    apu = arr_pre_cum.tolist()
    dpc = dep_pre_class.tolist()
    dpu = dep_pre_cum.tolist()
    offered = [0] * ell
    offered_stats = [0] * ell
    lost_units = [0] * ell
    lost_length = [0] * ell
    lost_stats = [0] * ell
    max_class = [0] * ell
    max_cum = [0] * ell

    cap = (n_a + n_d) // record_every + 1 if record else 0
    rec_t = np.empty(cap)
    rec_kind = np.empty(cap, dtype=np.int8)
    rec_cls = np.empty(cap, dtype=np.int32)
    rec_len = np.empty(cap, dtype=np.int64)
    rec_adm = np.empty(cap, dtype=np.int8)
    rec_q = np.empty((cap, ell), dtype=np.int64)
    n_rec = 0

    ia = idp = 0
    n_events = n_arr = n_dep = 0
    ties = 0
    stats_on = warmup <= 0
    t_stats = 0.0
    n_dep_stats = 0
    t = 0.0
    while True:
        counter = (n_arr, n_dep, n_events)[horizon_kind]
        if counter >= horizon:
            break
        if not stats_on and counter >= warmup:
            stats_on = True
            t_stats = t
        ta = arr_t[ia] if ia < n_a else math.inf
        td = dep_t[idp] if idp < n_d else math.inf
        if ta == math.inf and td == math.inf:
            break
        if td <= ta:
            if td == ta:
                ties += 1
            t = td
            idp += 1
            n_dep += 1
            if stats_on:
                n_dep_stats += 1
                cum = 0
                for k in range(ell):
                    cum += q[k]
                    dpc[k][min(q[k], top)] += 1
                    dpu[k][min(cum, top)] += 1
            rem = C
            for k in range(ell):
                if rem == 0:
                    break
                take = q[k] if q[k] < rem else rem
                q[k] -= take
                rem -= take
            kind, cls, length, adm = 1, -1, 0, 1
        else:
            t = ta
            cls = arr_cls[ia]
            length = arr_len[ia]
            ia += 1
            n_arr += 1
            offered[cls] += 1
            if stats_on:
                offered_stats[cls] += 1
                apc[cls][min(q[cls], top)] += 1
                cum = 0
                for k in range(ell):
                    cum += q[k]
                    if k >= cls:
                        apu[k][min(cum, top)] += 1
            adm = 1
            if mode == 1:
                if q[cls] + length > quotas[cls]:
                    adm = 0
            elif mode == 2:
                cum = 0
                for k in range(ell):
                    cum += q[k]
                    if k >= cls and cum + length > quotas[k]:
                        adm = 0
                        break
            if adm:
                q[cls] += length
            else:
                lost_units[cls] += 1
                lost_length[cls] += length
                if stats_on:
                    lost_stats[cls] += 1
            kind = 0
        n_events += 1
        cum = 0
        for k in range(ell):
            cum += q[k]
            if q[k] > max_class[k]:
                max_class[k] = q[k]
            if cum > max_cum[k]:
                max_cum[k] = cum
        if record and (n_events - 1) % record_every == 0:
            rec_t[n_rec] = t
            rec_kind[n_rec] = kind
            rec_cls[n_rec] = cls
            rec_len[n_rec] = length
            rec_adm[n_rec] = adm
            rec_q[n_rec, :] = q
            n_rec += 1

    if not stats_on:
        t_stats = t
    return {
        "arr_pre_class": np.array(apc, dtype=np.int64).reshape(ell, H),
        "arr_pre_cum": np.array(apu, dtype=np.int64).reshape(ell, H),
        "dep_pre_class": np.array(dpc, dtype=np.int64).reshape(ell, H),
        "dep_pre_cum": np.array(dpu, dtype=np.int64).reshape(ell, H),
        "offered": np.array(offered, dtype=np.int64),
        "offered_stats": np.array(offered_stats, dtype=np.int64),
        "lost_units": np.array(lost_units, dtype=np.int64),
        "lost_length": np.array(lost_length, dtype=np.int64),
        "lost_stats": np.array(lost_stats, dtype=np.int64),
        "max_class": np.array(max_class, dtype=np.int64),
        "max_cum": np.array(max_cum, dtype=np.int64),
        "final_q": np.array(q, dtype=np.int64),
        "n_events": n_events,
        "n_arrivals": n_arr,
        "n_departures": n_dep,
        "n_departures_stats": n_dep_stats,
        "t_end": t,
        "t_stats": t_stats,
        "ties": ties,
        "rec_t": rec_t[:n_rec],
        "rec_kind": rec_kind[:n_rec],
        "rec_cls": rec_cls[:n_rec],
        "rec_len": rec_len[:n_rec],
        "rec_adm": rec_adm[:n_rec],
        "rec_q": rec_q[:n_rec],
    }
