# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contracts as ``_pykernels``.

Both loops release the GIL so replications can run on threads.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport fma, isfinite, INFINITY

cnp.import_array()


def takacs_f(r_in, long C, long n_max):
    """Coefficients of F(z) = R(z) / (R(z) - z) up to degree ``n_max``.

    Each right-hand side ``r_n + f_{n-1} - sum f_m r_{n-m}`` is accumulated
    with TwoSum / FMA-based TwoProduct (Ogita-Rump-Oishi Dot2).
    """
    cdef double[::1] r = np.ascontiguousarray(r_in, dtype=np.float64)
    f_arr = np.empty(n_max + 1)
    cdef double[::1] f = f_arr
    cdef long n, m, j
    cdef double hi, lo, p, pe, x, t, z, r0 = r[0]
    f[0] = 1.0
    with nogil:
        for n in range(1, n_max + 1):
            hi = r[n]
            lo = 0.0
            x = f[n - 1]
            t = hi + x
            z = t - hi
            lo += (hi - (t - z)) + (x - z)
            hi = t
            m = n - C
            j = C
            while m >= 0:
                p = f[m] * r[j]
                pe = fma(f[m], r[j], -p)
                x = -p
                t = hi + x
                z = t - hi
                lo += (hi - (t - z)) + (x - z)
                hi = t
                lo -= pe
                m -= C
                j += C
            f[n] = (hi + lo) / r0
            if not isfinite(f[n]):
                for m in range(n, n_max + 1):
                    f[m] = INFINITY
                break
    return f_arr


def simulate_core(
    arr_t_in, arr_cls_in, arr_len_in, dep_t_in,
    int ell, long C, int mode, quotas_in,
    int horizon_kind, long long horizon, long long warmup,
    bint record, long long record_every, long hist_levels,
):
    cdef double[::1] arr_t = np.ascontiguousarray(arr_t_in, dtype=np.float64)
    cdef int[::1] arr_cls = np.ascontiguousarray(arr_cls_in, dtype=np.int32)
    cdef long long[::1] arr_len = np.ascontiguousarray(arr_len_in, dtype=np.int64)
    cdef double[::1] dep_t = np.ascontiguousarray(dep_t_in, dtype=np.float64)
    cdef long long[::1] quotas = np.ascontiguousarray(quotas_in, dtype=np.int64)
    cdef long long n_a = arr_t.shape[0], n_d = dep_t.shape[0]
    cdef long H = hist_levels, top = hist_levels - 1

    out = {}
    a_apc = np.zeros((ell, H), dtype=np.int64)
    a_apu = np.zeros((ell, H), dtype=np.int64)
    a_dpc = np.zeros((ell, H), dtype=np.int64)
    a_dpu = np.zeros((ell, H), dtype=np.int64)
    cdef long long[:, ::1] apc = a_apc
    cdef long long[:, ::1] apu = a_apu
    cdef long long[:, ::1] dpc = a_dpc
    cdef long long[:, ::1] dpu = a_dpu
    names = ("final_q", "offered", "offered_stats", "lost_units", "lost_length",
             "lost_stats", "max_class", "max_cum")
    vecs = {name: np.zeros(ell, dtype=np.int64) for name in names}
    cdef long long[::1] q = vecs["final_q"]
    cdef long long[::1] offered = vecs["offered"]
    cdef long long[::1] offered_stats = vecs["offered_stats"]
    cdef long long[::1] lost_units = vecs["lost_units"]
    cdef long long[::1] lost_length = vecs["lost_length"]
    cdef long long[::1] lost_stats = vecs["lost_stats"]
    cdef long long[::1] max_class = vecs["max_class"]
    cdef long long[::1] max_cum = vecs["max_cum"]

    cdef long long cap = (n_a + n_d) // record_every + 1 if record else 0
    a_rt = np.empty(cap)
    a_rk = np.empty(cap, dtype=np.int8)
    a_rc = np.empty(cap, dtype=np.int32)
    a_rl = np.empty(cap, dtype=np.int64)
    a_ra = np.empty(cap, dtype=np.int8)
    a_rq = np.empty((cap, ell), dtype=np.int64)
    cdef double[::1] rec_t = a_rt
    cdef signed char[::1] rec_kind = a_rk
    cdef int[::1] rec_cls = a_rc
    cdef long long[::1] rec_len = a_rl
    cdef signed char[::1] rec_adm = a_ra
    cdef long long[:, ::1] rec_q = a_rq

    cdef long long n_rec = 0, ia = 0, idp = 0
    cdef long long n_events = 0, n_arr = 0, n_dep = 0, ties = 0, n_dep_stats = 0
    cdef long long counter, cum, take, rem, length
    cdef bint stats_on = warmup <= 0
    cdef double t = 0.0, t_stats = 0.0, ta, td
    cdef int k, cls, kind, adm

    with nogil:
        while True:
            if horizon_kind == 0:
                counter = n_arr
            elif horizon_kind == 1:
                counter = n_dep
            else:
                counter = n_events
            if counter >= horizon:
                break
            if not stats_on and counter >= warmup:
                stats_on = True
                t_stats = t
            ta = arr_t[ia] if ia < n_a else INFINITY
            td = dep_t[idp] if idp < n_d else INFINITY
            if ta == INFINITY and td == INFINITY:
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
                        dpc[k, q[k] if q[k] < top else top] += 1
                        dpu[k, cum if cum < top else top] += 1
                rem = C
                for k in range(ell):
                    if rem == 0:
                        break
                    take = q[k] if q[k] < rem else rem
                    q[k] -= take
                    rem -= take
                kind = 1
                cls = -1
                length = 0
                adm = 1
            else:
                t = ta
                cls = arr_cls[ia]
                length = arr_len[ia]
                ia += 1
                n_arr += 1
                offered[cls] += 1
                if stats_on:
                    offered_stats[cls] += 1
                    apc[cls, q[cls] if q[cls] < top else top] += 1
                    cum = 0
                    for k in range(ell):
                        cum += q[k]
                        if k >= cls:
                            apu[k, cum if cum < top else top] += 1
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
                for k in range(ell):
                    rec_q[n_rec, k] = q[k]
                n_rec += 1
        if not stats_on:
            t_stats = t

    out.update(vecs)
    out.update({
        "arr_pre_class": a_apc,
        "arr_pre_cum": a_apu,
        "dep_pre_class": a_dpc,
        "dep_pre_cum": a_dpu,
        "n_events": n_events,
        "n_arrivals": n_arr,
        "n_departures": n_dep,
        "n_departures_stats": n_dep_stats,
        "t_end": t,
        "t_stats": t_stats,
        "ties": ties,
        "rec_t": a_rt[:n_rec],
        "rec_kind": a_rk[:n_rec],
        "rec_cls": a_rc[:n_rec],
        "rec_len": a_rl[:n_rec],
        "rec_adm": a_ra[:n_rec],
        "rec_q": a_rq[:n_rec],
    })
    return out
