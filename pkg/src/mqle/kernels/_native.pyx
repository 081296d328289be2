# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the two order-dependent hot loops.

Kept operation-for-operation in step with mqle.kernels.pure: the Gibbs sweep
is bit-identical to the fallback (same SplitMix64 stream, same IEEE-double
expression order; the build disables FP contraction), the SGD epoch draws
identical cells and agrees with the fallback to rounding error.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t, uint64_t

cnp.import_array()

cdef extern from *:
    """
    #define SM64_GAMMA 0x9E3779B97F4A7C15ULL
    static inline uint64_t sm64_next(uint64_t *state) {
        uint64_t z = (*state += SM64_GAMMA);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    """
    uint64_t sm64_next(uint64_t *state) nogil

cdef double U53 = 1.0 / 9007199254740992.0


def gibbs_sweep(
    cnp.ndarray[int32_t, ndim=1] doc_ids,
    cnp.ndarray[int32_t, ndim=1] tokens,
    cnp.ndarray[int32_t, ndim=1] z,
    cnp.ndarray[int64_t, ndim=2] n_iz,
    cnp.ndarray[int64_t, ndim=2] n_zv,
    cnp.ndarray[int64_t, ndim=1] n_z,
    double alpha,
    double eta,
    object state,
):
    """One collapsed-Gibbs sweep over all token positions, in place."""
    cdef int n_positions = z.shape[0]
    cdef int n_topics = n_iz.shape[1]
    cdef int vocab = n_zv.shape[1]
    cdef double eta_total = vocab * eta
    cdef uint64_t s = <uint64_t> (<object> state & 0xFFFFFFFFFFFFFFFF)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] cum_arr = np.empty(n_topics)
    cdef double[:] cum = cum_arr
    cdef int32_t[:] docs = doc_ids
    cdef int32_t[:] toks = tokens
    cdef int32_t[:] zs = z
    cdef int64_t[:, :] iz = n_iz
    cdef int64_t[:, :] zv = n_zv
    cdef int64_t[:] nz = n_z

    cdef int t, i, v, old, k, new
    cdef double w, total, r
    cdef uint64_t x

    with nogil:
        for t in range(n_positions):
            i = docs[t]
            v = toks[t]
            old = zs[t]
            iz[i, old] -= 1
            zv[old, v] -= 1
            nz[old] -= 1

            total = 0.0
            for k in range(n_topics):
                w = (zv[k, v] + eta) / (nz[k] + eta_total) * (iz[i, k] + alpha)
                total += w
                cum[k] = total

            x = sm64_next(&s)
            r = ((x >> 11) * U53) * total

            new = 0
            while new < n_topics - 1 and cum[new] <= r:
                new += 1

            iz[i, new] += 1
            zv[new, v] += 1
            nz[new] += 1
            zs[t] = new

    return int(s)


def sgd_epoch(
    cnp.ndarray[cnp.float64_t, ndim=2] p,
    cnp.ndarray[cnp.float64_t, ndim=2] vt,
    cnp.ndarray[int32_t, ndim=1] pos_rows,
    cnp.ndarray[int32_t, ndim=1] pos_cols,
    cnp.ndarray[int64_t, ndim=1] row_ptr,
    cnp.ndarray[int32_t, ndim=1] blocked_cols,
    double lr,
    double reg,
    int neg_per_pos,
    object state,
):
    """One projected-SGD epoch over shuffled 1-cells plus sampled 0-cells."""
    cdef int n_users = p.shape[0]
    cdef int n_photos = vt.shape[0]
    cdef int n_factors = p.shape[1]
    cdef int nnz = pos_rows.shape[0]
    cdef uint64_t s = <uint64_t> (<object> state & 0xFFFFFFFFFFFFFFFF)

    cdef cnp.ndarray[int64_t, ndim=1] order_arr = np.arange(nnz, dtype=np.int64)
    cdef int64_t[:] order = order_arr
    cdef double[:, :] pm = p
    cdef double[:, :] vm = vt
    cdef int32_t[:] rows = pos_rows
    cdef int32_t[:] cols = pos_cols
    cdef int64_t[:] ptr = row_ptr
    cdef int32_t[:] bcols = blocked_cols

    cdef cnp.ndarray[cnp.float64_t, ndim=1] pu_old_arr = np.empty(n_factors)
    cdef double[:] pu_old = pu_old_arr

    cdef int64_t i, j64, cell, lo, hi, mid
    cdef int t, rep, attempt, u, j, l
    cdef double err, pred
    cdef uint64_t x
    cdef bint blocked

    with nogil:
        for i in range(nnz - 1, 0, -1):
            x = sm64_next(&s)
            j64 = <int64_t> (x % <uint64_t> (i + 1))
            cell = order[i]
            order[i] = order[j64]
            order[j64] = cell

        for t in range(nnz):
            cell = order[t]
            u = rows[cell]
            j = cols[cell]
            _update(pm, vm, pu_old, u, j, 1.0, lr, reg, n_factors)

            for rep in range(neg_per_pos):
                for attempt in range(100):
                    x = sm64_next(&s)
                    u = <int> ((x >> 32) % <uint64_t> n_users)
                    j = <int> (x % <uint64_t> n_photos)
                    # binary search j in the row's sorted blocked columns
                    lo = ptr[u]
                    hi = ptr[u + 1]
                    blocked = False
                    while lo < hi:
                        mid = (lo + hi) >> 1
                        if bcols[mid] < j:
                            lo = mid + 1
                        elif bcols[mid] > j:
                            hi = mid
                        else:
                            blocked = True
                            break
                    if not blocked:
                        _update(pm, vm, pu_old, u, j, 0.0, lr, reg, n_factors)
                        break

    return int(s)


cdef inline void _update(
    double[:, :] pm,
    double[:, :] vm,
    double[:] pu_old,
    int u,
    int j,
    double target,
    double lr,
    double reg,
    int n_factors,
) nogil:
    cdef int l
    cdef double pred = 0.0
    cdef double err, val
    for l in range(n_factors):
        pred += pm[u, l] * vm[j, l]
    err = target - pred
    for l in range(n_factors):
        pu_old[l] = pm[u, l]
        val = pm[u, l] + lr * (err * vm[j, l] - reg * pm[u, l])
        pm[u, l] = val if val > 0.0 else 0.0
    for l in range(n_factors):
        val = vm[j, l] + lr * (err * pu_old[l] - reg * vm[j, l])
        vm[j, l] = val if val > 0.0 else 0.0
