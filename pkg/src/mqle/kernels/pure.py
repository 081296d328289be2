"""Pure-Python kernels: the fallback when the compiled extension is absent.

The Gibbs sweep mirrors the compiled kernel operation-for-operation (scalar
IEEE-double arithmetic, shared SplitMix64 stream), so both paths produce
bit-identical topic assignments. The SGD epoch uses numpy dot products for
speed; it draws the same cells in the same order as the compiled kernel but
its float results agree only to rounding error, not bitwise.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_U53 = 1.0 / 9007199254740992.0


def gibbs_sweep(doc_ids, tokens, z, n_iz, n_zv, n_z, alpha, eta, state):
    """One collapsed-Gibbs sweep over all token positions, in place.

    doc_ids, tokens, z: int32 arrays of length n_positions.
    n_iz (docs x topics), n_zv (topics x vocab), n_z (topics): int64 counts.
    Returns the advanced SplitMix64 state.
    """
    n_topics = n_iz.shape[1]
    vocab = n_zv.shape[1]
    eta_total = vocab * eta

    docs = doc_ids.tolist()
    toks = tokens.tolist()
    zs = z.tolist()
    iz = n_iz.tolist()
    zv = n_zv.tolist()
    nz = n_z.tolist()

    cum = [0.0] * n_topics
    s = state & MASK64
    for t in range(len(zs)):
        i = docs[t]
        v = toks[t]
        old = zs[t]
        iz_i = iz[i]
        iz_i[old] -= 1
        zv[old][v] -= 1
        nz[old] -= 1

        total = 0.0
        for k in range(n_topics):
            w = (zv[k][v] + eta) / (nz[k] + eta_total) * (iz_i[k] + alpha)
            total += w
            cum[k] = total

        s = (s + 0x9E3779B97F4A7C15) & MASK64
        x = s
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
        x = (x ^ (x >> 31)) & MASK64
        r = ((x >> 11) * _U53) * total

        new = 0
        while new < n_topics - 1 and cum[new] <= r:
            new += 1

        iz_i[new] += 1
        zv[new][v] += 1
        nz[new] += 1
        zs[t] = new

    z[:] = zs
    n_iz[:] = iz
    n_zv[:] = zv
    n_z[:] = nz
    return s


def sgd_epoch(
    p,          # (n_users, L) float64, updated in place
    vt,         # (n_photos, L) float64, updated in place (transposed photo factors)
    pos_rows,   # (nnz,) int32 user index per observed cell
    pos_cols,   # (nnz,) int32 photo index per observed cell
    row_ptr,    # (n_users+1,) int64 CSR pointer over blocked cells
    blocked_cols,  # sorted int32 column indices of blocked cells, per CSR row
    lr,
    reg,
    neg_per_pos,
    state,
):
    """One projected-SGD epoch: shuffled observed 1-cells, each followed by
    neg_per_pos rejection-sampled 0-cells; factors clamped at zero after
    every update. Returns the advanced SplitMix64 state.
    """
    n_users = p.shape[0]
    n_photos = vt.shape[0]
    nnz = pos_rows.shape[0]

    order = np.arange(nnz, dtype=np.int64)
    s = state & MASK64
    # Fisher-Yates, identical to the compiled kernel
    for i in range(nnz - 1, 0, -1):
        s = (s + 0x9E3779B97F4A7C15) & MASK64
        x = s
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
        x = (x ^ (x >> 31)) & MASK64
        j = x % (i + 1)
        order[i], order[j] = order[j], order[i]

    def is_blocked(u: int, j: int) -> bool:
        lo, hi = row_ptr[u], row_ptr[u + 1]
        pos = np.searchsorted(blocked_cols[lo:hi], j)
        return pos < hi - lo and blocked_cols[lo + pos] == j

    # scratch buffers keep the per-cell update allocation-free
    pu_old = np.empty(p.shape[1])
    scratch = np.empty(p.shape[1])
    decay = 1.0 - lr * reg

    def update(u: int, j: int, target: float):
        # pu += lr*(err*vj - reg*pu) written as pu*decay + (lr*err)*vj
        pu = p[u]
        vj = vt[j]
        err_lr = lr * (target - pu @ vj)
        np.copyto(pu_old, pu)
        pu *= decay
        np.multiply(vj, err_lr, out=scratch)
        pu += scratch
        np.maximum(pu, 0.0, out=pu)
        vj *= decay
        np.multiply(pu_old, err_lr, out=scratch)
        vj += scratch
        np.maximum(vj, 0.0, out=vj)

    for t in range(nnz):
        cell = order[t]
        update(int(pos_rows[cell]), int(pos_cols[cell]), 1.0)
        for _ in range(neg_per_pos):
            # rejection-sample a zero cell; capped to keep the loop total
            for _attempt in range(100):
                s = (s + 0x9E3779B97F4A7C15) & MASK64
                x = s
                x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
                x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
                x = (x ^ (x >> 31)) & MASK64
                u = (x >> 32) % n_users
                j = x % n_photos
                if not is_blocked(u, j):
                    update(int(u), int(j), 0.0)
                    break
    return s
