"""Hot loops for batched matching runs.

Every kernel exists as a numba ``@njit`` function and as a numpy routine
that vectorizes across trials. ``accel=None`` picks numba when it is
available (see :mod:`oblimatch._accel`); ``accel=False`` forces numpy.
Both paths read the same inputs and apply the same tie rules, so their
outputs are identical.

Conventions: ``mate[v] == -1`` means unmatched; ``alive[v] == False`` means
vertex ``v`` has been removed from the graph and never takes part.
"""

from __future__ import annotations

import numpy as np

from ._accel import njit, use_numba

__all__ = [
    "vertex_greedy",
    "pair_greedy",
    "max_matching_dp",
]

# Numpy fallbacks cap their working set at roughly this many float64 cells.
_CHUNK_CELLS = 1 << 22


# --------------------------------------------------------------------------
# vertex-iterative greedy: RDO, MRG, Ranking, IRP
# --------------------------------------------------------------------------


@njit(cache=True)
def _vertex_greedy_shared_nb(indptr, indices, keys, orders, alive):
    n_trials, n = orders.shape
    mates = np.full((n_trials, n), -1, dtype=np.int64)
    for t in range(n_trials):
        mate = mates[t]
        for p in range(n):
            u = orders[t, p]
            if not alive[u] or mate[u] >= 0:
                continue
            best = -1
            best_key = np.inf
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                if alive[v] and mate[v] < 0 and keys[e] < best_key:
                    best_key = keys[e]
                    best = v
            if best >= 0:
                mate[u] = best
                mate[best] = u
    return mates


@njit(cache=True)
def _vertex_greedy_per_trial_nb(indptr, indices, keys, orders, alive):
    n_trials, n = orders.shape
    mates = np.full((n_trials, n), -1, dtype=np.int64)
    for t in range(n_trials):
        mate = mates[t]
        for p in range(n):
            u = orders[t, p]
            if not alive[u] or mate[u] >= 0:
                continue
            best = -1
            best_key = np.inf
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                if alive[v] and mate[v] < 0 and keys[t, e] < best_key:
                    best_key = keys[t, e]
                    best = v
            if best >= 0:
                mate[u] = best
                mate[best] = u
    return mates


def _padded_layout(indptr: np.ndarray, n: int):
    """Row/column slots mapping CSR entries onto an (n, max_degree) grid."""
    deg = np.diff(indptr)
    width = max(int(deg.max()) if n else 0, 1)
    rows = np.repeat(np.arange(n), deg)
    cols = np.arange(indptr[-1]) - np.repeat(indptr[:-1], deg)
    return rows, cols, width


def _vertex_greedy_numpy(indptr, indices, keys, orders, alive):
    n_trials, n = orders.shape
    mates = np.full((n_trials, n), -1, dtype=np.int64)
    if n == 0 or n_trials == 0:
        return mates
    rows, cols, width = _padded_layout(indptr, n)
    nbr = np.full((n, width), -1, dtype=np.int64)
    nbr[rows, cols] = indices
    per_trial = keys.ndim == 2
    if not per_trial:
        key_pad = np.full((n, width), np.inf)
        key_pad[rows, cols] = keys
    chunk = max(1, _CHUNK_CELLS // max(1, n * width if per_trial else width))
    alive_ext = np.append(alive, False)  # index -1 (padding) reads as dead
    for lo in range(0, n_trials, chunk):
        hi = min(n_trials, lo + chunk)
        t_idx = np.arange(hi - lo)
        mate = np.full((hi - lo, n + 1), -1, dtype=np.int64)  # column n absorbs padding
        if per_trial:
            kp = np.full((hi - lo, n, width), np.inf)
            kp[:, rows, cols] = keys[lo:hi]
        for p in range(n):
            u = orders[lo:hi, p]
            deciding = alive[u] & (mate[t_idx, u] < 0)
            cand = nbr[u]
            cand_key = kp[t_idx, u] if per_trial else key_pad[u]
            free = alive_ext[cand] & (np.take_along_axis(mate, np.where(cand < 0, n, cand), 1) < 0)
            masked = np.where(free, cand_key, np.inf)
            j = np.argmin(masked, axis=1)
            ok = deciding & np.isfinite(masked[t_idx, j])
            if not ok.any():
                continue
            tt = t_idx[ok]
            uu = u[ok]
            vv = cand[ok, j[ok]]
            mate[tt, uu] = vv
            mate[tt, vv] = uu
        mates[lo:hi] = mate[:, :n]
    return mates


def vertex_greedy(
    indptr: np.ndarray,
    indices: np.ndarray,
    keys: np.ndarray,
    orders: np.ndarray,
    alive: np.ndarray | None = None,
    *,
    accel: bool | None = None,
) -> np.ndarray:
    """Run the vertex-iterative greedy for a batch of decision orders.

    Vertices act in each row of ``orders``. An unmatched, alive vertex ``u``
    matches the alive, unmatched neighbor with the smallest key among its
    adjacency entries (``keys`` aligned with ``indices``; ties go to the
    earlier adjacency entry). ``keys`` is shared across trials when 1-D and
    per-trial when 2-D.

    Returns an ``(n_trials, n)`` array of mates.
    """
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    keys = np.ascontiguousarray(keys, dtype=np.float64)
    orders = np.ascontiguousarray(np.atleast_2d(orders), dtype=np.int64)
    n = len(indptr) - 1
    if alive is None:
        alive = np.ones(n, dtype=np.bool_)
    alive = np.ascontiguousarray(alive, dtype=np.bool_)
    if keys.ndim == 2 and keys.shape[0] != orders.shape[0]:
        raise ValueError("per-trial keys must have one row per decision order")
    if use_numba(accel):
        if keys.ndim == 1:
            return _vertex_greedy_shared_nb(indptr, indices, keys, orders, alive)
        return _vertex_greedy_per_trial_nb(indptr, indices, keys, orders, alive)
    return _vertex_greedy_numpy(indptr, indices, keys, orders, alive)


# --------------------------------------------------------------------------
# pair-order greedy: Perturbed Greedy, weight greedy, random pair order
# --------------------------------------------------------------------------


@njit(cache=True)
def _pair_greedy_nb(eu, ev, orders, alive, n):
    n_trials, m = orders.shape
    mates = np.full((n_trials, n), -1, dtype=np.int64)
    for t in range(n_trials):
        mate = mates[t]
        for p in range(m):
            e = orders[t, p]
            a = eu[e]
            b = ev[e]
            if alive[a] and alive[b] and mate[a] < 0 and mate[b] < 0:
                mate[a] = b
                mate[b] = a
    return mates


def _pair_greedy_numpy(eu, ev, orders, alive, n):
    n_trials, m = orders.shape
    mates = np.full((n_trials, n), -1, dtype=np.int64)
    if m == 0 or n_trials == 0:
        return mates
    ok_edge = alive[eu] & alive[ev]
    t_idx = np.arange(n_trials)
    for p in range(m):
        e = orders[:, p]
        a = eu[e]
        b = ev[e]
        ok = ok_edge[e] & (mates[t_idx, a] < 0) & (mates[t_idx, b] < 0)
        if not ok.any():
            continue
        tt = t_idx[ok]
        mates[tt, a[ok]] = b[ok]
        mates[tt, b[ok]] = a[ok]
    return mates


def pair_greedy(
    eu: np.ndarray,
    ev: np.ndarray,
    orders: np.ndarray,
    n: int,
    alive: np.ndarray | None = None,
    *,
    accel: bool | None = None,
) -> np.ndarray:
    """Scan edges in each row of ``orders`` and match both-free endpoints.

    ``orders`` holds edge indices into ``(eu, ev)``. Non-edges never change
    the matching, so only edges need to be listed.
    """
    eu = np.ascontiguousarray(eu, dtype=np.int64)
    ev = np.ascontiguousarray(ev, dtype=np.int64)
    orders = np.ascontiguousarray(np.atleast_2d(orders), dtype=np.int64)
    if alive is None:
        alive = np.ones(n, dtype=np.bool_)
    alive = np.ascontiguousarray(alive, dtype=np.bool_)
    if use_numba(accel):
        return _pair_greedy_nb(eu, ev, orders, alive, int(n))
    return _pair_greedy_numpy(eu, ev, orders, alive, int(n))


# --------------------------------------------------------------------------
# exhaustive maximum-weight matching by subset DP
# --------------------------------------------------------------------------


@njit(cache=True)
def _matching_dp_nb(wmat, adj):
    n = wmat.shape[0]
    size = 1 << n
    best = np.zeros(size)
    choice = np.full(size, -1, dtype=np.int64)
    for mask in range(1, size):
        i = 0
        while not (mask >> i) & 1:
            i += 1
        rest = mask ^ (1 << i)
        val = best[rest]
        pick = -1
        for j in range(i + 1, n):
            if (rest >> j) & 1 and adj[i, j]:
                cand = wmat[i, j] + best[rest ^ (1 << j)]
                if cand > val:
                    val = cand
                    pick = j
        best[mask] = val
        choice[mask] = pick
    return best, choice


def _matching_dp_numpy(wmat, adj):
    n = wmat.shape[0]
    size = 1 << n
    best = np.zeros(size)
    choice = np.full(size, -1, dtype=np.int64)
    # Masks whose lowest set bit is i only depend on masks built from bits > i.
    for i in range(n - 1, -1, -1):
        rest = np.arange(1 << (n - i - 1), dtype=np.int64) << (i + 1)
        mask = rest | (1 << i)
        val = best[rest].copy()
        pick = np.full(rest.shape, -1, dtype=np.int64)
        for j in range(i + 1, n):
            if not adj[i, j]:
                continue
            has_j = ((rest >> j) & 1).astype(bool)
            cand = wmat[i, j] + best[rest ^ (1 << j)]
            better = has_j & (cand > val)
            val = np.where(better, cand, val)
            pick = np.where(better, j, pick)
        best[mask] = val
        choice[mask] = pick
    return best, choice


def max_matching_dp(
    wmat: np.ndarray, adj: np.ndarray, *, accel: bool | None = None
) -> tuple[float, np.ndarray]:
    """Exact maximum-weight matching by dynamic programming over vertex subsets.

    ``wmat`` is the symmetric weight table and ``adj`` the boolean adjacency
    matrix. For the lowest vertex of each subset the recursion first tries
    leaving it unmatched, then pairs it with higher neighbors in index
    order, keeping a candidate only when strictly better. Runs in
    ``O(2^n n)``.

    Returns the optimum value and the mate array of one optimal matching.
    """
    wmat = np.ascontiguousarray(wmat, dtype=np.float64)
    adj = np.ascontiguousarray(adj, dtype=np.bool_)
    n = wmat.shape[0]
    mate = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return 0.0, mate
    if use_numba(accel):
        best, choice = _matching_dp_nb(wmat, adj)
    else:
        best, choice = _matching_dp_numpy(wmat, adj)
    mask = (1 << n) - 1
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = int(choice[mask])
        mask ^= 1 << i
        if j >= 0:
            mate[i] = j
            mate[j] = i
            mask ^= 1 << j
    return float(best[(1 << n) - 1]), mate
