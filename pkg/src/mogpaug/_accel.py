"""Hot inner loops with a numba path and a pure-numpy fallback.

The backend is chosen once at import time.  Set ``MOGPAUG_BACKEND=numpy`` to
force the fallback; the numba path is used whenever numba imports cleanly and
the variable is unset or ``numba``.  Both paths are importable explicitly as
``numba_impl`` / ``numpy_impl`` attributes for benchmarking and cross-checks.
"""

import os
import warnings

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_requested = os.environ.get("MOGPAUG_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    warnings.warn(f"unknown MOGPAUG_BACKEND={_requested!r}, using numpy")
    _requested = "numpy"
BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


# -- numpy reference path ---------------------------------------------------

def _np_pairwise_distances(X1, X2):
    out = np.empty((X1.shape[0], X2.shape[0]))
    for i in range(X1.shape[0]):
        d = X2 - X1[i]
        out[i] = np.sqrt(np.sum(d * d, axis=1))
    return out


def _np_self_distances(X):
    n = X.shape[0]
    out = np.zeros((n, n))
    for i in range(n - 1):
        d = X[i + 1:] - X[i]
        row = np.sqrt(np.sum(d * d, axis=1))
        out[i, i + 1:] = row
        out[i + 1:, i] = row
    return out


def _np_accumulate_stacked(coef, kx, out1, pt1, out2, pt2, out):
    out += coef[np.ix_(out1, out2)] * kx[np.ix_(pt1, pt2)]


def _np_contract_stacked(W, coef, kx, out_idx, pt_idx, n_points, n_outputs):
    import scipy.sparse

    n = W.shape[0]
    ones = np.ones(n)
    rows = np.arange(n)
    s_out = scipy.sparse.csr_matrix((ones, (rows, out_idx)), shape=(n, n_outputs))
    s_pt = scipy.sparse.csr_matrix((ones, (rows, pt_idx)), shape=(n, n_points))
    wb = W * coef[np.ix_(out_idx, out_idx)]
    wk = W * kx[np.ix_(pt_idx, pt_idx)]
    # S^T W S, written as (S^T (S^T W)^T)^T to keep the sparse factor on the left
    P = np.asarray(s_pt.T @ np.asarray(s_pt.T @ wb).T).T
    C = np.asarray(s_out.T @ np.asarray(s_out.T @ wk).T).T
    return P, C


def _np_knn(train, queries, k):
    nq = queries.shape[0]
    idx = np.empty((nq, k), dtype=np.int64)
    dist = np.empty((nq, k))
    for q in range(nq):
        d = train - queries[q]
        sq = np.sum(d * d, axis=1)
        if k < sq.shape[0]:
            kth = np.partition(sq, k - 1)[k - 1]
            cand = np.flatnonzero(sq <= kth)
        else:
            cand = np.arange(sq.shape[0])
        # candidates are already in ascending index order, so a stable sort
        # on distance breaks ties by lower index
        order = cand[np.argsort(sq[cand], kind="stable")][:k]
        idx[q] = order
        dist[q] = np.sqrt(sq[order])
    return idx, dist


# -- numba path ---------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_pairwise_distances(X1, X2):
        n1, n2, dim = X1.shape[0], X2.shape[0], X1.shape[1]
        out = np.empty((n1, n2))
        for i in range(n1):
            for j in range(n2):
                s = 0.0
                for d in range(dim):
                    t = X1[i, d] - X2[j, d]
                    s += t * t
                out[i, j] = np.sqrt(s)
        return out

    @njit(cache=True)
    def _nb_self_distances(X):
        n, dim = X.shape[0], X.shape[1]
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                s = 0.0
                for d in range(dim):
                    t = X[i, d] - X[j, d]
                    s += t * t
                r = np.sqrt(s)
                out[i, j] = r
                out[j, i] = r
        return out

    @njit(cache=True)
    def _nb_accumulate_stacked(coef, kx, out1, pt1, out2, pt2, out):
        for a in range(out1.shape[0]):
            oa = out1[a]
            pa = pt1[a]
            for b in range(out2.shape[0]):
                out[a, b] += coef[oa, out2[b]] * kx[pa, pt2[b]]

    @njit(cache=True)
    def _nb_contract_stacked(W, coef, kx, out_idx, pt_idx, n_points, n_outputs):
        n = W.shape[0]
        P = np.zeros((n_points, n_points))
        C = np.zeros((n_outputs, n_outputs))
        for a in range(n):
            oa = out_idx[a]
            pa = pt_idx[a]
            for b in range(n):
                w = W[a, b]
                ob = out_idx[b]
                pb = pt_idx[b]
                P[pa, pb] += w * coef[oa, ob]
                C[oa, ob] += w * kx[pa, pb]
        return P, C

    @njit(cache=True)
    def _nb_knn(train, queries, k):
        nq, n, m = queries.shape[0], train.shape[0], train.shape[1]
        idx = np.empty((nq, k), dtype=np.int64)
        dist = np.empty((nq, k))
        best_d = np.empty(k)
        best_i = np.empty(k, dtype=np.int64)
        for q in range(nq):
            filled = 0
            for j in range(n):
                s = 0.0
                for c in range(m):
                    t = train[j, c] - queries[q, c]
                    s += t * t
                if filled == k and s >= best_d[k - 1]:
                    continue
                # insertion sort; strict '<' keeps earlier (lower) indices first
                pos = filled if filled < k else k - 1
                while pos > 0 and s < best_d[pos - 1]:
                    if pos < k:
                        best_d[pos] = best_d[pos - 1]
                        best_i[pos] = best_i[pos - 1]
                    pos -= 1
                best_d[pos] = s
                best_i[pos] = j
                if filled < k:
                    filled += 1
            for c in range(k):
                idx[q, c] = best_i[c]
                dist[q, c] = np.sqrt(best_d[c])
        return idx, dist


class _Impl:
    def __init__(self, **funcs):
        self.__dict__.update(funcs)


numpy_impl = _Impl(
    pairwise_distances=_np_pairwise_distances,
    self_distances=_np_self_distances,
    accumulate_stacked=_np_accumulate_stacked,
    contract_stacked=_np_contract_stacked,
    knn=_np_knn,
)
numba_impl = (
    _Impl(
        pairwise_distances=_nb_pairwise_distances,
        self_distances=_nb_self_distances,
        accumulate_stacked=_nb_accumulate_stacked,
        contract_stacked=_nb_contract_stacked,
        knn=_nb_knn,
    )
    if HAVE_NUMBA
    else None
)
_active = numba_impl if BACKEND == "numba" else numpy_impl


def pairwise_distances(X1, X2):
    """Euclidean distances between rows of ``X1`` (n1, L) and ``X2`` (n2, L)."""
    return _active.pairwise_distances(
        np.ascontiguousarray(X1, dtype=np.float64),
        np.ascontiguousarray(X2, dtype=np.float64),
    )


def self_distances(X):
    """Exactly symmetric distance matrix with a zero diagonal."""
    return _active.self_distances(np.ascontiguousarray(X, dtype=np.float64))


def accumulate_stacked(coef, kx, out1, pt1, out2, pt2, out):
    """``out[a, b] += coef[out1[a], out2[b]] * kx[pt1[a], pt2[b]]`` in place."""
    _active.accumulate_stacked(
        np.ascontiguousarray(coef, dtype=np.float64),
        np.ascontiguousarray(kx, dtype=np.float64),
        np.ascontiguousarray(out1, dtype=np.int64),
        np.ascontiguousarray(pt1, dtype=np.int64),
        np.ascontiguousarray(out2, dtype=np.int64),
        np.ascontiguousarray(pt2, dtype=np.int64),
        out,
    )


def contract_stacked(W, coef, kx, out_idx, pt_idx, n_points, n_outputs):
    """Collapse a stacked-entry matrix ``W`` onto point and output space.

    Returns ``P[i, j] = sum W[a, b] coef[o_a, o_b]`` over entries with
    ``(p_a, p_b) = (i, j)`` and ``C[m, l] = sum W[a, b] kx[p_a, p_b]`` over
    entries with ``(o_a, o_b) = (m, l)``.
    """
    return _active.contract_stacked(
        np.ascontiguousarray(W, dtype=np.float64),
        np.ascontiguousarray(coef, dtype=np.float64),
        np.ascontiguousarray(kx, dtype=np.float64),
        np.ascontiguousarray(out_idx, dtype=np.int64),
        np.ascontiguousarray(pt_idx, dtype=np.int64),
        int(n_points),
        int(n_outputs),
    )


def knn(train, queries, k):
    """Indices and distances of the ``k`` nearest rows of ``train``.

    Ordering is by ascending distance, ties resolved towards the lower
    training index.  ``k`` must not exceed ``len(train)``.
    """
    return _active.knn(
        np.ascontiguousarray(train, dtype=np.float64),
        np.ascontiguousarray(queries, dtype=np.float64),
        int(k),
    )
