"""Independent reference implementations used only by the test-suite.

Nothing here imports the package's kernel or GP code paths: kernels are
re-derived from their closed forms, covariances are assembled entry by entry
with Python loops, and linear systems are solved with ``numpy.linalg.solve``
rather than Cholesky.
"""

import math

import mpmath
import numpy as np

mpmath.mp.dps = 50


def mp_matern52(r, h):
    r, h = mpmath.mpf(r), mpmath.mpf(h)
    u = mpmath.sqrt(5) * r / h
    return (1 + u + u * u / 3) * mpmath.exp(-u)


def mp_rbf(r, gamma):
    r, g = mpmath.mpf(r), mpmath.mpf(gamma)
    return mpmath.exp(-(r * r) / (g * g))


def matern52(r, h):
    u = math.sqrt(5.0) * r / h
    return (1.0 + u + u * u / 3.0) * math.exp(-u)


def rbf(r, gamma):
    return math.exp(-(r * r) / (gamma * gamma))


def dist(a, b):
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def brute_joint_cov(coregs, kfuns, X1, X2, mask1=None, mask2=None):
    """Entry-by-entry sum_r B_r[i, j] k_r(x, x') over observed (point, output) pairs.

    Ordering is output-major to match the stacked representation.
    """
    M = coregs[0].shape[0]
    mask1 = np.ones((len(X1), M), bool) if mask1 is None else mask1
    mask2 = np.ones((len(X2), M), bool) if mask2 is None else mask2
    rows = [(i, p) for i in range(M) for p in range(len(X1)) if mask1[p, i]]
    cols = [(j, q) for j in range(M) for q in range(len(X2)) if mask2[q, j]]
    K = np.empty((len(rows), len(cols)))
    for a, (i, p) in enumerate(rows):
        for b, (j, q) in enumerate(cols):
            r = dist(X1[p], X2[q])
            K[a, b] = sum(B[i, j] * k(r) for B, k in zip(coregs, kfuns))
    return K


def stacked_sogp_predict(coregs, kfuns, noise, means, X, Y, mask, xq):
    """Posterior of all outputs at ``xq`` via one scalar GP on (x, output) inputs.

    The expanded kernel is k((x, i), (x', j)) = sum_r B_r[i, j] k_r(x, x').
    """
    M = coregs[0].shape[0]
    pts = [(X[p], i) for i in range(M) for p in range(len(X)) if mask[p, i]]
    y = np.array([Y[p, i] - means[i] for i in range(M) for p in range(len(X)) if mask[p, i]])

    def k(a, b):
        r = dist(a[0], b[0])
        return sum(B[a[1], b[1]] * kf(r) for B, kf in zip(coregs, kfuns))

    n = len(pts)
    K = np.array([[k(pts[a], pts[b]) for b in range(n)] for a in range(n)])
    K += np.diag([noise[i] for (_, i) in pts])
    qs = [(xq, j) for j in range(M)]
    Ks = np.array([[k(pts[a], q) for q in qs] for a in range(n)])
    Kss = np.array([[k(q1, q2) for q2 in qs] for q1 in qs])
    mean = Ks.T @ np.linalg.solve(K, y) + np.asarray(means)
    cov = Kss - Ks.T @ np.linalg.solve(K, Ks)
    return mean, cov


def textbook_sogp(x, y, kfun, noise, xq):
    """Single-output GP regression, posterior mean/variance at points ``xq``."""
    n = len(x)
    K = np.array([[kfun(dist(x[i], x[j])) for j in range(n)] for i in range(n)])
    K += noise * np.eye(n)
    Ks = np.array([[kfun(dist(x[i], q)) for q in xq] for i in range(n)])
    kss = np.array([kfun(0.0) for _ in xq])
    alpha = np.linalg.solve(K, y)
    mean = Ks.T @ alpha
    var = kss - np.einsum("ij,ij->j", Ks, np.linalg.solve(K, Ks))
    return mean, var


def gaussian_logpdf(y, K):
    """log N(y | 0, K) via slogdet and solve."""
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    return float(-0.5 * y @ np.linalg.solve(K, y) - 0.5 * logdet - 0.5 * len(y) * math.log(2 * math.pi))


def nearest_neighbour_interpolate(train_xy, train_values, query_xy):
    out = np.empty((len(query_xy), train_values.shape[1]))
    for i, q in enumerate(query_xy):
        d = np.sum((train_xy - q) ** 2, axis=1)
        out[i] = train_values[int(np.argmin(d))]
    return out
