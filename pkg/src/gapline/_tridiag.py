"""Symmetric tridiagonal kernels: Sturm counts, bisection, inverse iteration.

All routines act on a matrix given by its diagonal ``d`` (length n) and
off-diagonal ``e`` (length n-1).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def sturm_count(d, e, x):
    """Number of eigenvalues strictly below ``x``.

    Counts negative pivots of the LDL^T factorization of T - xI.
    """
    n = d.shape[0]
    tiny = 1e-300
    count = 0
    q = d[0] - x
    if q < 0.0:
        count += 1
    for i in range(1, n):
        if q == 0.0:
            q = tiny
        q = d[i] - x - e[i - 1] * e[i - 1] / q
        if q < 0.0:
            count += 1
    return count


@njit(cache=True)
def gershgorin(d, e):
    n = d.shape[0]
    lo = np.inf
    hi = -np.inf
    for i in range(n):
        r = 0.0
        if i > 0:
            r += abs(e[i - 1])
        if i < n - 1:
            r += abs(e[i])
        lo = min(lo, d[i] - r)
        hi = max(hi, d[i] + r)
    return lo, hi


@njit(cache=True)
def bisect_eigenvalue(d, e, k, lo, hi, tol):
    """k-th smallest eigenvalue (0-based) by bisection on the Sturm count.

    ``lo``/``hi`` must bracket it: count(lo) <= k < count(hi).
    Stops when the bracket is narrower than ``tol`` or stops shrinking.
    """
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if sturm_count(d, e, mid) > k:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@njit(cache=True)
def _solve_shifted(d, e, shift, b):
    """Solve (T - shift I) x = b with partial pivoting (gttrf/gtts2 style)."""
    n = d.shape[0]
    scale = 0.0
    for i in range(n):
        scale = max(scale, abs(d[i] - shift))
    for i in range(n - 1):
        scale = max(scale, abs(e[i]))
    eps = 2.220446049250313e-16 * max(scale, 1.0)

    dl = e.copy()
    dd = d - shift
    du = e.copy()
    du2 = np.zeros(max(n - 2, 0))
    piv = np.zeros(n, dtype=np.bool_)
    x = b.copy()

    for i in range(n - 1):
        if abs(dd[i]) >= abs(dl[i]):
            if dd[i] == 0.0:
                dd[i] = eps
            f = dl[i] / dd[i]
            dl[i] = f
            dd[i + 1] -= f * du[i]
            if i < n - 2:
                du2[i] = 0.0
        else:
            piv[i] = True
            f = dd[i] / dl[i]
            dd[i] = dl[i]
            dl[i] = f
            tmp = du[i]
            du[i] = dd[i + 1]
            dd[i + 1] = tmp - f * dd[i + 1]
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -f * du[i + 1]
    if dd[n - 1] == 0.0 or abs(dd[n - 1]) < eps:
        dd[n - 1] = eps if dd[n - 1] >= 0.0 else -eps

    # forward: L y = P b
    for i in range(n - 1):
        if piv[i]:
            tmp = x[i]
            x[i] = x[i + 1]
            x[i + 1] = tmp - dl[i] * x[i + 1]
        else:
            x[i + 1] -= dl[i] * x[i]
    # backward: U x = y
    x[n - 1] /= dd[n - 1]
    if n > 1:
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / dd[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / dd[i]
    return x


@njit(cache=True)
def inverse_iteration(d, e, shift, start, iters, deflate):
    """Eigenvector for eigenvalue ``shift``; unit 2-norm.

    Rows of ``deflate`` (m x n, m may be 0) are projected out after every
    solve, which keeps the vector orthogonal to already converged ones.
    """
    v = start / np.sqrt(np.dot(start, start))
    for _ in range(iters):
        v = _solve_shifted(d, e, shift, v)
        for j in range(deflate.shape[0]):
            q = deflate[j]
            v = v - np.dot(q, v) * q
        v = v / np.sqrt(np.dot(v, v))
    return v


@njit(cache=True)
def lowest_eigenpairs(d, e, count, tol, iters, start):
    """Lowest ``count`` eigenvalues and unit eigenvectors (as rows) of T."""
    n = d.shape[0]
    lo, hi = gershgorin(d, e)
    pad = 1e-12 * max(abs(lo), abs(hi), 1.0)
    lo -= pad
    hi += pad
    values = np.empty(count)
    vectors = np.zeros((count, n))
    bracket_lo = lo
    for k in range(count):
        values[k] = bisect_eigenvalue(d, e, k, bracket_lo, hi, tol)
        bracket_lo = values[k] - tol
    for k in range(count):
        vectors[k] = inverse_iteration(d, e, values[k], start[k], iters, vectors[:k])
    return values, vectors
