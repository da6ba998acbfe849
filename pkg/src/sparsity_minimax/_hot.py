"""Inner loops shared by kernel tabulation, statistics and the harness.

Each routine exists as ``*_nb`` (numba) and ``*_np`` (numpy); the public
name is bound to one of them by :mod:`sparsity_minimax._accel`.
"""

import numpy as np

from ._accel import njit, pick

_CHUNK = 1 << 20  # cap on the size of temporaries in the numpy path


@njit
def cos_matvec_nb(x, u, a):
    out = np.zeros(x.shape[0])
    for i in range(x.shape[0]):
        acc = 0.0
        xi = x[i]
        for k in range(u.shape[0]):
            acc += a[k] * np.cos(u[k] * xi)
        out[i] = acc
    return out


def cos_matvec_np(x, u, a):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[0])
    step = max(1, _CHUNK // max(1, u.shape[0]))
    for lo in range(0, x.shape[0], step):
        out[lo:lo + step] = np.cos(np.outer(x[lo:lo + step], u)) @ a
    return out


@njit
def spline_eval_nb(xabs, coef, h):
    """Evaluate a piecewise cubic on a uniform grid starting at 0."""
    m = coef.shape[1]
    out = np.empty(xabs.shape[0])
    for i in range(xabs.shape[0]):
        j = int(xabs[i] / h)
        if j >= m:
            j = m - 1
        d = xabs[i] - j * h
        out[i] = ((coef[0, j] * d + coef[1, j]) * d + coef[2, j]) * d + coef[3, j]
    return out


def spline_eval_np(xabs, coef, h):
    m = coef.shape[1]
    j = np.minimum((xabs / h).astype(np.int64), m - 1)
    d = xabs - j * h
    return ((coef[0, j] * d + coef[1, j]) * d + coef[2, j]) * d + coef[3, j]


cos_matvec = pick(cos_matvec_nb, cos_matvec_np)
spline_eval = pick(spline_eval_nb, spline_eval_np)


def cos_sum(x, u):
    """Return ``sum_i cos(u_k x_i)`` for every frequency ``u_k``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    return cos_matvec(u, x, np.ones(x.shape[0]))
