# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled codebook kernels: bin assignment and the full fit loop.

Same contract as ``py_backend``; the fit loop runs entirely in C, which
matters because the simulator refits a codebook per node per round.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef Py_ssize_t _lower_bound(const double* arr, Py_ssize_t n, double x) noexcept nogil:
    # first index i with arr[i] >= x
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if arr[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef void _assign(const double* values, Py_ssize_t n, const double* bounds,
                  Py_ssize_t nb, long long* out) noexcept nogil:
    cdef Py_ssize_t i, idx
    for i in range(n):
        idx = _lower_bound(bounds, nb, values[i]) - 1
        if idx < 0:
            idx = 0
        elif idx > nb - 2:
            idx = nb - 2
        out[i] = idx


def assign_bins(values, boundaries):
    """Map each value in [0, 1] to its bin index under ``boundaries``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b = np.ascontiguousarray(boundaries, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(v.shape[0], dtype=np.int64)
    if v.shape[0] > 0:
        _assign(&v[0], v.shape[0], &b[0], b.shape[0], <long long*>&out[0])
    return out


def fit_codebook(samples, weights, Py_ssize_t s, double tol, int max_iter):
    """C version of the centroid/midpoint fit loop. See ``py_backend``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(samples, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bounds = np.linspace(0.0, 1.0, s + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] levels = np.empty(s, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bin_w = np.empty(s, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bin_wx = np.empty(s, dtype=np.float64)

    cdef double total_w = 0.0
    cdef Py_ssize_t i, j
    cdef double mse, err
    cdef double prev = -1.0
    cdef list history = []
    cdef bint converged = False

    for i in range(n):
        total_w += w[i]
    _assign(&x[0], n, &bounds[0], s + 1, <long long*>&labels[0])

    for _ in range(max_iter):
        with nogil:
            for j in range(s):
                bin_w[j] = 0.0
                bin_wx[j] = 0.0
            for i in range(n):
                j = labels[i]
                bin_w[j] += w[i]
                bin_wx[j] += w[i] * x[i]
            for j in range(s):
                if bin_w[j] > 0.0:
                    levels[j] = bin_wx[j] / bin_w[j]
                else:
                    levels[j] = 0.5 * (bounds[j] + bounds[j + 1])
            for j in range(1, s):
                bounds[j] = 0.5 * (levels[j - 1] + levels[j])
            bounds[0] = 0.0
            bounds[s] = 1.0
            _assign(&x[0], n, &bounds[0], s + 1, <long long*>&labels[0])
            mse = 0.0
            for i in range(n):
                err = x[i] - levels[labels[i]]
                mse += w[i] * err * err
            mse /= total_w
        history.append(mse)
        if prev >= 0.0 and (prev == 0.0 or (prev - mse) <= tol * prev):
            converged = True
            break
        prev = mse

    return levels, bounds, np.asarray(history), converged
