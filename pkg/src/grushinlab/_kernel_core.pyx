# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch evaluators for the Mehler and Grushin heat kernels.

Same contract as ``_kernel_py``; loops are fused over quadrature nodes so no
``queries x nodes`` temporaries are allocated.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log, cos, M_PI

cnp.import_array()

cdef double LOG_2PI = log(2.0 * M_PI)


cdef inline double _log_mehler(double lam, double a, double b, double t, int n) noexcept nogil:
    cdef double z = lam * t
    cdef double em, log_ratio, zcoth, zcsch
    if z > 0.0:
        em = -expm1(-2.0 * z)
        log_ratio = -z - log(em / (2.0 * z))
        zcoth = z * (2.0 - em) / em
        zcsch = 2.0 * z * exp(-z) / em
    else:
        log_ratio = 0.0
        zcoth = 1.0
        zcsch = 1.0
    return (0.5 * n * (log_ratio - LOG_2PI - log(t))
            - (a * zcoth - 2.0 * b * zcsch) / (2.0 * t))


def log_mehler(lam, a, b, t, int n):
    lam, a, b, t = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (lam, a, b, t)))
    shape = lam.shape
    cdef double[::1] L = np.ascontiguousarray(lam).ravel()
    cdef double[::1] A = np.ascontiguousarray(a).ravel()
    cdef double[::1] B = np.ascontiguousarray(b).ravel()
    cdef double[::1] T = np.ascontiguousarray(t).ravel()
    out = np.empty(L.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(L.shape[0]):
            o[i] = _log_mehler(L[i], A[i], B[i], T[i], n)
    return out.reshape(shape)


def grushin_sum(a, b, y, t, int n, nodes, weights):
    cdef double[::1] A = np.ascontiguousarray(a, dtype=np.float64).ravel()
    cdef double[::1] B = np.ascontiguousarray(b, dtype=np.float64).ravel()
    cdef double[::1] Y = np.ascontiguousarray(y, dtype=np.float64).ravel()
    cdef double[::1] T = np.ascontiguousarray(t, dtype=np.float64).ravel()
    cdef double[::1] X = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef double[::1] W = np.ascontiguousarray(weights, dtype=np.float64)
    out = np.empty(A.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i, q
    cdef double acc
    with nogil:
        for i in range(A.shape[0]):
            acc = 0.0
            for q in range(X.shape[0]):
                acc = acc + W[q] * cos(X[q] * Y[i]) * exp(_log_mehler(X[q], A[i], B[i], T[i], n))
            o[i] = acc / M_PI
    return out
