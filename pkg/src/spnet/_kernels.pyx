# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementation of the fused loss kernel.

Contract and loss-kind codes are documented in spnet._kernels_py; this
module fuses the softmax / loss / gradient passes into one row-wise loop,
which removes the temporary-array traffic that dominates the pure-numpy
backend for the small logit matrices this package trains on.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, pow

cnp.import_array()

cdef double CLAMP_FLOOR = 1e-300

cdef int KIND_CE = 0
cdef int KIND_FOCAL = 1
cdef int KIND_SP_CE = 2
cdef int KIND_SP_FOCAL = 3
cdef int KIND_GRAD_STARVATION = 4

cdef int VARIANT_COMPLEMENT = 1


cdef inline double _softplus(double x) nogil:
    # log(1 + exp(x)) without overflow
    if x > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline void _focal_terms(double p, double u, double log_p,
                              double alpha, double gamma,
                              double* value, double* t) nogil:
    # Focal classification term; u below the clamp floor counts as converged.
    if gamma == 0.0:
        value[0] = -alpha * log_p
        t[0] = -alpha
        return
    if u < CLAMP_FLOOR:
        value[0] = 0.0
        t[0] = 0.0
        return
    value[0] = -alpha * pow(u, gamma) * log_p
    t[0] = alpha * pow(u, gamma - 1.0) * (gamma * p * log_p - u)


def loss_forward(const double[:, ::1] logits, const cnp.int64_t[::1] labels,
                 int kind, double alpha, double gamma, double eta,
                 int variant, bint full_vector):
    """Same contract as spnet._kernels_py.loss_forward."""
    cdef Py_ssize_t n = logits.shape[0]
    cdef Py_ssize_t k = logits.shape[1]

    values_arr = np.empty(n, dtype=np.float64)
    dlogits_arr = np.empty((n, k), dtype=np.float64)
    cdef double[::1] values = values_arr
    cdef double[:, ::1] dlogits = dlogits_arr

    cdef Py_ssize_t i, j, y
    cdef long clamps = 0
    cdef double m, s, p, u, log_p, t, value, q, margin, c, xij

    for i in range(n):
        y = labels[i]

        m = logits[i, 0]
        for j in range(1, k):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(k):
            xij = exp(logits[i, j] - m)
            dlogits[i, j] = xij      # stash softmax in the output row
            s += xij
        for j in range(k):
            dlogits[i, j] /= s

        p = dlogits[i, y]
        if p < CLAMP_FLOOR:
            clamps += 1
            p = CLAMP_FLOOR
        u = 1.0 - p
        log_p = log(p)

        if kind == KIND_CE:
            value = -log_p
            t = -1.0
        elif kind == KIND_FOCAL:
            _focal_terms(p, u, log_p, alpha, gamma, &value, &t)
        elif kind == KIND_SP_CE:
            if full_vector:
                value = -log_p
                t = -1.0
            elif variant == VARIANT_COMPLEMENT:
                value = -log_p + eta * (p * p + u * u)
                t = -1.0 + 2.0 * eta * p * (p - u)
            else:
                value = -log_p + eta * p * p
                t = -1.0 + 2.0 * eta * p * p
        elif kind == KIND_SP_FOCAL:
            _focal_terms(p, u, log_p, alpha, gamma, &value, &t)
            if not full_vector:
                value += eta * p * p
                t += 2.0 * eta * p * p
        elif kind == KIND_GRAD_STARVATION:
            margin = logits[i, y] - logits[i, 1 - y]
            value = _softplus(-margin) + 0.5 * eta * (p * p + u * u)
            t = -1.0 + eta * p * (p - u)
        else:
            raise ValueError(f"unknown loss kind code {kind}")

        if full_vector and (kind == KIND_SP_CE or kind == KIND_SP_FOCAL):
            q = 0.0
            for j in range(k):
                q += dlogits[i, j] * dlogits[i, j]
            if kind == KIND_SP_CE and variant == VARIANT_COMPLEMENT:
                c = 2.0
                value += eta * (2.0 * q + k - 2.0)
            else:
                c = 1.0
                value += eta * q
            for j in range(k):
                xij = dlogits[i, j]
                dlogits[i, j] = -t * xij + 2.0 * c * eta * xij * (xij - q)
            dlogits[i, y] += t
        else:
            for j in range(k):
                dlogits[i, j] = -t * dlogits[i, j]
            dlogits[i, y] += t

        values[i] = value

    return values_arr, dlogits_arr, clamps
