# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled round loop for Online-Fed / PSO-Fed.

Arguments (all C-contiguous float64 unless noted):
    W        (K, D)     client models, updated in place
    w        (D,)       global model, updated in place
    Z        (n, K, D)  features for n rounds
    Y        (n, K)     targets
    sel      (n, S)     int64 selected ids per round
    offsets  (K,)       int64 mask block start at round 0
Returns None, or (round, client) of the first diverged client.
"""
import numpy as np
from libc.stdint cimport int64_t

cdef double LIMIT2 = 1e18


cdef inline bint _active(int64_t j, int64_t off, int64_t M, int64_t D) nogil:
    cdef int64_t rel = j - off
    if rel < 0:
        rel += D
    return rel < M


def simulate_chunk(double[:, ::1] W, double[::1] w,
                   const double[:, :, ::1] Z, const double[:, ::1] Y,
                   const int64_t[:, ::1] sel, const int64_t[::1] offsets,
                   int64_t round0, int64_t M, int64_t tau, double mu, bint partial,
                   const double[:, ::1] G=None, const double[::1] gb=None,
                   double gc=0.0, double[::1] mse_out=None,
                   double[:, :, ::1] trace_out=None):
    cdef Py_ssize_t n = Z.shape[0], K = Z.shape[1], D = Z.shape[2], S = sel.shape[1]
    cdef Py_ssize_t i, j, k, s, q
    cdef int64_t r, off
    cdef double dot, g, v, nrm, acc, quad, lin
    cdef double[::1] wnew = np.empty(D)
    cdef double[::1] base = np.empty(D)
    cdef unsigned char[::1] flag = np.zeros(K, dtype=np.uint8)
    cdef bint want_mse = mse_out is not None
    cdef bint want_trace = trace_out is not None
    cdef int64_t bad_k = -1

    with nogil:
        for i in range(n):
            r = round0 + i
            for s in range(S):
                flag[sel[i, s]] = 1
            if partial:
                for k in range(K):
                    if flag[k]:
                        off = (offsets[k] + r * tau) % D
                        for j in range(D):
                            base[j] = w[j] if _active(j, off, M, D) else W[k, j]
                    else:
                        for j in range(D):
                            base[j] = W[k, j]
                    dot = 0.0
                    for j in range(D):
                        dot = dot + base[j] * Z[i, k, j]
                    g = mu * (Y[i, k] - dot)
                    nrm = 0.0
                    for j in range(D):
                        v = base[j] + g * Z[i, k, j]
                        W[k, j] = v
                        nrm = nrm + v * v
                    if not nrm < LIMIT2:
                        bad_k = k
                        break
                if bad_k >= 0:
                    break
                for j in range(D):
                    wnew[j] = 0.0
                for s in range(S):
                    k = sel[i, s]
                    off = (offsets[k] + (r + 1) * tau) % D
                    for j in range(D):
                        wnew[j] = wnew[j] + (W[k, j] if _active(j, off, M, D) else w[j])
            else:
                for s in range(S):
                    k = sel[i, s]
                    dot = 0.0
                    for j in range(D):
                        dot = dot + w[j] * Z[i, k, j]
                    g = mu * (Y[i, k] - dot)
                    nrm = 0.0
                    for j in range(D):
                        v = w[j] + g * Z[i, k, j]
                        W[k, j] = v
                        nrm = nrm + v * v
                    if not nrm < LIMIT2:
                        bad_k = k
                        break
                if bad_k >= 0:
                    break
                for j in range(D):
                    wnew[j] = 0.0
                for s in range(S):
                    k = sel[i, s]
                    for j in range(D):
                        wnew[j] = wnew[j] + W[k, j]
            for j in range(D):
                w[j] = wnew[j] / S
            for s in range(S):
                flag[sel[i, s]] = 0
            if want_mse:
                quad = 0.0
                lin = 0.0
                for j in range(D):
                    acc = 0.0
                    for q in range(D):
                        acc = acc + G[j, q] * w[q]
                    quad = quad + w[j] * acc
                    lin = lin + gb[j] * w[j]
                mse_out[i] = quad - 2.0 * lin + gc
            if want_trace:
                for j in range(D):
                    trace_out[i, 0, j] = w[j]
                for k in range(K):
                    for j in range(D):
                        trace_out[i, k + 1, j] = W[k, j]

    if bad_k >= 0:
        return int(round0 + i), int(bad_k)
    return None
