# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels mirroring ``_kernels_py``.

Matrix products go through the BLAS scipy links against. Arrays are
row-major, so each product is issued as the transposed column-major product.
``branch_eps`` fuses a whole predictor branch into one call, which is where
the sampling loop spends its time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "compiled"


cdef inline void _matmul(const double[:, ::1] a, const double[:, ::1] b, double[:, ::1] c) noexcept nogil:
    # c (R x S) = a (R x K) @ b (K x S)
    cdef int R = a.shape[0], K = a.shape[1], S = b.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char nn = b'N'
    cdef int i, j
    if R == 0 or S == 0:
        return
    if K == 0:
        for i in range(R):
            for j in range(S):
                c[i, j] = 0.0
        return
    dgemm(&nn, &nn, &S, &R, &K, &one, <double*>&b[0, 0], &S, <double*>&a[0, 0], &K,
          &zero, &c[0, 0], &S)


cdef void _attend(const double[:, ::1] P, const double[:, ::1] KV,
                  const double[:, ::1] WQ, const double[:, ::1] WK, const double[:, ::1] WV,
                  double[:, ::1] Q, double[:, ::1] Kt, double[:, ::1] V,
                  double[:, ::1] W, double[:, ::1] O) noexcept nogil:
    cdef int N = P.shape[0], C = P.shape[1], M = KV.shape[0]
    cdef double scale = 1.0 / sqrt(<double>C), zero = 0.0, row_max, total
    cdef char tt = b'T', nn = b'N'
    cdef Py_ssize_t i, j
    _matmul(P, WQ, Q)
    _matmul(KV, WK, Kt)
    _matmul(KV, WV, V)
    if N == 0 or M == 0:
        return
    # logits (N x M) = scale * Q @ K^T
    dgemm(&tt, &nn, &M, &N, &C, &scale, &Kt[0, 0], &C, &Q[0, 0], &C, &zero, &W[0, 0], &M)
    for i in range(N):
        row_max = W[i, 0]
        for j in range(1, M):
            if W[i, j] > row_max:
                row_max = W[i, j]
        total = 0.0
        for j in range(M):
            W[i, j] = exp(W[i, j] - row_max)
            total = total + W[i, j]
        for j in range(M):
            W[i, j] = W[i, j] / total
    _matmul(W, V, O)


def axpby(double a, x, double b, y):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xf = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yf = np.ascontiguousarray(y, dtype=np.float64).ravel()
    if xf.shape[0] != yf.shape[0]:
        raise ValueError("axpby operands differ in size")
    out = np.empty(xf.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef double[::1] xv = xf
    cdef double[::1] yv = yf
    cdef Py_ssize_t i, n = xf.shape[0]
    with nogil:
        for i in range(n):
            o[i] = a * xv[i] + b * yv[i]
    return out.reshape(np.shape(x))


def attention(p, kv, wq, wk, wv):
    cdef const double[:, ::1] P = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[:, ::1] KV = np.ascontiguousarray(kv, dtype=np.float64)
    cdef int N = P.shape[0], C = P.shape[1], M = KV.shape[0]
    if KV.shape[1] != C:
        raise ValueError("attention operands disagree on channel count")
    q_arr = np.empty((N, C)); k_arr = np.empty((M, C)); v_arr = np.empty((M, C))
    w_arr = np.empty((N, M)); out_arr = np.empty((N, C))
    _attend(P, KV, np.ascontiguousarray(wq, dtype=np.float64),
            np.ascontiguousarray(wk, dtype=np.float64),
            np.ascontiguousarray(wv, dtype=np.float64),
            q_arr, k_arr, v_arr, w_arr, out_arr)
    return out_arr, w_arr


def branch_eps(x, in_bias, out_bias, w_in, wq, wk, wv, w_out, memory,
               double sqrt_alpha, double coef):
    cdef const double[:, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] IB = np.ascontiguousarray(in_bias, dtype=np.float64)
    cdef const double[:, ::1] OB = np.ascontiguousarray(out_bias, dtype=np.float64)
    cdef const double[:, ::1] MEM
    cdef int N = X.shape[0], C = X.shape[1], M = 0
    if memory is not None and len(memory):
        MEM = np.ascontiguousarray(memory, dtype=np.float64)
        M = MEM.shape[0]
        if MEM.shape[1] != C:
            raise ValueError("memory tokens disagree on channel count")

    kv_arr = np.empty((N + M, C))
    h_arr = kv_arr[:N]
    q_arr = np.empty((N, C)); k_arr = np.empty((N + M, C)); v_arr = np.empty((N + M, C))
    w_arr = np.empty((N, N + M)); a_arr = np.empty((N, C)); eps_arr = np.empty((N, C))
    cdef double[:, ::1] KV = kv_arr
    cdef double[:, ::1] H = h_arr
    cdef double[:, ::1] A = a_arr
    cdef double[:, ::1] E = eps_arr
    cdef Py_ssize_t i, j

    _matmul(X, np.ascontiguousarray(w_in, dtype=np.float64), H)
    with nogil:
        for i in range(N):
            for j in range(C):
                H[i, j] = H[i, j] + IB[i, j]
        if M > 0:
            memcpy(&KV[N, 0], &MEM[0, 0], M * C * sizeof(double))
    _attend(H, KV, np.ascontiguousarray(wq, dtype=np.float64),
            np.ascontiguousarray(wk, dtype=np.float64),
            np.ascontiguousarray(wv, dtype=np.float64),
            q_arr, k_arr, v_arr, w_arr, a_arr)
    _matmul(A, np.ascontiguousarray(w_out, dtype=np.float64), E)
    with nogil:
        for i in range(N):
            for j in range(C):
                E[i, j] = coef * (X[i, j] - sqrt_alpha * tanh(E[i, j] + OB[i, j]))
    return eps_arr, h_arr.copy()
