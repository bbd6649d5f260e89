# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled evaluation kernels.

Reference implementation (same contracts, used as the correctness oracle in
the tests): isocycle._kernels_py. Dispatch: isocycle.kernels.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fabs, sin

cnp.import_array()

cdef double TWO_PI = 6.283185307179586476925287


def trig_eval(half, pts):
    """Evaluate F trigonometric interpolants (shared grid) at M points."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] H = np.ascontiguousarray(
        half, dtype=np.complex128
    )
    cdef cnp.ndarray[cnp.float64_t, ndim=1] P = np.ascontiguousarray(
        pts, dtype=np.float64
    )
    cdef Py_ssize_t F = H.shape[0]
    cdef Py_ssize_t K = H.shape[1] - 1
    cdef Py_ssize_t M = P.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((F, M), dtype=np.float64)
    cdef Py_ssize_t f, m, k
    cdef double zr, zi, ar, ai, tr, w
    for m in range(M):
        w = TWO_PI * P[m]
        zr = cos(w)
        zi = sin(w)
        for f in range(F):
            ar = 0.5 * H[f, K].real
            ai = 0.0
            for k in range(K - 1, 0, -1):
                tr = ar * zr - ai * zi + H[f, k].real
                ai = ar * zi + ai * zr + H[f, k].imag
                ar = tr
            out[f, m] = H[f, 0].real + 2.0 * (ar * zr - ai * zi)
    return out


def mixed_eval(vhat, s_nodes, bary_w, theta_pts, s_pts):
    """Fourier-x-Chebyshev evaluation at scattered points; see the pure
    version for the algebra (barycentric combination across columns, then
    the trigonometric sum)."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] V = np.ascontiguousarray(
        vhat, dtype=np.complex128
    )
    cdef cnp.ndarray[cnp.float64_t, ndim=1] S = np.ascontiguousarray(
        s_nodes, dtype=np.float64
    )
    cdef cnp.ndarray[cnp.float64_t, ndim=1] W = np.ascontiguousarray(
        bary_w, dtype=np.float64
    )
    cdef cnp.ndarray[cnp.float64_t, ndim=1] T = np.ascontiguousarray(
        theta_pts, dtype=np.float64
    )
    cdef cnp.ndarray[cnp.float64_t, ndim=1] SP = np.ascontiguousarray(
        s_pts, dtype=np.float64
    )
    cdef Py_ssize_t C = V.shape[0]
    cdef Py_ssize_t K = V.shape[1] - 1
    cdef Py_ssize_t L = V.shape[2]
    cdef Py_ssize_t M = T.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((C, M), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bw = np.empty(L, dtype=np.float64)
    cdef Py_ssize_t c, m, k, l, exact
    cdef double span = 0.0, tol, den, d, zr, zi, ar, ai, tr, w, br, bi
    for l in range(L):
        if fabs(S[l]) > span:
            span = fabs(S[l])
    tol = 1e-14 * (span if span > 1.0 else 1.0)
    for m in range(M):
        exact = -1
        for l in range(L):
            d = SP[m] - S[l]
            if fabs(d) < tol:
                exact = l
                break
        den = 1.0
        if exact >= 0:
            for l in range(L):
                bw[l] = 0.0
            bw[exact] = 1.0
        else:
            den = 0.0
            for l in range(L):
                bw[l] = W[l] / (SP[m] - S[l])
                den += bw[l]
        w = TWO_PI * T[m]
        zr = cos(w)
        zi = sin(w)
        for c in range(C):
            br = 0.0
            for l in range(L):
                br += V[c, K, l].real * bw[l]
            ar = 0.5 * br
            ai = 0.0
            for k in range(K - 1, 0, -1):
                br = 0.0
                bi = 0.0
                for l in range(L):
                    br += V[c, k, l].real * bw[l]
                    bi += V[c, k, l].imag * bw[l]
                tr = ar * zr - ai * zi + br
                ai = ar * zi + ai * zr + bi
                ar = tr
            br = 0.0
            for l in range(L):
                br += V[c, 0, l].real * bw[l]
            out[c, m] = (br + 2.0 * (ar * zr - ai * zi)) / den
    return out
