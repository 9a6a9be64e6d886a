# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled gate kernels (stride loops over the amplitude array).

Drop-in replacement for ``qrobust._kernels_py``; see that module for the
array layout contract.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


cdef inline void _mul2(double complex u0, double complex u1, double complex a0, double complex a1,
                      double* re, double* im) noexcept nogil:
    # u0*a0 + u1*a1 in real arithmetic (avoids the NaN-checking C99 complex multiply)
    re[0] = u0.real * a0.real - u0.imag * a0.imag + u1.real * a1.real - u1.imag * a1.imag
    im[0] = u0.real * a0.imag + u0.imag * a0.real + u1.real * a1.imag + u1.imag * a1.real


def apply_1q(double complex[:, ::1] psi, u, Py_ssize_t target):
    cdef double complex u00 = u[0, 0], u01 = u[0, 1], u10 = u[1, 0], u11 = u[1, 1]
    cdef Py_ssize_t batch = psi.shape[0], dim = psi.shape[1]
    cdef Py_ssize_t step = 1 << target
    cdef Py_ssize_t b, i, j, i0, i1
    cdef double complex a0, a1
    cdef double r0, m0, r1, m1
    with nogil:
        for b in range(batch):
            i = 0
            while i < dim:
                for j in range(step):
                    i0 = i + j
                    i1 = i0 + step
                    a0 = psi[b, i0]
                    a1 = psi[b, i1]
                    _mul2(u00, u01, a0, a1, &r0, &m0)
                    _mul2(u10, u11, a0, a1, &r1, &m1)
                    psi[b, i0].real = r0
                    psi[b, i0].imag = m0
                    psi[b, i1].real = r1
                    psi[b, i1].imag = m1
                i += 2 * step


def apply_x(double complex[:, ::1] psi, Py_ssize_t target):
    cdef Py_ssize_t batch = psi.shape[0], dim = psi.shape[1]
    cdef Py_ssize_t step = 1 << target
    cdef Py_ssize_t b, i, j, i0
    cdef double complex t
    with nogil:
        for b in range(batch):
            i = 0
            while i < dim:
                for j in range(step):
                    i0 = i + j
                    t = psi[b, i0]
                    psi[b, i0] = psi[b, i0 + step]
                    psi[b, i0 + step] = t
                i += 2 * step


def apply_cz(double complex[:, ::1] psi, Py_ssize_t q1, Py_ssize_t q2):
    cdef Py_ssize_t batch = psi.shape[0], dim = psi.shape[1]
    cdef Py_ssize_t mask = (1 << q1) | (1 << q2)
    cdef Py_ssize_t b, i
    with nogil:
        for b in range(batch):
            for i in range(dim):
                if (i & mask) == mask:
                    psi[b, i] = -psi[b, i]


def z_expectations(double complex[:, ::1] psi, Py_ssize_t m):
    cdef Py_ssize_t batch = psi.shape[0], dim = psi.shape[1]
    out_arr = np.zeros((batch, m), dtype=np.float64)
    prob_arr = np.empty(dim, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] prob = prob_arr
    cdef Py_ssize_t b, i, j, k, step
    cdef double acc
    with nogil:
        for b in range(batch):
            for i in range(dim):
                prob[i] = psi[b, i].real * psi[b, i].real + psi[b, i].imag * psi[b, i].imag
            for k in range(m):
                step = 1 << k
                acc = 0.0
                i = 0
                while i < dim:
                    for j in range(step):
                        acc += prob[i + j] - prob[i + j + step]
                    i += 2 * step
                out[b, k] = acc
    return out_arr


def grad_1q(double complex[:, ::1] lam, double complex[:, ::1] psi, du, Py_ssize_t target):
    cdef double complex d00 = du[0, 0], d01 = du[0, 1], d10 = du[1, 0], d11 = du[1, 1]
    cdef Py_ssize_t batch = psi.shape[0], dim = psi.shape[1]
    cdef Py_ssize_t step = 1 << target
    cdef Py_ssize_t b, i, j, i0, i1
    cdef double complex a0, a1, l0, l1
    cdef double r0, q0, r1, q1
    cdef double acc
    out_arr = np.empty(batch, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for b in range(batch):
            acc = 0.0
            i = 0
            while i < dim:
                for j in range(step):
                    i0 = i + j
                    i1 = i0 + step
                    a0 = psi[b, i0]
                    a1 = psi[b, i1]
                    _mul2(d00, d01, a0, a1, &r0, &q0)
                    _mul2(d10, d11, a0, a1, &r1, &q1)
                    l0 = lam[b, i0]
                    l1 = lam[b, i1]
                    acc += l0.real * r0 + l0.imag * q0 + l1.real * r1 + l1.imag * q1
                i += 2 * step
            out[b] = acc
    return out_arr
