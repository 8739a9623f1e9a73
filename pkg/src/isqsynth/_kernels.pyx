# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation kernels (same contract as _kernels_py)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def apply_gate(cnp.ndarray state, int nq, qubits, cnp.ndarray mat):
    cdef Py_ssize_t k = len(qubits)
    cdef Py_ssize_t d = 1 << k
    cdef Py_ssize_t dim = 1 << nq
    cdef Py_ssize_t cols = state.shape[1]
    cdef double complex[:, :] s = state
    cdef double complex[:, :] m = np.ascontiguousarray(mat, dtype=np.complex128)
    cdef long[:] qs = np.asarray(qubits, dtype=np.int64)
    cdef long[:] offs = np.zeros(d, dtype=np.int64)
    cdef double complex[:] buf = np.zeros(d, dtype=np.complex128)
    cdef long mask = 0
    cdef Py_ssize_t i, j, l, r, c
    cdef double complex acc
    for j in range(k):
        mask |= 1 << qs[j]
    for l in range(d):
        for j in range(k):
            if (l >> j) & 1:
                offs[l] |= 1 << qs[j]
    for i in range(dim):
        if i & mask:
            continue
        for c in range(cols):
            for l in range(d):
                buf[l] = s[i + offs[l], c]
            for r in range(d):
                acc = 0
                for l in range(d):
                    acc = acc + m[r, l] * buf[l]
                s[i + offs[r], c] = acc


def apply_perm(cnp.ndarray state, cnp.ndarray table):
    cdef double complex[:, :] s = state
    cdef double complex[:, :] src = state.copy()
    cdef long[:] t = np.asarray(table, dtype=np.int64)
    cdef Py_ssize_t i, c, cols = state.shape[1]
    for i in range(t.shape[0]):
        for c in range(cols):
            s[t[i], c] = src[i, c]


def basis_perm_table(int nq, qubits, local_map):
    cdef Py_ssize_t dim = 1 << nq
    cdef long[:] qs = np.asarray(qubits, dtype=np.int64)
    cdef long[:] lm = np.asarray(local_map, dtype=np.int64)
    out_arr = np.empty(dim, dtype=np.int64)
    cdef long[:] out = out_arr
    cdef Py_ssize_t k = qs.shape[0]
    cdef long idx, local, img, v
    cdef Py_ssize_t j
    for idx in range(dim):
        local = 0
        for j in range(k):
            local |= ((idx >> qs[j]) & 1) << j
        img = lm[local]
        v = idx
        for j in range(k):
            v &= ~(1 << qs[j])
            v |= ((img >> j) & 1) << qs[j]
        out[idx] = v
    return out_arr
