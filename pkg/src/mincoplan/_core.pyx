# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled banded LU kernels.

Same contracts and band layout as the pure numpy fallback
``mincoplan._core_py``: row-major storage S[i, c] = A[i, i - l + c] of
width 2*l + u + 1, partial pivoting, multipliers kept in the subdiagonal
band, pivot rows recorded in ``piv``.
"""

from libc.math cimport fabs


cpdef Py_ssize_t band_factor(double[:, ::1] S, Py_ssize_t l, Py_ssize_t u,
                             Py_ssize_t[::1] piv, double tol):
    """Factor A = P L U in place; return -1 on success, failing step else."""
    cdef Py_ssize_t n = S.shape[0]
    cdef Py_ssize_t ul_max = l + u
    cdef Py_ssize_t k, t, j, d, pl, ul
    cdef double best, v, pivot, mult, tmp
    for k in range(n):
        pl = l
        if n - 1 - k < pl:
            pl = n - 1 - k
        ul = ul_max
        if n - 1 - k < ul:
            ul = n - 1 - k
        d = 0
        best = fabs(S[k, l])
        for t in range(1, pl + 1):
            v = fabs(S[k + t, l - t])
            if v > best:
                best = v
                d = t
        piv[k] = k + d
        if d != 0:
            for j in range(ul + 1):
                tmp = S[k, l + j]
                S[k, l + j] = S[k + d, l - d + j]
                S[k + d, l - d + j] = tmp
        pivot = S[k, l]
        if fabs(pivot) < tol:
            return k
        for t in range(1, pl + 1):
            mult = S[k + t, l - t] / pivot
            S[k + t, l - t] = mult
            for j in range(1, ul + 1):
                S[k + t, l - t + j] -= mult * S[k, l + j]
    return -1


cpdef void band_solve(double[:, ::1] S, Py_ssize_t l, Py_ssize_t u,
                      Py_ssize_t[::1] piv, double[:, ::1] B):
    """Solve A X = B in place on B."""
    cdef Py_ssize_t n = S.shape[0]
    cdef Py_ssize_t m = B.shape[1]
    cdef Py_ssize_t ul_max = l + u
    cdef Py_ssize_t k, t, j, c, p, pl, ul
    cdef double mult, acc, tmp
    for k in range(n):
        p = piv[k]
        if p != k:
            for c in range(m):
                tmp = B[k, c]
                B[k, c] = B[p, c]
                B[p, c] = tmp
        pl = l
        if n - 1 - k < pl:
            pl = n - 1 - k
        for t in range(1, pl + 1):
            mult = S[k + t, l - t]
            if mult != 0.0:
                for c in range(m):
                    B[k + t, c] -= mult * B[k, c]
    for k in range(n - 1, -1, -1):
        ul = ul_max
        if n - 1 - k < ul:
            ul = n - 1 - k
        for c in range(m):
            acc = B[k, c]
            for j in range(1, ul + 1):
                acc -= S[k, l + j] * B[k + j, c]
            B[k, c] = acc / S[k, l]


cpdef void band_solve_adjoint(double[:, ::1] S, Py_ssize_t l, Py_ssize_t u,
                              Py_ssize_t[::1] piv, double[:, ::1] B):
    """Solve A^T X = B in place on B, reusing A's factorization."""
    cdef Py_ssize_t n = S.shape[0]
    cdef Py_ssize_t m = B.shape[1]
    cdef Py_ssize_t ul_max = l + u
    cdef Py_ssize_t k, t, j, c, p, pl, ul
    cdef double coeff, tmp
    for k in range(n):
        for c in range(m):
            B[k, c] /= S[k, l]
        ul = ul_max
        if n - 1 - k < ul:
            ul = n - 1 - k
        for j in range(1, ul + 1):
            coeff = S[k, l + j]
            if coeff != 0.0:
                for c in range(m):
                    B[k + j, c] -= coeff * B[k, c]
    for k in range(n - 1, -1, -1):
        pl = l
        if n - 1 - k < pl:
            pl = n - 1 - k
        for t in range(1, pl + 1):
            coeff = S[k + t, l - t]
            if coeff != 0.0:
                for c in range(m):
                    B[k, c] -= coeff * B[k + t, c]
        p = piv[k]
        if p != k:
            for c in range(m):
                tmp = B[k, c]
                B[k, c] = B[p, c]
                B[p, c] = tmp
