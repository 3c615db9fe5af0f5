"""Pure numpy implementations of the banded LU kernels.

Same contracts as the compiled extension ``mincoplan._core``; used as the
import-time fallback and for cross-checking the extension.

Band storage is row-major: ``S`` has shape ``(n, 2*l + u + 1)`` and
``S[i, c]`` holds ``A[i, i - l + c]``.  The extra ``l`` columns on the right
absorb fill-in produced by partial pivoting, so U's bandwidth may grow to
``l + u``.
"""

import numpy as np


def band_factor(S, l, u, piv, tol):
    """Factor A = P L U in place with partial pivoting.

    Multipliers overwrite the subdiagonal band, U overwrites the rest, and
    ``piv[k]`` records the row swapped into step ``k``.  Returns -1 on
    success or the step index whose pivot magnitude fell below ``tol``.
    """
    n = S.shape[0]
    ul_max = l + u
    for k in range(n):
        pl = min(l, n - 1 - k)
        ul = min(ul_max, n - 1 - k)
        # Column k of the active submatrix lives on an anti-diagonal.
        d = 0
        best = abs(S[k, l])
        for t in range(1, pl + 1):
            v = abs(S[k + t, l - t])
            if v > best:
                best = v
                d = t
        piv[k] = k + d
        if d:
            tmp = S[k, l : l + ul + 1].copy()
            S[k, l : l + ul + 1] = S[k + d, l - d : l - d + ul + 1]
            S[k + d, l - d : l - d + ul + 1] = tmp
        pivot = S[k, l]
        if abs(pivot) < tol:
            return k
        if ul:
            row_k = S[k, l + 1 : l + 1 + ul]
            for t in range(1, pl + 1):
                mult = S[k + t, l - t] / pivot
                S[k + t, l - t] = mult
                S[k + t, l - t + 1 : l - t + 1 + ul] -= mult * row_k
        else:
            for t in range(1, pl + 1):
                S[k + t, l - t] /= pivot
    return -1


def band_solve(S, l, u, piv, B):
    """Solve A X = B in place on B given the factorization from band_factor."""
    n = S.shape[0]
    ul_max = l + u
    for k in range(n):
        p = piv[k]
        if p != k:
            tmp = B[k].copy()
            B[k] = B[p]
            B[p] = tmp
        pl = min(l, n - 1 - k)
        for t in range(1, pl + 1):
            B[k + t] -= S[k + t, l - t] * B[k]
    for k in range(n - 1, -1, -1):
        ul = min(ul_max, n - 1 - k)
        if ul:
            B[k] -= S[k, l + 1 : l + 1 + ul].dot(B[k + 1 : k + 1 + ul])
        B[k] /= S[k, l]


def band_solve_adjoint(S, l, u, piv, B):
    """Solve A^T X = B in place on B, reusing the factorization of A.

    A^T = U^T L^T P^T, so run a forward substitution on U^T followed by the
    multiplier/swap steps of L in reverse order.
    """
    n = S.shape[0]
    ul_max = l + u
    for k in range(n):
        B[k] /= S[k, l]
        ul = min(ul_max, n - 1 - k)
        if ul:
            B[k + 1 : k + 1 + ul] -= S[k, l + 1 : l + 1 + ul, None] * B[k]
    for k in range(n - 1, -1, -1):
        pl = min(l, n - 1 - k)
        for t in range(1, pl + 1):
            B[k] -= S[k + t, l - t] * B[k + t]
        p = piv[k]
        if p != k:
            tmp = B[k].copy()
            B[k] = B[p]
            B[p] = tmp
