"""Banded linear algebra with partial pivoting.

Square banded matrices are stored row-major: row ``i`` of the storage holds
the matrix entries ``A[i, i - l : i + l + u + 1]``, where ``l``/``u`` are the
lower/upper bandwidths.  The extra ``l`` columns beyond the upper band absorb
the fill-in that row swaps can create, so factorization happens fully in
place.  Factorization costs O(n * bw^2) and each solve O(n * bw * nrhs); the
adjoint solve reuses the same factors, so systems with A and A^T cost one
factorization total.
"""

import numpy as np

from . import _backend
from .errors import DimensionMismatch, SingularMatrix

__all__ = ["BandedMatrix", "PLUFactors", "factorize", "solve", "solve_adjoint"]


class BandedMatrix:
    """Square banded matrix in row-major band storage.

    Entry ``A[i, j]`` (with ``|i - j|`` inside the band) lives at
    ``data[i, j - i + lower_bw]``.
    """

    __slots__ = ("n", "lower_bw", "upper_bw", "data")

    def __init__(self, n, lower_bw, upper_bw, data=None):
        if n < 1:
            raise DimensionMismatch("matrix dimension must be positive")
        if lower_bw < 0 or upper_bw < 0 or lower_bw >= n or upper_bw >= n:
            raise DimensionMismatch(
                f"bandwidths ({lower_bw}, {upper_bw}) invalid for n={n}"
            )
        self.n = n
        self.lower_bw = lower_bw
        self.upper_bw = upper_bw
        width = 2 * lower_bw + upper_bw + 1
        if data is None:
            self.data = np.zeros((n, width))
        else:
            if data.shape != (n, width):
                raise DimensionMismatch(
                    f"band storage must be {(n, width)}, got {data.shape}"
                )
            self.data = np.ascontiguousarray(data, dtype=float)

    @classmethod
    def from_dense(cls, D, lower_bw=None, upper_bw=None):
        D = np.asarray(D, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise DimensionMismatch("dense input must be square")
        n = D.shape[0]
        rows, cols = np.nonzero(D)
        if lower_bw is None:
            lower_bw = int(np.max(rows - cols)) if rows.size else 0
            lower_bw = max(lower_bw, 0)
        if upper_bw is None:
            upper_bw = int(np.max(cols - rows)) if cols.size else 0
            upper_bw = max(upper_bw, 0)
        A = cls(n, lower_bw, upper_bw)
        for i in range(n):
            lo = max(0, i - lower_bw)
            hi = min(n, i + upper_bw + 1)
            A.data[i, lo - i + lower_bw : hi - i + lower_bw] = D[i, lo:hi]
        return A

    def to_dense(self):
        D = np.zeros((self.n, self.n))
        l = self.lower_bw
        for i in range(self.n):
            lo = max(0, i - l)
            hi = min(self.n, i + self.upper_bw + 1)
            D[i, lo:hi] = self.data[i, lo - i + l : hi - i + l]
        return D

    def copy(self):
        return BandedMatrix(self.n, self.lower_bw, self.upper_bw, self.data.copy())


class PLUFactors:
    """P L U factors of a banded matrix, stored in the band layout."""

    __slots__ = ("n", "lower_bw", "upper_bw", "data", "piv", "_backend")

    def __init__(self, n, lower_bw, upper_bw, data, piv, backend):
        self.n = n
        self.lower_bw = lower_bw
        self.upper_bw = upper_bw
        self.data = data
        self.piv = piv
        self._backend = backend

    def solve(self, B):
        return _run_solve(self, B, adjoint=False)

    def solve_adjoint(self, B):
        return _run_solve(self, B, adjoint=True)


def factorize(A, pivot_tol=1e-12):
    """Factor a BandedMatrix in place and return PLUFactors.

    The storage of ``A`` is reused for the factors, so ``A`` must not be used
    as a matrix afterwards.  Raises SingularMatrix when a pivot falls below
    ``pivot_tol`` times the largest initial band magnitude.
    """
    if not isinstance(A, BandedMatrix):
        raise DimensionMismatch("factorize expects a BandedMatrix")
    kern = _backend.current()
    S = A.data
    amax = float(np.max(np.abs(S))) if S.size else 0.0
    if amax == 0.0:
        raise SingularMatrix("matrix is identically zero")
    piv = np.zeros(A.n, dtype=np.intp)
    bad = kern.band_factor(S, A.lower_bw, A.upper_bw, piv, pivot_tol * amax)
    if bad >= 0:
        raise SingularMatrix(f"pivot below threshold at elimination step {bad}")
    return PLUFactors(A.n, A.lower_bw, A.upper_bw, S, piv, kern)


def _run_solve(F, B, adjoint):
    B = np.asarray(B, dtype=float)
    squeeze = B.ndim == 1
    if squeeze:
        B = B[:, None]
    if B.ndim != 2 or B.shape[0] != F.n:
        raise DimensionMismatch(f"rhs must have {F.n} rows, got shape {B.shape}")
    X = np.ascontiguousarray(B.copy())
    if adjoint:
        F._backend.band_solve_adjoint(F.data, F.lower_bw, F.upper_bw, F.piv, X)
    else:
        F._backend.band_solve(F.data, F.lower_bw, F.upper_bw, F.piv, X)
    return X[:, 0] if squeeze else X


def solve(F, B):
    """Solve A X = B given factors of A."""
    return F.solve(B)


def solve_adjoint(F, B):
    """Solve A^T X = B reusing the factors of A (no refactorization)."""
    return F.solve_adjoint(B)
