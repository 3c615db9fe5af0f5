"""Minimum-control polynomial splines parameterized by waypoints and times.

A trajectory with M pieces in R^m minimizing the integral of the squared
s-th derivative, subject to boundary derivative stacks (orders 0..s-1),
intermediate waypoints and maximal smoothness (C^(2s-2)) at the knots, is
uniquely determined by the waypoints q and the piece durations T.  Each
piece is a degree 2s-1 polynomial; all 2Ms coefficient rows come from one
banded linear system solved in O(M).  Gradients of any smooth functional
K(c, T) pull back to (q, T) through one adjoint solve with the same
factors, also in O(M).
"""

import json

import numpy as np

from . import _poly
from .banded import BandedMatrix, factorize
from .errors import DimensionMismatch, NonPositiveDuration, OutOfDomain

__all__ = [
    "Trajectory",
    "build_system",
    "construct",
    "evaluate",
    "control_effort",
    "propagate_gradient",
    "trajectory_to_dict",
    "trajectory_from_dict",
    "save_trajectory",
    "load_trajectory",
]


def _check_inputs(q, T, bc0, bcf, s):
    T = np.atleast_1d(np.asarray(T, dtype=float))
    if T.ndim != 1 or T.size < 1:
        raise DimensionMismatch("durations must be a 1-D array")
    if np.any(~np.isfinite(T)) or np.any(T <= 0.0):
        raise NonPositiveDuration("all piece durations must be positive")
    bc0 = np.asarray(bc0, dtype=float)
    bcf = np.asarray(bcf, dtype=float)
    if s < 1:
        raise DimensionMismatch("control order s must be at least 1")
    if bc0.ndim != 2 or bc0.shape[0] != s:
        raise DimensionMismatch(f"initial boundary stack must be (s={s}, m)")
    if bcf.shape != bc0.shape:
        raise DimensionMismatch("boundary stacks must have matching shapes")
    m = bc0.shape[1]
    M = T.size
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        q = np.zeros((0, m))
    if q.ndim != 2 or q.shape != (M - 1, m):
        raise DimensionMismatch(
            f"waypoints must be (M-1={M - 1}, m={m}), got {q.shape}"
        )
    return q, T, bc0, bcf, m


def _system_scales(T, s):
    """Diagonal scalings relating the assembled system to raw monomials.

    The assembled system solves for normalized coefficients
    c~[i, k] = c[i, k] * T_i^k (column scale), with derivative rows
    premultiplied so every entry stays a bounded falling factorial times a
    ratio <= 1 (row scale).  Both vectors are deterministic functions of T,
    so callers recompute them instead of threading extra state around.
    """
    M = T.size
    n_coef = 2 * s
    n = 2 * M * s
    ks = np.arange(n_coef, dtype=float)
    col = np.power(T[:, None], ks[None, :]).reshape(n)
    row = np.empty(n)
    js = np.arange(s, dtype=float)
    row[:s] = T[0] ** js
    row[n - s :] = T[-1] ** js
    if M > 1:
        mins = np.minimum(T[:-1], T[1:])
        blk = np.empty((M - 1, n_coef))
        blk[:, 0] = 1.0  # waypoint rows are left unscaled
        blk[:, 1:] = np.power(mins[:, None], ks[None, : n_coef - 1])
        row[s : n - s] = blk.reshape(-1)
    return row, col


def build_system(q, T, bc0, bcf, s):
    """Assemble the banded system A c~ = b~ defining the spline coefficients.

    Rows: s boundary rows at t=0; per interior knot one waypoint row plus
    2s-1 continuity rows (orders 0..2s-2); s boundary rows at the end.
    Returns (BandedMatrix, rhs) with rhs of shape (2Ms, m).

    The unknowns are duration-normalized coefficients c~[i, k] = c[i, k]
    T_i^k and derivative rows carry matching scale factors (see
    :func:`_system_scales`), so band entries stay O((2s-1)!) regardless of
    how wildly the durations differ; raw powers of T_i would push pivots
    below the factorization threshold for duration ratios near 1e6.
    :func:`construct` converts the solution back to raw monomial
    coefficients.
    """
    q, T, bc0, bcf, m = _check_inputs(q, T, bc0, bcf, s)
    M = T.size
    n = 2 * M * s
    n_coef = 2 * s
    l = min(s + 1, n - 1)
    u = max(0, min(s - 1, n - 1))
    A = BandedMatrix(n, l, u)
    S = A.data

    for j in range(s):
        # p^(j)(0) of the first piece: single falling-factorial entry.
        S[j, l] = _poly.deriv_coeffs(n_coef, j)[j]

    if M > 1:
        mins = np.minimum(T[:-1], T[1:])
        rho_left = mins / T[:-1]
        rho_right = mins / T[1:]
        # Waypoint rows r = s + i*2s: block columns start at r - s.
        S[s : n - s : n_coef, l - s : l - s + n_coef] = 1.0
        for j in range(n_coef - 1):
            cj = _poly.deriv_coeffs(n_coef, j)
            rows = slice(s + 1 + j, n - s, n_coef)
            # Continuity row for order j: scaled beta^(j) at the end of
            # piece i (entry k sits at band column k - j) ...
            S[rows, 0 : n_coef - j] = cj[j:][None, :] * (rho_left**j)[:, None]
            # ... minus the same derivative of piece i+1 at zero.
            S[rows, l + s - 1] = -cj[j] * rho_right**j

    for j in range(s):
        cj = _poly.deriv_coeffs(n_coef, j)
        S[n - s + j, l - s : l + s - j] = cj[j:]

    row_scale, _ = _system_scales(T, s)
    b = np.zeros((n, m))
    b[:s] = bc0 * row_scale[:s, None]
    if M > 1:
        b[s : n - s : n_coef] = q
    b[n - s :] = bcf * row_scale[n - s :, None]
    return A, b


class Trajectory:
    """Piecewise polynomial trajectory produced by :func:`construct`.

    Control orders s in 2..4 are the supported range (s=1 also works and
    gives piecewise-linear position splines).  Coefficients are stored per
    piece as (M, 2s, m): row k of piece i multiplies (t - t_i)^k.
    """

    __slots__ = ("s", "m", "durations", "coeffs", "knots", "_factors")

    def __init__(self, s, durations, coeffs, factors=None):
        self.s = int(s)
        self.durations = np.asarray(durations, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.ndim != 3 or self.coeffs.shape[:2] != (
            self.durations.size,
            2 * self.s,
        ):
            raise DimensionMismatch("coefficients must be (M, 2s, m)")
        if np.any(self.durations <= 0.0):
            raise NonPositiveDuration("all piece durations must be positive")
        self.m = self.coeffs.shape[2]
        self.knots = np.concatenate([[0.0], np.cumsum(self.durations)])
        self._factors = factors

    @property
    def n_pieces(self):
        return self.durations.size

    @property
    def total_duration(self):
        return float(self.knots[-1])

    def locate(self, t):
        """Piece index for time t; right-continuous at knots, left at the end."""
        idx = np.searchsorted(self.knots, t, side="right") - 1
        return np.clip(idx, 0, self.n_pieces - 1)

    def evaluate(self, t, order=0):
        return evaluate(self, t, order)

    def sample(self, ts, max_order):
        """Derivative orders 0..max_order at times ts: (len(ts), max_order+1, m)."""
        ts = np.asarray(ts, dtype=float)
        total = self.total_duration
        tol = 1e-9 * (1.0 + total)
        if np.any(ts < -tol) or np.any(ts > total + tol):
            raise OutOfDomain("sample time outside [0, total_duration]")
        ts = np.clip(ts, 0.0, total)
        idx = self.locate(ts)
        local = ts - self.knots[idx]
        rows = _poly.basis_stack(local, list(range(max_order + 1)), 2 * self.s)
        return np.einsum("jok,jkm->jom", rows, self.coeffs[idx])

    def piece_samples(self, taus, max_order):
        """Per-piece derivative samples on the scaled grid ``taus``.

        Returns (M, len(taus), max_order+1, m) with evaluation times
        T_i * taus on each piece.
        """
        taus = np.asarray(taus, dtype=float)
        ts = self.durations[:, None] * taus[None, :]
        rows = _poly.basis_stack(ts, list(range(max_order + 1)), 2 * self.s)
        return np.einsum("ijok,ikm->ijom", rows, self.coeffs)

    def to_dict(self):
        return trajectory_to_dict(self)

    @classmethod
    def from_dict(cls, payload):
        return trajectory_from_dict(payload)


def construct(q, T, bc0, bcf, s):
    """Build, factorize and solve the spline system; returns a Trajectory.

    The banded factorization is cached on the trajectory so that
    :func:`propagate_gradient` can run adjoint solves without refactorizing.
    """
    A, b = build_system(q, T, bc0, bcf, s)
    # The spline system is structurally nonsingular for any T > 0, so the
    # near-singularity heuristic threshold is dropped here: it misfires on
    # extreme duration ratios, where conditioning degrades like
    # (T_max/T_min)^(2s-2) even though the system stays solvable.  Exact
    # zero pivots (a genuinely degenerate or malformed system) still raise.
    F = factorize(A, pivot_tol=np.finfo(float).tiny)
    c = F.solve(b)
    T = np.atleast_1d(np.asarray(T, dtype=float))
    row_scale, col_scale = _system_scales(T, s)
    coeffs = (c / col_scale[:, None]).reshape(T.size, 2 * s, -1)
    return Trajectory(s, T, coeffs, factors=(F, row_scale, col_scale))


def evaluate(traj, t, order=0):
    """Derivative of the trajectory at scalar time t (right piece at knots)."""
    t = float(t)
    total = traj.total_duration
    tol = 1e-9 * (1.0 + total)
    if t < -tol or t > total + tol:
        raise OutOfDomain(f"t={t} outside [0, {total}]")
    t = min(max(t, 0.0), total)
    i = int(traj.locate(t))
    local = t - traj.knots[i]
    row = _poly.basis(np.asarray(local), order, 2 * traj.s)
    return row @ traj.coeffs[i]


def _gram(T, s):
    """Gram matrices of beta^(s) over [0, T_i] for all pieces.

    G[k, k'] = k!/(k-s)! k'!/(k'-s)! T^(k+k'-2s+1) / (k+k'-2s+1) on the
    trailing s x s block (k, k' >= s).
    """
    n_coef = 2 * s
    fr = _poly.deriv_coeffs(n_coef, s)[s:]
    kk = np.arange(s, 2 * s)
    expo = kk[:, None] + kk[None, :] - 2 * s + 1
    coeff = fr[:, None] * fr[None, :]
    Tpow = np.power(T[:, None, None], expo[None, :, :])
    return coeff[None] * Tpow / expo[None]


def control_effort(traj, W=None):
    """Control cost J = sum_i int ||p_i^(s)||_W^2 dt and its partials.

    W is a positive diagonal weight over the m axes (vector or diagonal
    matrix; identity by default).  Returns (J, dJ_dc, dJ_dT) where dJ_dc has
    shape (2Ms, m) and dJ_dT shape (M,); both are partials at fixed
    parameterization, ready for :func:`propagate_gradient`.
    """
    s, m, M = traj.s, traj.m, traj.n_pieces
    if W is None:
        w = np.ones(m)
    else:
        W = np.asarray(W, dtype=float)
        w = np.diag(W) if W.ndim == 2 else W
        if w.shape != (m,) or np.any(w <= 0):
            raise DimensionMismatch("W must be a positive diagonal of size m")
    tail = traj.coeffs[:, s:, :]
    G = _gram(traj.durations, s)
    Gc = np.einsum("ikl,ilm->ikm", G, tail)
    J = float(np.einsum("ikm,ikm,m->", Gc, tail, w))
    dJ_dc = np.zeros((M, 2 * s, m))
    dJ_dc[:, s:, :] = 2.0 * Gc * w[None, None, :]
    # dJ/dT_i at fixed coefficients is the integrand at the piece end.
    end_rows = _poly.basis(traj.durations, s, 2 * s)
    p_s = np.einsum("ik,ikm->im", end_rows, traj.coeffs)
    dJ_dT = np.einsum("im,im,m->i", p_s, p_s, w)
    return J, dJ_dc.reshape(2 * M * s, m), dJ_dT


def propagate_gradient(traj, dK_dc, dK_dT):
    """Pull a gradient in (c, T) back to (q, T) through the spline system.

    Solves A^T G = dK/dc with the cached factors, reads dW/dq off the
    waypoint rows of G, and corrects dK/dT by the trace terms from the
    T-dependent system blocks.  Returns (dW_dq, dW_dT) with shapes
    ((M-1, m), (M,)).
    """
    s, m, M = traj.s, traj.m, traj.n_pieces
    n = 2 * M * s
    dK_dc = np.asarray(dK_dc, dtype=float)
    dK_dT = np.asarray(dK_dT, dtype=float)
    if dK_dc.shape != (n, m):
        raise DimensionMismatch(f"dK_dc must be {(n, m)}, got {dK_dc.shape}")
    if dK_dT.shape != (M,):
        raise DimensionMismatch(f"dK_dT must be {(M,)}, got {dK_dT.shape}")
    if traj._factors is None:
        raise DimensionMismatch("trajectory carries no cached factorization")
    # The cached factors are for the scaled system D_r A D_c^-1, so the
    # adjoint solve of the raw-monomial system wraps in both diagonals:
    # A^T G = g  <=>  G = D_r (D_r A D_c^-1)^-T (D_c^-1 g).
    F, row_scale, col_scale = traj._factors
    G = row_scale[:, None] * F.solve_adjoint(dK_dc / col_scale[:, None])

    n_coef = 2 * s
    dW_dT = dK_dT.copy()
    if M > 1:
        dW_dq = G[s : n - s : n_coef].copy()
        # Interior block i: rows [waypoint; continuity 0..2s-2], all rows of
        # E_i differentiate to the next derivative order at T_i.
        orders = [1] + list(range(1, n_coef))
        Bi = _poly.basis_stack(traj.durations[:-1], orders, n_coef)
        vals = np.einsum("irk,ikm->irm", Bi, traj.coeffs[:-1])
        Gblk = G[s : n - s].reshape(M - 1, n_coef, m)
        dW_dT[:-1] -= np.einsum("irm,irm->i", vals, Gblk)
    else:
        dW_dq = np.zeros((0, m))
    BM = _poly.basis_stack(traj.durations[-1], list(range(1, s + 1)), n_coef)
    valsM = BM @ traj.coeffs[-1]
    dW_dT[-1] -= float(np.sum(valsM * G[n - s :]))
    return dW_dq, dW_dT


def trajectory_to_dict(traj):
    """JSON-ready dict: {s, m, durations, coeffs[piece][row][col]}."""
    return {
        "s": traj.s,
        "m": traj.m,
        "durations": traj.durations.tolist(),
        "coeffs": traj.coeffs.tolist(),
    }


def trajectory_from_dict(payload):
    try:
        s = int(payload["s"])
        m = int(payload["m"])
        durations = np.asarray(payload["durations"], dtype=float)
        coeffs = np.asarray(payload["coeffs"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionMismatch(f"malformed trajectory payload: {exc}")
    if coeffs.shape != (durations.size, 2 * s, m):
        raise DimensionMismatch(
            f"coefficient array must be (M, 2s, m), got {coeffs.shape}"
        )
    return Trajectory(s, durations, coeffs)


def save_trajectory(traj, path):
    with open(path, "w") as fh:
        json.dump(trajectory_to_dict(traj), fh, indent=2)


def load_trajectory(path):
    with open(path) as fh:
        return trajectory_from_dict(json.load(fh))
