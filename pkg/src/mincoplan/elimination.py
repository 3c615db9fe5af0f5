"""Smooth surjections that eliminate temporal and spatial constraints.

Durations and waypoints never enter the optimizer directly: durations come
from an unconstrained vector tau through a positive/fixed-total map, and
each waypoint comes from an unconstrained vector xi through a surjection
onto its ball or convex-polytope region.  All maps provide forward,
(local) backward, and exact gradient pullback, so the outer problem stays
unconstrained and stationary points correspond to stationary points of the
original problem wherever the maps are diffeomorphic.
"""

import numpy as np
from scipy.optimize import nnls

from .errors import DimensionMismatch, DomainViolation

__all__ = ["TimeMap", "BallMap", "PolytopeMap"]

# exp() arguments are clamped here to keep the maps total over float inputs.
_EXP_CLAMP = 40.0


def _cexp(x):
    return np.exp(np.clip(x, -_EXP_CLAMP, _EXP_CLAMP))


class TimeMap:
    """Map from unconstrained tau to positive piece durations.

    kind="free_positive": T_i = exp(tau_i), tau in R^M.
    kind="fixed_total":   T_i = exp(tau_i) * T_total / (1 + sum_j exp(tau_j))
    for i < M, with T_M the exact remainder; tau in R^(M-1).
    """

    def __init__(self, n_pieces, kind="free_positive", total=None):
        if kind not in ("free_positive", "fixed_total"):
            raise DimensionMismatch(f"unknown time map kind {kind!r}")
        if n_pieces < 1:
            raise DimensionMismatch("need at least one piece")
        if kind == "fixed_total":
            if total is None or not (total > 0):
                raise DimensionMismatch("fixed_total map needs a positive total")
        self.kind = kind
        self.n_pieces = int(n_pieces)
        self.total = float(total) if total is not None else None

    @property
    def dim(self):
        return self.n_pieces if self.kind == "free_positive" else self.n_pieces - 1

    def _check_tau(self, tau):
        tau = np.asarray(tau, dtype=float)
        if tau.shape != (self.dim,):
            raise DimensionMismatch(f"tau must have shape ({self.dim},)")
        return tau

    def forward(self, tau):
        tau = self._check_tau(tau)
        if self.kind == "free_positive":
            return _cexp(tau)
        e = _cexp(tau)
        denom = 1.0 + e.sum()
        T = np.empty(self.n_pieces)
        T[:-1] = e * (self.total / denom)
        T[-1] = self.total - T[:-1].sum()
        return T

    def backward(self, T):
        """A tau with forward(tau) = T; exact where the map is invertible."""
        T = np.asarray(T, dtype=float)
        if T.shape != (self.n_pieces,):
            raise DimensionMismatch(f"T must have shape ({self.n_pieces},)")
        if np.any(T <= 0.0):
            raise DomainViolation("durations must be positive")
        if self.kind == "free_positive":
            return np.log(T)
        if abs(T.sum() - self.total) > 1e-9 * self.total:
            raise DomainViolation(
                f"durations sum to {T.sum()}, map requires {self.total}"
            )
        return np.log(T[:-1] / T[-1])

    def pullback(self, tau, g_T):
        """Chain rule: gradient w.r.t. tau of J(T(tau)) given g_T = dJ/dT."""
        tau = self._check_tau(tau)
        g_T = np.asarray(g_T, dtype=float)
        if g_T.shape != (self.n_pieces,):
            raise DimensionMismatch(f"g_T must have shape ({self.n_pieces},)")
        if self.kind == "free_positive":
            return g_T * _cexp(tau)
        e = _cexp(tau)
        denom = 1.0 + e.sum()
        ga, gb = g_T[:-1], g_T[-1]
        # d T_i / d tau_j = total * e_i (delta_ij * denom - e_j) / denom^2,
        # d T_M / d tau_j = -total * e_j / denom^2.
        lin = (ga - gb) * e / denom
        quad = (ga @ e - gb * e.sum()) * e / denom**2
        return self.total * (lin - quad)


class BallMap:
    """Surjection of R^n onto a closed ball, optionally embedded in R^m.

    forward(xi) = center + basis @ (2 r xi / (xi^T xi + 1)); with no basis
    the ball is full-dimensional and the embedding is the identity.  The
    embedded form covers disk-shaped waypoint sets (ball-ball overlaps).
    """

    def __init__(self, center, radius, basis=None):
        self.center = np.asarray(center, dtype=float)
        if self.center.ndim != 1:
            raise DimensionMismatch("center must be a vector")
        if not (radius > 0):
            raise DimensionMismatch("radius must be positive")
        self.radius = float(radius)
        if basis is not None:
            basis = np.asarray(basis, dtype=float)
            if basis.ndim != 2 or basis.shape[0] != self.center.size:
                raise DimensionMismatch("basis must be (m, n)")
            if basis.shape[1] > basis.shape[0]:
                raise DimensionMismatch("embedded dimension exceeds ambient")
            if not np.allclose(basis.T @ basis, np.eye(basis.shape[1]), atol=1e-10):
                raise DimensionMismatch("basis columns must be orthonormal")
        self.basis = basis

    @property
    def dim(self):
        return self.center.size if self.basis is None else self.basis.shape[1]

    @property
    def ambient_dim(self):
        return self.center.size

    def forward(self, xi):
        """Map xi (..., dim) into the ball."""
        xi = np.asarray(xi, dtype=float)
        nsq = np.sum(xi * xi, axis=-1, keepdims=True)
        local = 2.0 * self.radius * xi / (nsq + 1.0)
        if self.basis is not None:
            local = local @ self.basis.T
        return self.center + local

    def backward(self, q):
        """The small-norm preimage of a point inside the ball."""
        q = np.asarray(q, dtype=float)
        if q.shape != self.center.shape:
            raise DimensionMismatch("point has wrong ambient dimension")
        d = q - self.center
        if self.basis is not None:
            local = self.basis.T @ d
            resid = d - self.basis @ local
            if np.linalg.norm(resid) > 1e-9 * (1.0 + self.radius):
                raise DomainViolation("point lies off the embedded disk plane")
            d = local
        r = self.radius
        rho2 = float(d @ d)
        if rho2 > r * r * (1.0 + 1e-12) + 1e-300:
            raise DomainViolation("point lies outside the ball")
        rho2 = min(rho2, r * r)
        if rho2 == 0.0:
            return np.zeros(self.dim)
        return (r - np.sqrt(max(r * r - rho2, 0.0))) * d / rho2

    def pullback(self, xi, g_q):
        """Gradient w.r.t. xi of J(forward(xi)) given g_q = dJ/dq."""
        xi = np.asarray(xi, dtype=float)
        g_q = np.asarray(g_q, dtype=float)
        g = g_q if self.basis is None else g_q @ self.basis
        nsq = np.sum(xi * xi, axis=-1, keepdims=True) + 1.0
        dot = np.sum(xi * g, axis=-1, keepdims=True)
        r = self.radius
        return 2.0 * r * g / nsq - 4.0 * r * dot * xi / nsq**2


class PolytopeMap:
    """Surjection of R^dim onto a convex polytope given by its vertices.

    With vertices (v_0 ... v_K), dim = K, the map squares a unit-ball
    surjection into barycentric weights on the standard simplex:
    forward(xi) = v_0 + Vhat @ w, w_k = 4 xi_k^2 / (xi^T xi + 1)^2,
    Vhat = (v_1 - v_0, ...).  An optional H-rep (A, b) enables membership
    checks on forward/backward results.
    """

    def __init__(self, vertices, halfspaces=None):
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[0] < 2:
            raise DimensionMismatch("need at least two vertices (v0 + spans)")
        self.vertices = V
        self.v0 = V[0]
        self.span = (V[1:] - V[0]).T  # (m, K)
        self.halfspaces = None
        if halfspaces is not None:
            A, b = halfspaces
            self.halfspaces = (np.asarray(A, dtype=float), np.asarray(b, dtype=float))

    @property
    def dim(self):
        return self.vertices.shape[0] - 1

    @property
    def ambient_dim(self):
        return self.vertices.shape[1]

    def forward(self, xi):
        xi = np.asarray(xi, dtype=float)
        nsq = np.sum(xi * xi, axis=-1, keepdims=True) + 1.0
        w = 4.0 * xi * xi / nsq**2
        return self.v0 + w @ self.span.T

    def backward(self, q, tol=1e-6):
        """A preimage of a point of the polytope.

        Recovers simplex weights by nonnegative least squares over the
        (small) vertex set, inverts the squaring and the ball map
        analytically, then verifies the round trip; a short projected
        refinement handles points that NNLS resolves poorly.
        """
        q = np.asarray(q, dtype=float)
        if q.shape != (self.ambient_dim,):
            raise DimensionMismatch("point has wrong ambient dimension")
        if self.halfspaces is not None:
            A, b = self.halfspaces
            viol = float(np.max(A @ q - b)) if A.size else 0.0
            if viol > 1e-9 * (1.0 + np.abs(b).max(initial=1.0)):
                raise DomainViolation(f"point violates H-rep by {viol}")
        # Barycentric weights over all vertices: rows [V^T; 1] lam = [q; 1].
        Vt = np.vstack([self.vertices.T, np.ones(self.vertices.shape[0])])
        rhs = np.concatenate([q, [1.0]])
        lam, _ = nnls(Vt, rhs)
        ssum = lam.sum()
        if ssum > 0:
            lam = lam / ssum
        w = lam[1:]
        xi = self._weights_to_xi(w)
        if np.linalg.norm(self.forward(xi) - q) <= tol * (1.0 + np.linalg.norm(q)):
            return xi
        xi = self._refine(xi, q)
        if np.linalg.norm(self.forward(xi) - q) > tol * (1.0 + np.linalg.norm(q)):
            raise DomainViolation("could not recover a preimage inside tolerance")
        return xi

    def _weights_to_xi(self, w):
        w = np.maximum(np.asarray(w, dtype=float), 0.0)
        total = w.sum()
        if total > 1.0:
            w = w / total
        x = np.sqrt(w)
        nx2 = float(x @ x)
        if nx2 == 0.0:
            return np.zeros(self.dim)
        # Invert the unit-ball surjection x = 2 xi / (|xi|^2 + 1).
        nx2 = min(nx2, 1.0)
        factor = (1.0 - np.sqrt(max(1.0 - nx2, 0.0))) / nx2
        return factor * x

    def _refine(self, xi, q, iters=250):
        """Gauss-Newton on |forward(xi) - q|^2 as a safety net."""
        xi = xi.copy()
        for _ in range(iters):
            r = self.forward(xi) - q
            err = np.linalg.norm(r)
            if err < 1e-12:
                break
            J = self._jacobian(xi)
            step, *_ = np.linalg.lstsq(J, -r, rcond=None)
            t = 1.0
            base = err
            for _ in range(30):
                cand = xi + t * step
                if np.linalg.norm(self.forward(cand) - q) < base:
                    xi = cand
                    break
                t *= 0.5
            else:
                break
        return xi

    def _jacobian(self, xi):
        nsq = float(xi @ xi) + 1.0
        dw = 8.0 * np.diag(xi) / nsq**2 - 16.0 * np.outer(xi * xi, xi) / nsq**3
        return self.span @ dw

    def pullback(self, xi, g_q):
        """Gradient w.r.t. xi of J(forward(xi)) given g_q = dJ/dq."""
        xi = np.asarray(xi, dtype=float)
        g_q = np.asarray(g_q, dtype=float)
        vg = g_q @ self.span  # (..., K)
        nsq = np.sum(xi * xi, axis=-1, keepdims=True) + 1.0
        sq = np.sum(vg * xi * xi, axis=-1, keepdims=True)
        return 8.0 * xi * vg / nsq**2 - 16.0 * sq * xi / nsq**3
