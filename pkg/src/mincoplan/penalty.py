"""Time-integral penalties over trajectory pieces.

Continuous-time inequality constraints G(p, p', ...) <= 0 are relaxed to a
weighted integral of max(G, 0)^k sampled on a per-piece uniform grid with
trapezoidal weights.  With k = 3 the penalty is C^2 across activation
boundaries.  The integral and its exact gradients w.r.t. piece coefficients
and durations feed the spline gradient propagation.

Evaluators receive batched derivative stacks of shape (N, s+1, m) (orders
0..s) and return values (N, n_out) plus gradients (N, n_out, s+1, m).
Entries may be restricted to a subset of pieces (corridor containment is
assigned piece-wise).
"""

import dataclasses

import numpy as np

from . import _poly, flatness
from .errors import DimensionMismatch

__all__ = [
    "ConstraintEntry",
    "ConstraintSet",
    "SpeedLimit",
    "AccelLimit",
    "PolytopeContain",
    "BallContain",
    "ThrustWindow",
    "BodyRateLimit",
    "EllipsoidInPolytope",
    "builtin_evaluators",
    "integrate_penalty",
    "sample_constraints",
    "max_violations",
]


class SpeedLimit:
    """||p'||^2 - v_max^2 <= 0, optionally divided by a normalizing scale."""

    n_out = 1

    def __init__(self, v_max, scale=1.0):
        self.v_max = float(v_max)
        self.scale = float(scale)

    def __call__(self, derivs):
        v = derivs[:, 1, :]
        vals = (np.sum(v * v, axis=1) - self.v_max**2) / self.scale
        grads = np.zeros((derivs.shape[0], 1) + derivs.shape[1:])
        grads[:, 0, 1, :] = 2.0 * v / self.scale
        return vals[:, None], grads


class AccelLimit:
    """||p''||^2 - a_max^2 <= 0."""

    n_out = 1

    def __init__(self, a_max, scale=1.0):
        self.a_max = float(a_max)
        self.scale = float(scale)

    def __call__(self, derivs):
        a = derivs[:, 2, :]
        vals = (np.sum(a * a, axis=1) - self.a_max**2) / self.scale
        grads = np.zeros((derivs.shape[0], 1) + derivs.shape[1:])
        grads[:, 0, 2, :] = 2.0 * a / self.scale
        return vals[:, None], grads


class PolytopeContain:
    """A p - b <= 0 with unit-norm rows, so violations are in meters."""

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0.0):
            raise DimensionMismatch("zero normal row")
        self.A = A / norms[:, None]
        self.b = b / norms
        self.n_out = self.A.shape[0]

    def __call__(self, derivs):
        p = derivs[:, 0, :]
        vals = p @ self.A.T - self.b[None, :]
        grads = np.zeros((derivs.shape[0], self.n_out) + derivs.shape[1:])
        grads[:, :, 0, :] = self.A[None, :, :]
        return vals, grads


class BallContain:
    """(||p - o||^2 - r^2) / (2r) <= 0; near the boundary this is metric."""

    n_out = 1

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def __call__(self, derivs):
        d = derivs[:, 0, :] - self.center[None, :]
        vals = (np.sum(d * d, axis=1) - self.radius**2) / (2.0 * self.radius)
        grads = np.zeros((derivs.shape[0], 1) + derivs.shape[1:])
        grads[:, 0, 0, :] = d / self.radius
        return vals[:, None], grads


class ThrustWindow:
    """f_min <= ||a + g e3|| <= f_max as two one-sided constraints."""

    n_out = 2

    def __init__(self, f_min, f_max, scale=1.0, gravity=flatness.GRAVITY):
        if not (0 < f_min < f_max):
            raise DimensionMismatch("need 0 < f_min < f_max")
        self.f_min = float(f_min)
        self.f_max = float(f_max)
        self.scale = float(scale)
        self.gravity = float(gravity)

    def __call__(self, derivs):
        tv = derivs[:, 2, :].copy()
        tv[:, 2] += self.gravity
        f = np.linalg.norm(tv, axis=1)
        f_safe = np.maximum(f, 1e-12)
        z = tv / f_safe[:, None]
        vals = np.stack([(self.f_min - f), (f - self.f_max)], axis=1) / self.scale
        grads = np.zeros((derivs.shape[0], 2) + derivs.shape[1:])
        grads[:, 0, 2, :] = -z / self.scale
        grads[:, 1, 2, :] = z / self.scale
        return vals, grads


class BodyRateLimit:
    """||omega||^2 - w_max^2 <= 0 in the zero-yaw chart."""

    n_out = 1

    def __init__(self, omega_max, scale=1.0, gravity=flatness.GRAVITY):
        self.omega_max = float(omega_max)
        self.scale = float(scale)
        self.gravity = float(gravity)

    def __call__(self, derivs):
        a = derivs[:, 2, :]
        j = derivs[:, 3, :]
        _, _, w, cache = flatness.flat_to_state_batch(a, j, self.gravity)
        vals = (np.sum(w * w, axis=1) - self.omega_max**2) / self.scale
        ga, gj = flatness.flat_to_state_pullback_batch(
            cache, g_omega=2.0 * w / self.scale
        )
        grads = np.zeros((derivs.shape[0], 1) + derivs.shape[1:])
        grads[:, 0, 2, :] = ga
        grads[:, 0, 3, :] = gj
        return vals[:, None], grads


class EllipsoidInPolytope:
    """Attitude-dependent safety: the body ellipsoid stays inside A x <= b.

    The vehicle occupies p + R Q B1 (Q = diag(rx, ry, rz)); per unit-norm
    facet row a the support condition is ||Q R^T a|| + a.p - b <= 0, in
    meters.
    """

    def __init__(self, A, b, radii, gravity=flatness.GRAVITY):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        norms = np.linalg.norm(A, axis=1)
        self.A = A / norms[:, None]
        self.b = b / norms
        self.Q = np.asarray(radii, dtype=float)
        if self.Q.shape != (3,) or np.any(self.Q <= 0):
            raise DimensionMismatch("radii must be three positive semi-axes")
        self.gravity = float(gravity)
        self.n_out = self.A.shape[0]

    def __call__(self, derivs):
        p = derivs[:, 0, :]
        a = derivs[:, 2, :]
        j = derivs[:, 3, :]
        N = derivs.shape[0]
        # Attitude only; the rate chain never feeds this constraint.
        R, _, _, cache = flatness.flat_to_state_batch(
            a, j, self.gravity, with_rates=False
        )
        # y_k = Q R^T a_k per facet: (N, K, 3)
        Rta = np.einsum("nji,kj->nki", R, self.A)
        y = Rta * self.Q[None, None, :]
        ny = np.sqrt(np.einsum("nki,nki->nk", y, y))
        ny_safe = np.maximum(ny, 1e-12)
        vals = ny + p @ self.A.T - self.b[None, :]
        # d||Q R^T a||/dR = a (Q^2 R^T a)^T / ||.||
        w = Rta * (self.Q**2)[None, None, :] / ny_safe[:, :, None]
        gR = np.einsum("kj,nki->nkji", self.A, w)  # (N, K, 3, 3)
        ga, _ = flatness.flat_to_state_pullback_batch(
            _tile_cache(cache, self.n_out), g_R=gR.reshape(N * self.n_out, 3, 3)
        )
        grads = np.zeros((N, self.n_out) + derivs.shape[1:])
        grads[:, :, 0, :] = self.A[None, :, :]
        grads[:, :, 2, :] = ga.reshape(N, self.n_out, 3)
        return vals, grads


def _tile_cache(cache, reps):
    """Repeat each cached sample ``reps`` times along the batch axis."""
    out = {}
    for key, arr in cache.items():
        out[key] = np.repeat(arr, reps, axis=0)
    return out


def builtin_evaluators():
    """Catalog of the provided constraint evaluators."""
    return {
        "speed": SpeedLimit,
        "accel": AccelLimit,
        "polytope_contain": PolytopeContain,
        "ball_contain": BallContain,
        "thrust_window": ThrustWindow,
        "body_rate": BodyRateLimit,
        "ellipsoid_in_polytope": EllipsoidInPolytope,
    }


@dataclasses.dataclass
class ConstraintEntry:
    name: str
    evaluator: object
    weight: float
    pieces: object = None  # None = all pieces, else array of piece indices

    def piece_indices(self, M):
        if self.pieces is None:
            return np.arange(M)
        idx = np.atleast_1d(np.asarray(self.pieces, dtype=int))
        if idx.size and (idx.min() < 0 or idx.max() >= M):
            raise DimensionMismatch(f"entry {self.name!r} references missing pieces")
        return idx


class ConstraintSet:
    """Weighted constraint entries plus quadrature settings.

    ``resolution`` is the per-piece sample count kappa (int, or one per
    piece); ``exponent`` is the power applied to the clipped violation.
    Entry weights may be changed between integrations, but the entry list
    and piece assignments are treated as fixed once integration starts
    (piece routing is cached).
    """

    def __init__(self, entries, resolution=16, exponent=3):
        self.entries = list(entries)
        self.resolution = resolution
        if exponent < 2:
            raise DimensionMismatch("penalty exponent must be >= 2 for C^1")
        self.exponent = int(exponent)
        self._plans = {}

    def resolutions(self, M):
        kap = np.broadcast_to(np.asarray(self.resolution, dtype=int), (M,)).copy()
        if np.any(kap < 1):
            raise DimensionMismatch("resolution must be at least 1 per piece")
        return kap

    def _plan(self, M, factor=1):
        """Per-kappa-group entry routing: [(kappa, group, [(entry, idx, loc)])]."""
        kap = self.resolutions(M) * int(factor)
        key = (M, kap.tobytes())
        plan = self._plans.get(key)
        if plan is None:
            plan = []
            for kappa in np.unique(kap):
                group = np.flatnonzero(kap == kappa)
                pos = {int(g): i for i, g in enumerate(group)}
                items = []
                for entry in self.entries:
                    idx = entry.piece_indices(M)
                    idx = idx[np.isin(idx, group)]
                    if idx.size == 0:
                        continue
                    loc = np.array([pos[int(i)] for i in idx])
                    items.append((entry, idx, loc))
                plan.append((int(kappa), group, items))
            self._plans[key] = plan
        return plan


def _trapezoid_weights(kappa):
    w = np.ones(kappa + 1)
    w[0] = 0.5
    w[-1] = 0.5
    return w


def integrate_penalty(cs, traj):
    """Penalty integral I(c, T) and its partials (dI_dc, dI_dT).

    Gradients are taken at fixed parameterization: dI_dc has shape
    (2Ms, m), dI_dT shape (M,).  Sampling is piece-major, stamp-minor with
    a fixed reduction order, so results are bit-reproducible.
    """
    s, m, M = traj.s, traj.m, traj.n_pieces
    k_exp = cs.exponent
    total = 0.0
    dI_dc = np.zeros((M, 2 * s, m))
    dI_dT = np.zeros(M)
    for kappa, group, items in cs._plan(M):
        taus = np.arange(kappa + 1) / kappa
        wq = _trapezoid_weights(kappa)
        ts = traj.durations[group, None] * taus[None, :]
        rows = _poly.basis_stack(ts, list(range(s + 2)), 2 * s)
        D = np.einsum("pjok,pkm->pjom", rows, traj.coeffs[group])
        for entry, idx, loc in items:
            P = idx.size
            sub = D[loc][:, :, : s + 1].reshape(P * (kappa + 1), s + 1, m)
            vals, grads = entry.evaluator(sub)
            n_out = vals.shape[1]
            act = vals > 0.0
            if not act.any():
                continue
            clipped = np.where(act, vals, 0.0)
            pen = clipped**k_exp
            dpen = k_exp * clipped ** (k_exp - 1)
            Tg = traj.durations[idx]
            pref = entry.weight * Tg / kappa
            F = pen.sum(axis=1).reshape(P, kappa + 1)
            total += float(np.sum(pref * (F @ wq)))
            # Aggregate output gradients: (P*(J), s+1, m)
            Gs = np.einsum("no,nodm->ndm", dpen, grads).reshape(
                P, kappa + 1, s + 1, m
            )
            Wjs = wq[None, :] * pref[:, None]
            dI_dc[idx] += np.einsum(
                "pj,pjdr,pjdm->prm", Wjs, rows[loc][:, :, : s + 1], Gs
            )
            # Duration gradient: prefactor term plus the time-chain term.
            dI_dT[idx] += entry.weight * (F @ wq) / kappa
            chain = np.einsum("pjdm,pjdm->pj", Gs, D[loc][:, :, 1 : s + 2])
            dI_dT[idx] += pref * np.einsum("pj,j,j->p", chain, wq, taus)
    return total, dI_dc.reshape(2 * M * s, m), dI_dT


def sample_constraints(cs, derivs, piece=0):
    """Raw constraint values/gradients for one derivative stack.

    derivs: (s+1, m) orders 0..s.  Returns a list of
    (name, values, gradients) over the entries active on ``piece``.
    """
    derivs = np.asarray(derivs, dtype=float)
    if derivs.ndim != 2:
        raise DimensionMismatch("derivs must be (s+1, m)")
    out = []
    for entry in cs.entries:
        if entry.pieces is not None and piece not in set(
            int(i) for i in np.atleast_1d(entry.pieces)
        ):
            continue
        vals, grads = entry.evaluator(derivs[None])
        out.append((entry.name, vals[0], grads[0]))
    return out


def max_violations(cs, traj, factor=4):
    """Worst raw constraint value per entry on a denser fresh grid.

    Sampling uses ``factor`` times the optimizer's per-piece resolution, so
    reported violations are not the optimizer's own stamps.
    """
    s, m, M = traj.s, traj.m, traj.n_pieces
    worst = {entry.name: -np.inf for entry in cs.entries}
    for kappa, group, items in cs._plan(M, factor=int(factor)):
        taus = np.arange(kappa + 1) / kappa
        D = traj.piece_samples(taus, s)[group]
        for entry, idx, loc in items:
            sub = D[loc].reshape(idx.size * (kappa + 1), s + 1, m)
            vals, _ = entry.evaluator(sub)
            worst[entry.name] = max(worst[entry.name], float(vals.max()))
    return worst
