"""Unconstrained driver and the end-to-end planning pipelines.

The constrained corridor problem is rewritten over free variables
x = [xi_1, ..., xi_{M-1}, tau]: each waypoint is the image of an
elimination map anchored to the overlap of its two neighboring corridor
primitives (or to the primitive itself for intra-primitive waypoints), and
durations come from a time map.  One objective evaluation runs
map forwards -> spline construction -> effort + penalty (+ linear time
regularization) -> gradient propagation -> map pullbacks.

The included L-BFGS uses a bracketing weak-Wolfe line search, which
tolerates the merely-C^2 penalty terms.
"""

import dataclasses
import time
from collections import deque

import numpy as np

from . import flatness, geometry, penalty
from .elimination import BallMap, PolytopeMap, TimeMap
from .errors import (
    DimensionMismatch,
    Infeasible,
    NoOverlap,
    SingularMatrix,
    SingularThrust,
    SingularYaw,
)
from .minco import construct, control_effort, propagate_gradient

__all__ = [
    "LBFGSParams",
    "LBFGSResult",
    "lbfgs_minimize",
    "ProblemSpec",
    "Problem",
    "OptimizeResult",
    "assemble_cost",
    "optimize_corridor",
    "optimize_se3",
    "narrow_gap_scene",
]


@dataclasses.dataclass
class LBFGSParams:
    memory: int = 8
    c1: float = 1e-4
    c2: float = 0.9
    grad_tol: float = 1e-6  # scaled: ||g||_inf <= grad_tol * (1 + |f|)
    max_iters: int = 10000
    cost_rel_tol: float = 0.0  # 0 disables the plateau stop
    plateau_window: int = 8
    max_line_iters: int = 60


@dataclasses.dataclass
class LBFGSResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    n_evals: int
    status: str  # gradient | plateau | max_iters | line_search
    message: str = ""

    @property
    def converged(self):
        return self.status in ("gradient", "plateau")


def _two_loop(g, mem_s, mem_y, mem_rho):
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(mem_s), reversed(mem_y), reversed(mem_rho)):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if mem_s:
        s, y = mem_s[-1], mem_y[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(zip(mem_s, mem_y, mem_rho), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _weak_wolfe(fun, x, f0, g0, d, dg0, alpha, params):
    """Bracketing line search for f(x + a d); returns (x, f, g, evals) or None.

    Accepts the first step meeting Armijo (c1) and weak curvature (c2).
    Non-finite trial values shrink the bracket.  On exhaustion the best
    strictly-decreasing trial is accepted; None means no decrease found.
    """
    lo, hi = 0.0, np.inf
    best = None
    evals = 0
    for _ in range(params.max_line_iters):
        xt = x + alpha * d
        ft, gt = fun(xt)
        evals += 1
        finite = np.isfinite(ft)
        if finite and (best is None or ft < best[1]):
            best = (xt, ft, gt)
        if (not finite) or ft > f0 + params.c1 * alpha * dg0:
            hi = alpha
        elif gt @ d < params.c2 * dg0:
            lo = alpha
        else:
            return xt, ft, gt, evals
        alpha = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * alpha
        if np.isfinite(hi) and hi - lo <= 1e-18 * max(1.0, hi):
            break
    if best is not None and best[1] < f0:
        return best[0], best[1], best[2], evals
    return None, None, None, evals


def lbfgs_minimize(fun, x0, params=None):
    """Minimize fun(x) -> (value, gradient) by limited-memory quasi-Newton.

    Stops when ||g||_inf <= grad_tol*(1+|f|), on a cost plateau (when
    cost_rel_tol > 0), at the iteration cap, or when the line search cannot
    decrease the objective (status "line_search", best point returned).
    """
    p = params if params is not None else LBFGSParams()
    x = np.array(x0, dtype=float).ravel()
    if x.size == 0:
        return LBFGSResult(x, 0.0, x.copy(), 0, 0, "gradient", "no variables")
    f, g = fun(x)
    evals = 1
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the initial point")
    mem_s, mem_y, mem_rho = deque(maxlen=p.memory), deque(maxlen=p.memory), deque(
        maxlen=p.memory
    )
    status, message = "max_iters", "iteration cap reached"
    plateau = 0
    it = 0
    while it < p.max_iters:
        if np.max(np.abs(g)) <= p.grad_tol * (1.0 + abs(f)):
            status, message = "gradient", "gradient tolerance met"
            break
        d = _two_loop(g, mem_s, mem_y, mem_rho)
        dg = float(d @ g)
        if not np.isfinite(dg) or dg >= 0.0:
            mem_s.clear(), mem_y.clear(), mem_rho.clear()
            d = -g
            dg = -float(g @ g)
        alpha0 = 1.0 if mem_s else min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-12))
        xt, ft, gt, ev = _weak_wolfe(fun, x, f, g, d, dg, alpha0, p)
        evals += ev
        it += 1
        if xt is None:
            status, message = "line_search", "no decreasing step found"
            break
        s_vec = xt - x
        y_vec = gt - g
        decrease = f - ft
        x, f, g = xt, ft, gt
        sy = float(s_vec @ y_vec)
        if sy > 1e-10 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            mem_s.append(s_vec)
            mem_y.append(y_vec)
            mem_rho.append(1.0 / sy)
        if p.cost_rel_tol > 0.0:
            plateau = plateau + 1 if decrease <= p.cost_rel_tol * max(1.0, abs(f)) else 0
            if plateau >= p.plateau_window:
                status, message = "plateau", "relative cost decrease stalled"
                break
    return LBFGSResult(x, f, g, it, evals, status, message)


@dataclasses.dataclass
class ProblemSpec:
    """Corridor planning problem: geometry, limits, weights, solver knobs."""

    corridor: geometry.Corridor
    start: np.ndarray  # position (m,) or derivative stack (<=s, m)
    goal: np.ndarray
    s: int = 3
    pieces_per_primitive: int = 1  # K; piece i lives in primitive i // K
    v_max: float = 5.0
    a_max: float = 7.0
    f_min: float = None
    f_max: float = None
    omega_max: float = None
    shape_radii: np.ndarray = None  # ellipsoid semi-axes (rx, ry, rz)
    k_rho: float = 1024.0  # linear time-regularization weight
    total_time: float = None  # set for fixed-total mode (disables k_rho)
    chi: float = 1e10
    # Warm-start ladder: relative weight factors applied to chi, each stage
    # reusing the previous minimizer.  (1.0,) is a plain single solve.
    chi_schedule: tuple = (1e-5, 1e-2, 1.0)
    stage_iters: int = 300  # iteration cap for the non-final ladder stages
    resolution: int = 16
    gravity: float = flatness.GRAVITY
    lbfgs: LBFGSParams = dataclasses.field(
        default_factory=lambda: LBFGSParams(cost_rel_tol=3e-6, plateau_window=6)
    )
    # Attitude-aware pipeline only: extra weight on the ellipsoid entries
    # (junction-squeezed pieces carry little quadrature mass, so at the
    # base weight their violations would equilibrate an order of magnitude
    # higher than everywhere else), and the enforced fraction of omega_max
    # (the margin absorbs excursions between quadrature nodes).
    ellipsoid_boost: float = 300.0
    omega_margin: float = 0.98
    seed: int = 0
    jitter: float = None  # waypoint jitter; defaults per pipeline


@dataclasses.dataclass
class OptimizeResult:
    trajectory: object
    cost: float
    effort: float
    penalty: float
    time_cost: float
    iterations: int
    n_evals: int
    grad_norm: float
    violations: dict
    wall_time: float
    status: str
    states: dict = None  # SE(3) runs: dense t, R, f_spec, omega samples

    @property
    def converged(self):
        return self.status in ("gradient", "plateau")


def _boundary_stack(arr, s, m):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != m or arr.shape[0] > s:
        raise DimensionMismatch("boundary condition must be (<=s, m)")
    out = np.zeros((s, m))
    out[: arr.shape[0]] = arr
    return out


def _trapezoid_time(dist, v, a):
    """Rest-to-rest time over distance ``dist`` with speed/accel caps."""
    if dist <= 0.0:
        return 0.0
    d_acc = v * v / a
    if dist >= d_acc:
        return dist / v + v / a
    return 2.0 * np.sqrt(dist / a)


def _primitive_map(element):
    if isinstance(element, geometry.Ball):
        return BallMap(element.center, element.radius)
    # Redundant halfspaces produce no vertices, so pruning is unnecessary.
    verts = geometry.enumerate_vertices(element)
    return PolytopeMap(verts)


def _junction_map(e1, e2):
    """Elimination map over the overlap of two adjacent primitives."""
    if isinstance(e1, geometry.Ball):
        center, radius, normal = geometry.ball_overlap_disk(e1, e2)
        # Overlap lens of two balls, anchored on its equatorial disk.
        basis = geometry._plane_basis(normal)
        return BallMap(center, radius, basis=basis)
    # Redundant rows of the stacked H-rep yield no vertices; the interior
    # LP inside the enumeration doubles as the overlap feasibility check.
    stacked = geometry.HPolytope(
        np.vstack([e1.A, e2.A]), np.concatenate([e1.b, e2.b])
    )
    try:
        verts = geometry.enumerate_vertices(stacked)
    except Infeasible:
        raise NoOverlap("adjacent primitives do not share an interior point")
    return PolytopeMap(verts)


class Problem:
    """Assembled objective over the free variables (xi blocks, tau block)."""

    def __init__(self, spec, extra_entries=None, use_position_containment=True):
        report = geometry.validate_corridor(
            spec.corridor,
            start=np.atleast_2d(np.asarray(spec.start, dtype=float))[0],
            goal=np.atleast_2d(np.asarray(spec.goal, dtype=float))[0],
        )
        if not report.ok:
            raise Infeasible("; ".join(map(str, report.failures)))
        self.spec = spec
        self.corridor = spec.corridor
        self.m = spec.corridor.dim
        self.s = int(spec.s)
        self.K = int(spec.pieces_per_primitive)
        if self.K < 1:
            raise DimensionMismatch("pieces per primitive must be >= 1")
        self.n_prim = len(spec.corridor)
        self.M = self.n_prim * self.K
        self.bc0 = _boundary_stack(spec.start, self.s, self.m)
        self.bcf = _boundary_stack(spec.goal, self.s, self.m)
        self.fixed_total = spec.total_time is not None
        self.tmap = TimeMap(
            self.M,
            kind="fixed_total" if self.fixed_total else "free_positive",
            total=spec.total_time,
        )
        self._build_maps()
        self._build_constraints(extra_entries or [], use_position_containment)

    def _build_maps(self):
        prim_maps = {}
        self._junction_maps = {}
        self.maps = []
        for i in range(1, self.M):
            j, r = divmod(i, self.K)
            if r == 0:
                wmap = _junction_map(self.corridor[j - 1], self.corridor[j])
                self._junction_maps[j] = wmap
            else:
                if j not in prim_maps:
                    prim_maps[j] = _primitive_map(self.corridor[j])
                wmap = prim_maps[j]
            self.maps.append(wmap)
        self.slices = []
        off = 0
        for wmap in self.maps:
            self.slices.append(slice(off, off + wmap.dim))
            off += wmap.dim
        self.tau_slice = slice(off, off + self.tmap.dim)
        self.dim = off + self.tmap.dim

    def _build_constraints(self, extra_entries, use_position_containment):
        spec = self.spec
        entries = []
        if spec.v_max is not None:
            entries.append(
                penalty.ConstraintEntry(
                    "speed",
                    penalty.SpeedLimit(spec.v_max, scale=spec.v_max**2),
                    spec.chi,
                )
            )
        if spec.a_max is not None:
            entries.append(
                penalty.ConstraintEntry(
                    "accel",
                    penalty.AccelLimit(spec.a_max, scale=spec.a_max**2),
                    spec.chi,
                )
            )
        if use_position_containment:
            for j in range(self.n_prim):
                pieces = np.arange(j * self.K, (j + 1) * self.K)
                el = self.corridor[j]
                if isinstance(el, geometry.Ball):
                    ev = penalty.BallContain(el.center, el.radius)
                else:
                    ev = penalty.PolytopeContain(el.A, el.b)
                entries.append(
                    penalty.ConstraintEntry(
                        f"contain_{j}", ev, spec.chi, pieces=pieces
                    )
                )
        entries.extend(extra_entries)
        self.constraints = penalty.ConstraintSet(
            entries, resolution=spec.resolution
        )
        self._base_weights = [e.weight for e in entries]

    def scale_weights(self, factor):
        """Set every entry weight to factor times its constructed value."""
        for entry, base in zip(self.constraints.entries, self._base_weights):
            entry.weight = base * factor

    # -- encoding ---------------------------------------------------------

    def decode(self, x):
        q = np.empty((self.M - 1, self.m))
        for i, (wmap, sl) in enumerate(zip(self.maps, self.slices)):
            q[i] = wmap.forward(x[sl])
        T = self.tmap.forward(x[self.tau_slice])
        return q, T

    def encode(self, q, T):
        x = np.empty(self.dim)
        for i, (wmap, sl) in enumerate(zip(self.maps, self.slices)):
            x[sl] = wmap.backward(q[i])
        x[self.tau_slice] = self.tmap.backward(T)
        return x

    def trajectory(self, x):
        q, T = self.decode(x)
        return construct(q, T, self.bc0, self.bcf, self.s)

    # -- objective --------------------------------------------------------

    def cost_terms(self, x):
        """(effort, penalty, time_cost) at x, no gradients."""
        traj = self.trajectory(x)
        J = control_effort(traj)[0]
        I = penalty.integrate_penalty(self.constraints, traj)[0]
        rho = 0.0 if self.fixed_total else self.spec.k_rho * traj.durations.sum()
        return J, I, rho

    def cost_and_grad(self, x):
        try:
            q, T = self.decode(x)
            traj = construct(q, T, self.bc0, self.bcf, self.s)
            J, dJ_dc, dJ_dT = control_effort(traj)
            I, dI_dc, dI_dT = penalty.integrate_penalty(self.constraints, traj)
        except (SingularThrust, SingularYaw, SingularMatrix):
            # Chart singularities or a degenerate trial duration along a
            # line-search step: reject via the search rather than aborting
            # the whole run.
            return np.inf, np.zeros(self.dim)
        dW_dq, dW_dT = propagate_gradient(traj, dJ_dc + dI_dc, dJ_dT + dI_dT)
        cost = J + I
        if not np.isfinite(cost):
            # Overflow on an absurd line-search trial (e.g. duration ratios
            # past any representable conditioning): reject the step.
            return np.inf, np.zeros(self.dim)
        if not self.fixed_total:
            cost += self.spec.k_rho * T.sum()
            dW_dT = dW_dT + self.spec.k_rho
        g = np.empty(self.dim)
        for i, (wmap, sl) in enumerate(zip(self.maps, self.slices)):
            g[sl] = wmap.pullback(x[sl], dW_dq[i])
        g[self.tau_slice] = self.tmap.pullback(x[self.tau_slice], dW_dT)
        return float(cost), g

    # -- warm start -------------------------------------------------------

    def initial_point(self):
        """Overlap-anchored waypoints and trapezoidal durations.

        Symmetry-breaking jitter is applied in the unconstrained variables,
        so the perturbed start stays feasible for any map kind.
        """
        spec = self.spec
        rng = np.random.default_rng(spec.seed)
        jitter = spec.jitter if spec.jitter is not None else 1e-6
        anchors = [self.bc0[0]]
        for j in range(1, self.n_prim):
            anchors.append(self._junction_anchor(j))
        anchors.append(self.bcf[0])
        q = np.empty((self.M - 1, self.m))
        for i in range(1, self.M):
            j, r = divmod(i, self.K)
            if r == 0:
                q[i - 1] = anchors[j]
            else:
                w = r / self.K
                q[i - 1] = (1.0 - w) * anchors[j] + w * anchors[j + 1]
        pts = np.vstack([self.bc0[0][None], q, self.bcf[0][None]])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        v = spec.v_max if spec.v_max is not None else 5.0
        a = spec.a_max if spec.a_max is not None else max(1.0, v)
        T = np.array([max(_trapezoid_time(d, v, a), 1e-2) for d in seg])
        if self.fixed_total:
            T *= spec.total_time / T.sum()
        x = self.encode(q, T)
        x += rng.uniform(-jitter, jitter, size=x.shape)
        return x

    def _junction_anchor(self, j):
        """Interior point of the overlap of primitives j-1 and j."""
        wmap = self._junction_maps[j]
        if isinstance(wmap, BallMap):
            return wmap.center
        # Vertex centroid: strictly inside the overlap, no extra LP.
        return wmap.vertices.mean(axis=0)


def assemble_cost(spec, extra_entries=None, use_position_containment=True):
    """Build the unconstrained objective for a spec; see :class:`Problem`."""
    return Problem(
        spec,
        extra_entries=extra_entries,
        use_position_containment=use_position_containment,
    )


def _grouped_violations(worst):
    """Collapse per-primitive entries into one number per constraint kind."""
    out = {}
    for name, val in worst.items():
        key = name.split("_")[0] if name.startswith(("contain_", "ellipsoid_")) else name
        if key == "contain":
            key = "containment"
        out[key] = max(out.get(key, -np.inf), val)
    return out


def _run_ladder(problem, spec):
    """Warm-started solves over the relative weight schedule; final at 1.0."""
    schedule = np.atleast_1d(np.asarray(spec.chi_schedule, dtype=float))
    if schedule.size == 0 or np.any(schedule <= 0) or schedule[-1] != 1.0:
        raise DimensionMismatch(
            "chi_schedule must be positive factors ending at 1.0"
        )
    x = problem.initial_point()
    total_it = total_ev = 0
    res = None
    # Early stages only have to hand a decent warm start to the next one:
    # cap their iterations and stop them on a coarser plateau.
    early = dataclasses.replace(
        spec.lbfgs,
        max_iters=min(spec.stage_iters, spec.lbfgs.max_iters),
        cost_rel_tol=max(1e-5, spec.lbfgs.cost_rel_tol),
    )
    try:
        for k, factor in enumerate(schedule):
            problem.scale_weights(factor)
            params = spec.lbfgs if k == schedule.size - 1 else early
            res = lbfgs_minimize(problem.cost_and_grad, x, params)
            x = res.x
            total_it += res.iterations
            total_ev += res.n_evals
    finally:
        problem.scale_weights(1.0)
    res.iterations = total_it
    res.n_evals = total_ev
    return res


def _finish(problem, res, t0, states=None):
    traj = problem.trajectory(res.x)
    J, I, rho = problem.cost_terms(res.x)
    worst = penalty.max_violations(problem.constraints, traj, factor=4)
    return OptimizeResult(
        trajectory=traj,
        cost=J + I + rho,
        effort=J,
        penalty=I,
        time_cost=rho,
        iterations=res.iterations,
        n_evals=res.n_evals,
        grad_norm=float(np.max(np.abs(res.g))) if res.g.size else 0.0,
        violations=_grouped_violations(worst),
        wall_time=time.perf_counter() - t0,
        status=res.status,
        states=states,
    )


def optimize_corridor(spec):
    """Plan through a corridor under speed/acceleration limits.

    Boundary derivative stacks are met exactly by construction; limits and
    containment are enforced by the integrated penalty.  Never raises on
    mere non-convergence; inspect result.status.
    """
    t0 = time.perf_counter()
    problem = Problem(spec)
    res = _run_ladder(problem, spec)
    return _finish(problem, res, t0)


def optimize_se3(spec):
    """Plan with attitude-aware safety and thrust/body-rate limits.

    Requires a polytope corridor, s = 3, and the shape/actuation fields
    (shape_radii, f_min, f_max, omega_max).  The vehicle ellipsoid must fit
    inside each primitive; position containment is implied by the
    ellipsoid constraint and not added separately.  The result carries a
    dense state trace (rotation, specific thrust, body rate).
    """
    t0 = time.perf_counter()
    if spec.s != 3:
        raise DimensionMismatch("attitude-aware planning requires s = 3")
    if spec.corridor.kind != "polytope":
        raise DimensionMismatch("attitude-aware planning requires polytopes")
    if spec.shape_radii is None or spec.f_min is None or spec.f_max is None:
        raise DimensionMismatch("shape_radii and thrust window are required")
    if spec.jitter is None:
        spec = dataclasses.replace(spec, jitter=1e-3)
    extra = [
        penalty.ConstraintEntry(
            "thrust",
            penalty.ThrustWindow(
                spec.f_min,
                spec.f_max,
                scale=spec.f_max - spec.f_min,
                gravity=spec.gravity,
            ),
            spec.chi,
        )
    ]
    if spec.omega_max is not None:
        # Enforce a margined bound; the quadrature only pins the nodes.
        om = spec.omega_max * spec.omega_margin
        extra.append(
            penalty.ConstraintEntry(
                "body_rate",
                penalty.BodyRateLimit(om, scale=om**2, gravity=spec.gravity),
                spec.chi,
            )
        )
    K = spec.pieces_per_primitive
    for j in range(len(spec.corridor)):
        el = spec.corridor[j]
        extra.append(
            penalty.ConstraintEntry(
                f"ellipsoid_{j}",
                penalty.EllipsoidInPolytope(
                    el.A, el.b, spec.shape_radii, gravity=spec.gravity
                ),
                spec.chi * spec.ellipsoid_boost,
                pieces=np.arange(j * K, (j + 1) * K),
            )
        )
    problem = Problem(spec, extra_entries=extra, use_position_containment=False)
    res = _run_ladder(problem, spec)
    traj = problem.trajectory(res.x)
    states = state_trace(traj, spec.resolution * 4, gravity=spec.gravity)
    return _finish(problem, res, t0, states=states)


def state_trace(traj, per_piece, gravity=flatness.GRAVITY):
    """Dense rotation/thrust/body-rate samples along a 3-D trajectory."""
    taus = np.arange(per_piece + 1) / per_piece
    D = traj.piece_samples(taus, 3)  # (M, J, 4, 3)
    ts = (traj.knots[:-1, None] + traj.durations[:, None] * taus[None, :]).ravel()
    acc = D[:, :, 2, :].reshape(-1, 3)
    jer = D[:, :, 3, :].reshape(-1, 3)
    R, f, w, _ = flatness.flat_to_state_batch(acc, jer, gravity)
    return {"t": ts, "R": R, "f_spec": f, "omega": w}


def narrow_gap_scene(
    gap_width,
    slot_halflength=1.2,
    wall_clearance=0.05,
    box_depth=6.0,
    lateral=3.0,
    half_height=2.0,
    travel=4.0,
):
    """Box-slot-box corridor for flying through a vertical gap.

    The slot is a long thin box of width ``gap_width`` along y; flight is
    along +x from rest to rest.  Returns (corridor, start, goal).
    """
    if gap_width <= 0:
        raise DimensionMismatch("gap width must be positive")

    def box(x_lo, x_hi, y_half, z_half):
        A = np.vstack([np.eye(3), -np.eye(3)])
        b = np.array([x_hi, y_half, z_half, -x_lo, y_half, z_half])
        return geometry.HPolytope(A, b)

    left = box(-box_depth, -wall_clearance, lateral, half_height)
    slot = box(-slot_halflength, slot_halflength, gap_width / 2.0, half_height)
    right = box(wall_clearance, box_depth, lateral, half_height)
    corridor = geometry.Corridor([left, slot, right])
    start = np.array([-travel, 0.0, 0.0])
    goal = np.array([travel, 0.0, 0.0])
    return corridor, start, goal
