"""Convex corridor primitives: polytopes, balls, overlaps, validation.

A corridor is an ordered chain of convex primitives (all balls or all
H-polytopes) in which consecutive elements overlap with nonempty interior;
elements two apart should be disjoint (locally sequential), which is
reported as a warning when violated.
"""

import dataclasses
import json

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection, QhullError

from .errors import DegeneratePolytope, DimensionMismatch, Infeasible, NoOverlap

__all__ = [
    "HPolytope",
    "Ball",
    "Corridor",
    "CorridorReport",
    "interior_point",
    "chebyshev_center",
    "enumerate_vertices",
    "intersect_polytopes",
    "prune_redundant",
    "ball_overlap_disk",
    "validate_corridor",
    "random_corridor",
    "corridor_to_dict",
    "corridor_from_dict",
    "save_corridor",
    "load_corridor",
]


@dataclasses.dataclass
class HPolytope:
    """Halfspace intersection {x : A x <= b}."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.A.ndim != 2 or self.b.shape != (self.A.shape[0],):
            raise DimensionMismatch("H-rep needs A (k, n) and b (k,)")
        norms = np.linalg.norm(self.A, axis=1)
        if np.any(norms == 0.0):
            raise DimensionMismatch("zero normal row in H-rep")

    @property
    def dim(self):
        return self.A.shape[1]

    def normalized(self):
        """Same set with unit-norm rows, so b-slack is metric distance."""
        norms = np.linalg.norm(self.A, axis=1)
        return HPolytope(self.A / norms[:, None], self.b / norms)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        P = self.normalized()
        return bool(np.all(P.A @ x - P.b <= tol))


@dataclasses.dataclass
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        self.radius = float(self.radius)
        if self.radius <= 0:
            raise DimensionMismatch("ball radius must be positive")

    @property
    def dim(self):
        return self.center.size

    def contains(self, x, tol=1e-9):
        return bool(np.linalg.norm(np.asarray(x, dtype=float) - self.center) <= self.radius + tol)


class Corridor:
    """Ordered chain of same-kind convex primitives."""

    def __init__(self, elements):
        if not elements:
            raise DimensionMismatch("corridor must contain at least one element")
        kinds = {type(e) for e in elements}
        if kinds == {HPolytope}:
            self.kind = "polytope"
        elif kinds == {Ball}:
            self.kind = "ball"
        else:
            raise DimensionMismatch("corridor elements must be all balls or all polytopes")
        dims = {e.dim for e in elements}
        if len(dims) != 1:
            raise DimensionMismatch("corridor elements must share one ambient dimension")
        self.elements = list(elements)

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    @property
    def dim(self):
        return self.elements[0].dim


def chebyshev_center(P):
    """Largest-inscribed-ball center and radius of an H-polytope.

    Solves max r s.t. A x + r ||a_i|| <= b as a small LP.  Raises
    Infeasible when the polytope is empty or has empty interior, and
    DegeneratePolytope when the inscribed radius is unbounded.
    """
    P = P.normalized()
    k, n = P.A.shape
    # Variables (x, r); objective -r.
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([P.A, np.ones((k, 1))])
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=P.b,
        bounds=[(None, None)] * n + [(0.0, None)],
        method="highs",
    )
    if res.status == 3:
        raise DegeneratePolytope("inscribed radius unbounded (polytope unbounded)")
    if res.status != 0 or not res.success:
        raise Infeasible(f"interior-point LP failed (status {res.status})")
    x, r = res.x[:-1], float(res.x[-1])
    if r <= 1e-12:
        raise Infeasible("polytope has empty interior")
    return x, r


def interior_point(P):
    """A point with positive margin to every facet (Chebyshev center)."""
    return chebyshev_center(P)[0]


def enumerate_vertices(P, merge_tol=1e-9):
    """Vertices of a bounded polytope with nonempty interior.

    Runs qhull's halfspace-intersection mode about the Chebyshev center
    (dual convex hull) and merges duplicate intersection points.
    """
    Pn = P.normalized()
    x0, _ = chebyshev_center(Pn)
    if Pn.dim == 1:
        lo, hi = -np.inf, np.inf
        for a, bb in zip(Pn.A[:, 0], Pn.b):
            if a > 0:
                hi = min(hi, bb / a)
            else:
                lo = max(lo, bb / a)
        if not np.isfinite(lo) or not np.isfinite(hi):
            raise DegeneratePolytope("interval is unbounded")
        return np.array([[lo], [hi]])
    halfspaces = np.hstack([Pn.A, -Pn.b[:, None]])
    try:
        hs = HalfspaceIntersection(halfspaces, x0)
    except QhullError as exc:
        raise DegeneratePolytope(f"vertex enumeration failed: {exc}")
    pts = hs.intersections
    if not np.all(np.isfinite(pts)):
        raise DegeneratePolytope("polytope is unbounded")
    # Merge near-duplicate vertices.
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    keep = []
    for p in pts:
        if not keep or np.linalg.norm(p - keep[-1]) > merge_tol:
            keep.append(p)
        # lexsort does not guarantee geometric adjacency of duplicates, so
        # fall back to a full scan for safety on ties.
    uniq = []
    for p in keep:
        if all(np.linalg.norm(p - q) > merge_tol for q in uniq):
            uniq.append(p)
    return np.array(uniq)


def prune_redundant(P, tol=1e-9):
    """Drop halfspaces that never support the feasible set.

    Rows are pruned sequentially against the surviving set: a dropped row
    is implied by the rows still active, so later tests stay valid.  (Per
    -row tests against the full original set would delete both copies of a
    duplicated facet.)
    """
    Pn = P.normalized()
    A, b = Pn.A, Pn.b
    k = A.shape[0]
    active = np.ones(k, dtype=bool)
    for i in range(k):
        if active.sum() <= 1:
            break
        mask = active.copy()
        mask[i] = False
        res = linprog(
            -A[i],
            A_ub=A[mask],
            b_ub=b[mask],
            bounds=[(None, None)] * Pn.dim,
            method="highs",
        )
        # Keep on unbounded-without-it or LP trouble; drop only when the
        # remaining rows provably cap a_i x at b_i.
        if res.status == 0 and -res.fun <= b[i] + tol:
            active[i] = False
    return HPolytope(A[active], b[active])


def intersect_polytopes(P1, P2, prune=True):
    """H-rep of the intersection; rows pruned by default."""
    if P1.dim != P2.dim:
        raise DimensionMismatch("polytopes live in different dimensions")
    stacked = HPolytope(np.vstack([P1.A, P2.A]), np.concatenate([P1.b, P2.b]))
    try:
        chebyshev_center(stacked)
    except Infeasible:
        raise NoOverlap("polytopes do not share an interior point")
    return prune_redundant(stacked) if prune else stacked.normalized()


def ball_overlap_disk(b1, b2):
    """The disk in which the boundary spheres of two overlapping balls meet.

    Returns (center, radius, unit normal).  Raises NoOverlap for
    concentric, tangent, separated, or nested pairs, where no proper
    positive-radius disk exists.
    """
    if b1.dim != b2.dim:
        raise DimensionMismatch("balls live in different dimensions")
    axis = b2.center - b1.center
    d = float(np.linalg.norm(axis))
    if d == 0.0:
        raise NoOverlap("balls are concentric")
    if d >= b1.radius + b2.radius:
        raise NoOverlap("balls are tangent or separated")
    if d <= abs(b1.radius - b2.radius):
        raise NoOverlap("one ball is nested inside the other")
    axis = axis / d
    a = (d * d + b1.radius**2 - b2.radius**2) / (2.0 * d)
    r2 = b1.radius**2 - a * a
    if r2 <= 0.0:
        raise NoOverlap("overlap region has no proper disk")
    return b1.center + a * axis, float(np.sqrt(r2)), axis


def _plane_basis(normal):
    """Orthonormal basis of the hyperplane orthogonal to ``normal``."""
    n = normal / np.linalg.norm(normal)
    m = n.size
    # Complete n to an orthonormal frame via QR on [n | I].
    Q, _ = np.linalg.qr(np.hstack([n[:, None], np.eye(m)]))
    B = Q[:, 1:m]
    # Fix signs deterministically.
    for j in range(B.shape[1]):
        lead = np.flatnonzero(np.abs(B[:, j]) > 1e-12)
        if lead.size and B[lead[0], j] < 0:
            B[:, j] = -B[:, j]
    return B


@dataclasses.dataclass
class CorridorReport:
    ok: bool
    failures: list
    warnings: list

    def __bool__(self):
        return self.ok


def _pair_overlaps(e1, e2):
    if isinstance(e1, Ball):
        d = float(np.linalg.norm(e1.center - e2.center))
        return d < e1.radius + e2.radius
    try:
        intersect_polytopes(e1, e2, prune=False)
        return True
    except NoOverlap:
        return False


def _pair_disjoint(e1, e2):
    if isinstance(e1, Ball):
        return float(np.linalg.norm(e1.center - e2.center)) >= e1.radius + e2.radius
    stacked = HPolytope(np.vstack([e1.A, e2.A]), np.concatenate([e1.b, e2.b]))
    res = linprog(
        np.zeros(stacked.dim),
        A_ub=stacked.A,
        b_ub=stacked.b,
        bounds=[(None, None)] * stacked.dim,
        method="highs",
    )
    return res.status == 2  # infeasible: no shared point at all


def validate_corridor(corridor, start=None, goal=None):
    """Check the locally-sequential corridor structure.

    Failures: an adjacent pair without interior overlap, or start/goal
    outside the first/last element.  Non-adjacent overlap at index
    distance 2 is reported as a warning only.
    """
    failures = []
    warnings = []
    elems = corridor.elements
    for i in range(len(elems) - 1):
        if not _pair_overlaps(elems[i], elems[i + 1]):
            failures.append(("overlap", i, i + 1))
    for i in range(len(elems) - 2):
        if not _pair_disjoint(elems[i], elems[i + 2]):
            warnings.append(("not_disjoint", i, i + 2))
    if start is not None and not elems[0].contains(start):
        failures.append(("start", 0))
    if goal is not None and not elems[-1].contains(goal):
        failures.append(("goal", len(elems) - 1))
    return CorridorReport(not failures, failures, warnings)


def random_corridor(seed, count, kind="polytope", dim=3, step=3.0, margin=0.5,
                    lateral=0.8, max_extra_facets=24):
    """Random locally-sequential corridor along a forward-progressing path.

    Builds a polyline with fixed forward progress and bounded lateral
    jitter, then covers each segment with either a ball or a random
    bounded polytope that contains the segment with clearance ``margin``.
    Returns (corridor, start, goal); start/goal are the path endpoints.
    """
    if count < 1:
        raise DimensionMismatch("need at least one element")
    if step <= 2.0 * margin:
        raise DimensionMismatch("step must exceed the overlap diameter")
    rng = np.random.default_rng(seed)
    pts = np.zeros((count + 1, dim))
    for i in range(1, count + 1):
        ofs = np.zeros(dim)
        ofs[0] = step
        ofs[1:] = rng.uniform(-lateral, lateral, dim - 1)
        pts[i] = pts[i - 1] + ofs

    elements = []
    if kind == "ball":
        for i in range(count):
            mid = 0.5 * (pts[i] + pts[i + 1])
            r = 0.5 * float(np.linalg.norm(pts[i + 1] - pts[i])) + margin
            elements.append(Ball(mid, r))
    elif kind == "polytope":
        for i in range(count):
            p0, p1 = pts[i], pts[i + 1]
            normals = []
            offsets = []
            for ax in range(dim):
                for sign in (1.0, -1.0):
                    a = np.zeros(dim)
                    a[ax] = sign
                    normals.append(a)
                    offsets.append(max(a @ p0, a @ p1) + margin)
            n_extra = int(rng.integers(2, max_extra_facets + 1))
            for _ in range(n_extra):
                a = rng.normal(size=dim)
                a /= np.linalg.norm(a)
                normals.append(a)
                offsets.append(max(a @ p0, a @ p1) + margin * rng.uniform(1.0, 2.0))
            elements.append(HPolytope(np.array(normals), np.array(offsets)))
    else:
        raise DimensionMismatch(f"unknown corridor kind {kind!r}")
    return Corridor(elements), pts[0].copy(), pts[-1].copy()


def corridor_to_dict(corridor):
    if corridor.kind == "polytope":
        return {
            "kind": "polytope",
            "elements": [
                {"halfspaces": np.hstack([e.A, e.b[:, None]]).tolist()}
                for e in corridor.elements
            ],
        }
    return {
        "kind": "ball",
        "elements": [
            {"center": e.center.tolist(), "radius": e.radius}
            for e in corridor.elements
        ],
    }


def corridor_from_dict(payload):
    try:
        kind = payload["kind"]
        raw = payload["elements"]
        if kind == "polytope":
            elems = []
            for entry in raw:
                H = np.asarray(entry["halfspaces"], dtype=float)
                if H.ndim != 2 or H.shape[1] < 2:
                    raise DimensionMismatch("halfspace rows need [a..., b]")
                elems.append(HPolytope(H[:, :-1], H[:, -1]))
        elif kind == "ball":
            elems = [Ball(entry["center"], entry["radius"]) for entry in raw]
        else:
            raise DimensionMismatch(f"unknown corridor kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionMismatch(f"malformed corridor payload: {exc}")
    return Corridor(elems)


def save_corridor(corridor, path):
    with open(path, "w") as fh:
        json.dump(corridor_to_dict(corridor), fh, indent=2)


def load_corridor(path):
    with open(path) as fh:
        return corridor_from_dict(json.load(fh))
