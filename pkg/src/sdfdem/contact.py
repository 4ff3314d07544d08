"""Contact detection between convex SDF bodies and the contact force laws.

For a pair (home A, neighbor B) the contact points are

    x1 = argmin_{x on boundary of A} phi_B(x),
    x2 = argmin_{x on boundary of B} phi_A(x),

two decoupled convex-over-boundary problems. Sphere/sphere and sphere/plane
pairs are solved in closed form. Everything else goes through a cutting-plane
linear program: facet planes of polytopes enter exactly, curved boundaries and
curved SDFs are refined with supporting cuts until the linearization error is
below tolerance. Separated pairs are resolved by alternating projections,
which converge to the closest pair of points of two disjoint convex sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import DegenerateBond, SolverStalled
from .geometry import HalfSpaceShape, ShapeDescriptor, SphereShape
from .integration import StateObject
from .rigid_body import (
    Pose,
    RigidBody,
    cross_w,
    from_reference,
    rotate_to_global,
    rotate_to_reference,
    to_reference,
)

MAX_ITER = 200
TOL = 1e-8
# the cutting-plane value bound is certified to VALUE_TOL_FACTOR * TOL; Kelley's
# iterates converge slowly in position when the optimum is a tangency
VALUE_TOL_FACTOR = 100.0
DEGENERATE_BOND = 1e-14
_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


# -- parameters and summaries ----------------------------------------------------


@dataclass(frozen=True)
class ElasticContactParams:
    kappa_n: float
    kappa_s: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if not self.kappa_n > 0.0:
            raise ValueError(f"kappa_n must be positive, got {self.kappa_n}")
        if self.kappa_s < 0.0 or self.mu < 0.0:
            raise ValueError("kappa_s and mu must be non-negative")

    @property
    def gamma_n(self):
        return 0.0

    @property
    def gamma_s(self):
        return 0.0


@dataclass(frozen=True)
class ViscoelasticContactParams(ElasticContactParams):
    gamma_n: float = 0.0
    gamma_s: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if self.gamma_n < 0.0 or self.gamma_s < 0.0:
            raise ValueError("damping coefficients must be non-negative")


@dataclass
class ContactSummary:
    """Solved contact geometry and kinematics of one (home, neighbor) pair.

    ``xi = x2 - x1``. When the bodies overlap, ``xi`` points from the home's
    deepest point toward the neighbor's deepest point, i.e. back into the home
    body, so ``normal`` (neighbor toward home) equals ``xi / |xi|``.
    """

    x1: np.ndarray
    x2: np.ndarray
    penetrating: bool
    normal: np.ndarray
    v_r: np.ndarray = None
    v_a: np.ndarray = None
    iterations: int = 0

    @property
    def xi(self):
        return self.x2 - self.x1

    @property
    def depth(self):
        return float(np.linalg.norm(self.xi)) if self.penetrating else 0.0


# -- placed shapes -----------------------------------------------------------------


class _Placed:
    """A shape at a pose, with every query expressed in global coordinates."""

    def __init__(self, shape: ShapeDescriptor, pose: Pose):
        self.shape = shape
        self.pose = pose
        self.dim = shape.dim
        self.center = np.asarray(pose.position, dtype=float)
        self.radius = shape.bounding_radius
        self.finite = shape.is_finite
        self.halfspace = isinstance(shape, HalfSpaceShape)
        planes = shape.planes()
        if planes is None:
            self.normals = None
        else:
            n, o = planes
            self.normals = rotate_to_global(pose, n)
            self.offsets = o + self.normals @ self.center

    def sdf(self, x):
        return self.shape.sdf(to_reference(self.pose, x))

    def gradient(self, x):
        return rotate_to_global(self.pose, self.shape.gradient(to_reference(self.pose, x)))

    def project(self, x):
        return from_reference(self.pose, self.shape.project(to_reference(self.pose, x)))

    def project_solid(self, x, tol):
        return x if self.sdf(x) <= tol else self.project(x)

    def support(self, d):
        s = self.shape.support(rotate_to_reference(self.pose, d))
        return None if s is None else from_reference(self.pose, s)


def _tangent_cut(A: _Placed, direction):
    """Supporting half-plane ``g . x <= g . p`` of A in ``direction``."""
    d = direction / np.linalg.norm(direction)
    p = A.support(d)
    if p is None:
        p = A.project(A.center + 2.0 * A.radius * d)
        d = A.gradient(p)
    return d, float(d @ p)


def _seed_directions(dim, toward):
    dirs = [row for row in np.vstack([np.eye(dim), -np.eye(dim)])]
    if toward is not None and np.linalg.norm(toward) > 0.0:
        dirs.append(toward / np.linalg.norm(toward))
    return dirs


def _minimize_over(A: _Placed, B: _Placed, tol, seeds=(), equality_face=None):
    """Minimize ``phi_B`` over the solid A (or over A's plane if A is a wall).

    Returns ``(x, value, iterations)``. ``equality_face`` pins x to one facet
    plane of A, which turns the search into a minimization over that face.
    """
    d = A.dim
    finite = A if A.finite else B
    lo = finite.center - 2.0 * finite.radius
    hi = finite.center + 2.0 * finite.radius
    bounds = [(lo[k], hi[k]) for k in range(d)] + [(None, None)]
    c = np.zeros(d + 1)
    c[-1] = 1.0

    A_rows, A_rhs = [], []
    eq_rows, eq_rhs = [], []
    if A.normals is not None:
        if A.halfspace:
            eq_rows.append(np.append(A.normals[0], 0.0))
            eq_rhs.append(A.offsets[0])
        else:
            for n, o in zip(A.normals, A.offsets):
                A_rows.append(np.append(n, 0.0))
                A_rhs.append(o)
            if equality_face is not None:
                eq_rows.append(np.append(A.normals[equality_face], 0.0))
                eq_rhs.append(A.offsets[equality_face])
        a_exact = True
    else:
        for u in _seed_directions(d, B.center - A.center if B.finite else -B.normals[0]):
            g, rhs = _tangent_cut(A, u)
            A_rows.append(np.append(g, 0.0))
            A_rhs.append(rhs)
        for p in seeds:
            # a warm start supplies the previous minimizer: cut A there too
            y = A.project(p)
            g = A.gradient(y)
            A_rows.append(np.append(g, 0.0))
            A_rhs.append(float(g @ y))
        a_exact = False

    if B.normals is not None:
        for n, o in zip(B.normals, B.offsets):
            A_rows.append(np.append(n, -1.0))
            A_rhs.append(o)
        b_exact = True
    else:
        b_exact = False
        pts = [A.center, A.project(B.center) if A.finite else A.project(B.center), *seeds]
        for p in pts:
            _add_gradient_cut(B, p, A_rows, A_rhs)

    x, best = None, None
    for it in range(1, MAX_ITER + 1):
        res = linprog(
            c,
            A_ub=np.array(A_rows),
            b_ub=np.array(A_rhs),
            A_eq=np.array(eq_rows) if eq_rows else None,
            b_eq=np.array(eq_rhs) if eq_rhs else None,
            bounds=bounds,
            method="highs",
            options=_LP_OPTIONS,
        )
        if res.status != 0:
            raise SolverStalled(f"contact LP failed: {res.message}", iterations=it)
        x_prev = x
        x, t = res.x[:d], res.x[d]
        if x_prev is not None and np.linalg.norm(x - x_prev) < tol:
            # the LP has stopped moving: the remaining cut error sits at the
            # LP's own feasibility tolerance
            break
        # t is a lower bound on the minimum; any feasible point gives an upper
        # bound, which certifies convergence even when the minimizer is not
        # unique (e.g. a face lying flat inside the neighbor)
        y = x if a_exact or A.sdf(x) <= 0.0 else A.project(x)
        f = float(np.max(B.normals @ y - B.offsets)) if b_exact else float(B.sdf(y))
        if best is None or f < best[1]:
            best = (y, f)
        if best[1] - t <= VALUE_TOL_FACTOR * tol:
            x = best[0]
            break
        refined = False
        if not a_exact:
            excess = A.sdf(x)
            if excess > tol:
                y = A.project(x)
                g = A.gradient(y)
                A_rows.append(np.append(g, 0.0))
                A_rhs.append(float(g @ y))
                refined = True
        if not b_exact:
            phi = B.sdf(x)
            if phi - t > tol:
                _add_gradient_cut(B, x, A_rows, A_rhs)
                refined = True
        if not refined:
            break
    else:
        raise SolverStalled("cutting-plane contact solve did not converge", iterations=MAX_ITER)
    if not a_exact and A.sdf(x) > 0.0:
        x = A.project(x)
    value = float(B.sdf(x)) if not b_exact or t >= 0.0 else float(t)
    return x, value, it


def _center_of_minimizers(A: _Placed, B: _Placed, x, value, tol, equality_face=None):
    """Tie-break for flat contacts between two faceted bodies.

    When a face of A lies parallel to the deepest part of B the minimizer of
    ``phi_B`` is a whole patch, and the LP returns an arbitrary corner of it.
    The patch is convex, so the mean of its extreme points in the coordinate
    directions lies inside it; that point is returned. It makes the contact
    points of a box resting on a wall sit on top of each other.
    """
    if A.normals is None or B.normals is None:
        return x
    d = A.dim
    finite = A if A.finite else B
    lo = finite.center - 2.0 * finite.radius
    hi = finite.center + 2.0 * finite.radius
    bounds = [(lo[k], hi[k]) for k in range(d)] + [(None, value + 0.01 * tol)]
    rows, rhs, eq_rows, eq_rhs = [], [], [], []
    if A.halfspace:
        eq_rows.append(np.append(A.normals[0], 0.0))
        eq_rhs.append(A.offsets[0])
    else:
        rows += [np.append(n, 0.0) for n in A.normals]
        rhs += list(A.offsets)
        if equality_face is not None:
            eq_rows.append(np.append(A.normals[equality_face], 0.0))
            eq_rhs.append(A.offsets[equality_face])
    rows += [np.append(n, -1.0) for n in B.normals]
    rhs += list(B.offsets)
    extremes = []
    for k in range(d):
        for sign in (1.0, -1.0):
            c = np.zeros(d + 1)
            c[k] = sign
            res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs),
                          A_eq=np.array(eq_rows) if eq_rows else None,
                          b_eq=np.array(eq_rhs) if eq_rhs else None,
                          bounds=bounds, method="highs", options=_LP_OPTIONS)
            if res.status != 0:
                return x
            extremes.append(res.x[:d])
    extremes = np.array(extremes)
    # the middle of the patch's bounding box when it belongs to the patch
    # (always for boxes and rectangles), else the mean of the extreme points
    center = 0.5 * (extremes[0::2].diagonal() + extremes[1::2].diagonal())
    inside = float(np.max(B.normals @ center - B.offsets)) <= value + tol
    if A.halfspace:
        inside = inside and abs(float(A.normals[0] @ center - A.offsets[0])) <= tol
    else:
        inside = inside and float(np.max(A.normals @ center - A.offsets)) <= tol
        if equality_face is not None:
            inside = inside and abs(float(A.normals[equality_face] @ center - A.offsets[equality_face])) <= tol
    if not inside:
        center = extremes.mean(axis=0)
    if not A.halfspace and A.sdf(center) < -tol:
        return x
    return center


def _add_gradient_cut(B: _Placed, p, rows, rhs):
    g = B.gradient(p)
    phi = B.sdf(p)
    # phi_B(p) + g.(x - p) <= t
    rows.append(np.append(g, -1.0))
    rhs.append(float(g @ p - phi))


def _deepest_boundary_point(A: _Placed, B: _Placed, tol, seeds=()):
    """argmin of phi_B over the boundary of A, assuming the bodies overlap."""
    x, value, iters = _minimize_over(A, B, tol, seeds)
    if A.halfspace or A.sdf(x) >= -tol:
        if value < 0.0:
            x = _center_of_minimizers(A, B, x, value, tol)
        return x, value, iters
    # the minimizer over the solid is interior to A (deep overlap); search the
    # boundary face by face when facets are known, otherwise project
    if A.normals is not None:
        # the per-face problems are independent, so they count as one round
        # of as many cutting-plane iterations as the slowest face needed
        best, rounds = None, 0
        for k in range(len(A.normals)):
            try:
                xk, vk, ik = _minimize_over(A, B, tol, seeds, equality_face=k)
            except SolverStalled:
                continue
            rounds = max(rounds, ik)
            if best is None or vk < best[1]:
                best = (xk, vk, k)
        if best is not None:
            x = _center_of_minimizers(A, B, best[0], best[1], tol, equality_face=best[2])
            return x, best[1], iters + rounds
    y = A.project(x)
    return y, float(B.sdf(y)), iters


def _deepest_toward_sphere(A: _Placed, S: _Placed):
    """Boundary point of A deepest inside the sphere S: the point of A's
    boundary nearest the sphere center. Exact, one projection."""
    x = A.project(S.center)
    return x, float(np.linalg.norm(x - S.center) - S.shape.radius)


def _sphere_deepest_into(S: _Placed, B: _Placed, tol):
    """Deepest point of sphere S inside a faceted body B, or ``None``.

    Every facet plane bounds ``phi_B`` from below, so
    ``max_k (n_k . c - o_k) - r`` bounds its minimum over the ball. When the
    candidate ``c - r n_k`` of the best plane attains that bound it is the
    minimizer. This certifies every face-dominated contact; contacts at an
    edge or corner of B return ``None`` and go to the general solver.
    """
    if B.normals is None or B.halfspace:
        return None
    r = S.shape.radius
    lower = B.normals @ S.center - B.offsets - r
    k = int(np.argmax(lower))
    x = S.center - r * B.normals[k]
    value = float(np.max(B.normals @ x - B.offsets))
    if value - lower[k] > tol or value >= 0.0:
        return None
    return x, value


def _deepest_point(A: _Placed, B: _Placed, tol, seeds=()):
    """Boundary point of A deepest in B with closed forms for spheres."""
    if isinstance(B.shape, SphereShape):
        x, value = _deepest_toward_sphere(A, B)
        return x, value, 1
    if isinstance(A.shape, SphereShape):
        found = _sphere_deepest_into(A, B, tol)
        if found is not None:
            return found[0], found[1], 1
    return _deepest_boundary_point(A, B, tol, seeds)


def _simplex_closest(P):
    """Point of the convex hull of the rows of ``P`` nearest the origin.

    Returns barycentric weights over ``P``. Every affine subset is tried and
    the best one with non-negative weights wins; simplices here have at most
    four vertices, so the fifteen small solves are cheap.
    """
    n = len(P)
    best, best_w = math.inf, None
    for mask in range(1, 1 << n):
        idx = [k for k in range(n) if mask >> k & 1]
        S = P[idx]
        m = len(idx)
        # minimize |S^T lam|^2 subject to sum(lam) = 1
        K = np.zeros((m + 1, m + 1))
        K[:m, :m] = S @ S.T
        K[:m, m] = 1.0
        K[m, :m] = 1.0
        rhs = np.zeros(m + 1)
        rhs[m] = 1.0
        try:
            lam = np.linalg.solve(K, rhs)[:m]
        except np.linalg.LinAlgError:
            continue
        if np.any(lam < -1e-12):
            continue
        norm = float(np.linalg.norm(lam @ S))
        if norm < best - 1e-15:
            best = norm
            best_w = np.zeros(n)
            best_w[idx] = np.clip(lam, 0.0, None) / np.clip(lam, 0.0, None).sum()
    return best_w


def _closest_pair(A: _Placed, B: _Placed, tol, start=None):
    """Closest points of two disjoint convex bodies.

    A wall and a finite body have a closed form. Two finite bodies use the
    Gilbert-Johnson-Keerthi iteration on their support functions, stopped
    once the distance is certified to within ``tol`` by the support bound.
    """
    if A.halfspace or B.halfspace:
        W, F = (A, B) if A.halfspace else (B, A)
        f = F.support(-W.normals[0])
        w = W.project(f)
        return (w, f, 1) if A.halfspace else (f, w, 1)
    if start is not None:
        a0, b0 = (np.asarray(p, dtype=float) for p in start)
    else:
        a0, b0 = A.center, B.center
    PA, PB = [a0], [b0]
    v = a0 - b0
    previous = math.inf
    for it in range(1, MAX_ITER + 1):
        dist = float(np.linalg.norm(v))
        # stop at contact, or once round-off keeps the simplex from improving
        if dist <= tol or dist >= previous * (1.0 - 1e-12):
            break
        previous = dist
        sa, sb = A.support(-v), B.support(v)
        w = sa - sb
        if dist * dist - float(v @ w) <= tol * dist:
            break
        PA.append(sa)
        PB.append(sb)
        lam = _simplex_closest(np.array(PA) - np.array(PB))
        keep = lam > 0.0
        PA = [p for p, k in zip(PA, keep) if k]
        PB = [p for p, k in zip(PB, keep) if k]
        lam = lam[keep]
        v = lam @ (np.array(PA) - np.array(PB))
    else:
        raise SolverStalled("closest-point iteration did not converge", iterations=MAX_ITER)
    lam = _simplex_closest(np.array(PA) - np.array(PB))
    x, y = lam @ np.array(PA), lam @ np.array(PB)
    return A.project(x), B.project(y), it


def _solve_sphere_sphere(A: _Placed, B: _Placed):
    d = B.center - A.center
    dist = np.linalg.norm(d)
    u = d / dist if dist > 0.0 else np.eye(A.dim)[0]
    ra, rb = A.shape.radius, B.shape.radius
    return A.center + ra * u, B.center - rb * u


def _solve_sphere_wall(S: _Placed, W: _Placed):
    n = W.normals[0]  # points out of the wall's material
    xs = S.center - S.shape.radius * n
    xw = W.project(S.center)
    return xs, xw


def solve_contact_points(shape_a, pose_a, shape_b, pose_b, warm_start=None):
    """Contact points ``(x1, x2, penetrating, iterations)`` in global coordinates."""
    A = _Placed(shape_a, pose_a)
    B = _Placed(shape_b, pose_b)
    r_min = min(r for r in (A.radius, B.radius) if math.isfinite(r))
    tol = TOL * r_min
    if isinstance(shape_a, SphereShape) and isinstance(shape_b, SphereShape):
        x1, x2 = _solve_sphere_sphere(A, B)
        iters = 1
    elif isinstance(shape_a, SphereShape) and B.halfspace:
        x1, x2 = _solve_sphere_wall(A, B)
        iters = 1
    elif A.halfspace and isinstance(shape_b, SphereShape):
        x2, x1 = _solve_sphere_wall(B, A)
        iters = 1
    else:
        seeds1 = () if warm_start is None else (np.asarray(warm_start[0], dtype=float),)
        seeds2 = () if warm_start is None else (np.asarray(warm_start[1], dtype=float),)
        x1, v1, i1 = _deepest_point(A, B, tol, seeds1)
        if v1 >= 0.0:
            x1, x2, i2 = _closest_pair(A, B, tol, warm_start)
            return x1, x2, False, max(i1, i2)
        x2, v2, i2 = _deepest_point(B, A, tol, seeds2)
        iters = max(i1, i2)
    penetrating = bool(B.sdf(x1) < 0.0 and A.sdf(x2) < 0.0)
    return x1, x2, penetrating, iters


# -- public detection and kinematics ------------------------------------------------


def contact_kinematics(home: RigidBody, neighbor: RigidBody, x1, x2):
    """Relative velocity at the contact and its component orthogonal to ``xi``."""
    xi = np.asarray(x2, dtype=float) - np.asarray(x1, dtype=float)
    v_home = home.velocity + cross_w(home.angular_velocity, np.asarray(x1) - home.position)
    v_nb = neighbor.velocity + cross_w(neighbor.angular_velocity, np.asarray(x2) - neighbor.position)
    v_r = v_home - v_nb
    norm = np.linalg.norm(xi)
    if norm < DEGENERATE_BOND:
        raise DegenerateBond(f"contact points coincide (|xi|={norm:.3g})")
    u = xi / norm
    return v_r, v_r - (v_r @ u) * u


def detect_contact(home: RigidBody, neighbor: RigidBody, warm_start=None) -> ContactSummary:
    """Solve the contact points of a body pair and summarize the contact.

    ``warm_start`` is a previous ``(x1, x2)`` in global coordinates.
    """
    if home is neighbor:
        raise ValueError("a body cannot contact itself")
    x1, x2, penetrating, iters = solve_contact_points(
        home.shape, home.pose, neighbor.shape, neighbor.pose, warm_start
    )
    xi = x2 - x1
    norm = np.linalg.norm(xi)
    v_home = home.velocity + cross_w(home.angular_velocity, x1 - home.position)
    v_nb = neighbor.velocity + cross_w(neighbor.angular_velocity, x2 - neighbor.position)
    v_r = v_home - v_nb
    if norm < DEGENERATE_BOND:
        normal = neighbor.shape.gradient(to_reference(neighbor.pose, x1))
        normal = rotate_to_global(neighbor.pose, normal)
    else:
        normal = xi / norm if penetrating else -xi / norm
    v_a = v_r - (v_r @ normal) * normal
    return ContactSummary(x1, x2, penetrating, normal, v_r, v_a, iters)


# -- force laws ----------------------------------------------------------------------


def elastic_normal_force(summary: ContactSummary, params: ElasticContactParams):
    """Penalty force on the home body: ``kappa_n * xi`` while overlapping."""
    if not summary.penetrating:
        return np.zeros_like(summary.x1)
    return params.kappa_n * summary.xi


def shear_rhs(summary: ContactSummary, params: ElasticContactParams):
    if not summary.penetrating:
        return np.zeros_like(summary.x1)
    return -params.kappa_s * summary.v_a


def coulomb_cap(F_s, F_n, mu: float):
    """Rescale ``F_s`` onto the friction cone ``|F_s| <= mu |F_n|``."""
    F_s = np.asarray(F_s, dtype=float)
    limit = mu * float(np.linalg.norm(F_n))
    mag = float(np.linalg.norm(F_s))
    if mag <= limit:
        return F_s.copy()
    return F_s * (limit / mag)


def contact_force(summary: ContactSummary, params: ElasticContactParams, shear_state=None):
    """Total force on the home body and the moment-arm point.

    Handles the purely elastic law (zero damping) and the spring-dashpot law
    alike. The neighbor receives the opposite force at the same point.
    """
    arm = 0.5 * (summary.x1 + summary.x2)
    if not summary.penetrating:
        return np.zeros_like(summary.x1), arm
    F_n = elastic_normal_force(summary, params) - params.gamma_n * summary.v_r
    F_s = -params.gamma_s * summary.v_a
    if shear_state is not None:
        F_s = F_s + shear_state.state
    return F_n + coulomb_cap(F_s, F_n, params.mu), arm


def viscoelastic_forces(summary: ContactSummary, params: ViscoelasticContactParams, shear_state=None):
    return contact_force(summary, params, shear_state)


@dataclass(eq=False)
class ShearForceState(StateObject):
    """Accumulated elastic shear force of one contacting pair.

    ``rhs`` uses the tangential velocity of the most recent contact solve, so
    it is constant over a step. The stored force is kept on the friction cone
    of the elastic normal force, and dropped when the pair separates.
    """

    key: tuple
    dim: int
    params: ElasticContactParams
    state: np.ndarray = None
    active: bool = False
    summary: ContactSummary = field(default=None, repr=False)

    def __post_init__(self):
        if self.state is None:
            self.state = np.zeros(self.dim)

    def update(self, summary: ContactSummary):
        self.summary = summary
        self.active = summary.penetrating
        if not self.active:
            self.reset()

    def rhs(self, state, t):
        if self.summary is None or not self.active:
            return np.zeros(self.dim)
        return shear_rhs(self.summary, self.params)

    def reset(self):
        self.state = np.zeros(self.dim)
        self.active = False

    def post_step(self, t):
        if not self.active:
            self.reset()
            return
        self.state = coulomb_cap(self.state, elastic_normal_force(self.summary, self.params), self.params.mu)
