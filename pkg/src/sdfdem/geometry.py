"""Particle shapes described by signed distance functions.

Every shape lives in its own reference frame with the center of mass at the
origin. Distances are negative inside, zero on the boundary and positive
outside. All shapes are immutable once built.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np

from .errors import DegenerateShape, ProjectionDiverged

FD_STEP = 1e-6
PROJECTION_MAX_ITER = 100
PROJECTION_TOL = 1e-8


def _as_points(X, dim):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    pts = X.reshape(1, -1) if single else X
    if pts.shape[-1] != dim:
        raise ValueError(f"expected {dim}-D points, got shape {X.shape}")
    return pts, single


class ShapeDescriptor(ABC):
    """Abstract convex shape.

    Subclasses implement :meth:`_sdf` on an ``(n, d)`` array. Gradients and
    boundary projection fall back to finite differences and the iteration
    ``X <- X - sdf(X) * grad(X)``, which converges for the 1-Lipschitz SDF of a
    convex body.
    """

    dim: int

    @property
    @abstractmethod
    def bounding_radius(self) -> float:
        ...

    @abstractmethod
    def _sdf(self, pts: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def mass_properties(self, density: float):
        """Return ``(mass, inertia, volume)`` for a uniform density.

        ``inertia`` is a ``(3, 3)`` tensor about the center of mass in 3-D and a
        scalar (moment about the out-of-plane axis) in 2-D.
        """

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.bounding_radius)

    def sdf(self, X):
        pts, single = _as_points(X, self.dim)
        out = self._sdf(pts)
        return float(out[0]) if single else out

    def gradient(self, X):
        pts, single = _as_points(X, self.dim)
        h = FD_STEP * self._length_scale()
        grad = np.empty_like(pts)
        for k in range(self.dim):
            step = np.zeros(self.dim)
            step[k] = h
            grad[:, k] = (self._sdf(pts + step) - self._sdf(pts - step)) / (2.0 * h)
        norm = np.linalg.norm(grad, axis=1, keepdims=True)
        # a central difference straddling a kink can shrink the vector; any
        # direction in the subdifferential is acceptable there
        grad = np.where(norm > 0.0, grad / np.where(norm > 0.0, norm, 1.0), 0.0)
        return grad[0] if single else grad

    def project(self, X):
        pts, single = _as_points(X, self.dim)
        tol = PROJECTION_TOL * self._length_scale()
        out = pts.copy()
        for _ in range(PROJECTION_MAX_ITER):
            d = self._sdf(out)
            active = np.abs(d) > tol
            if not active.any():
                return out[0] if single else out
            g = self.gradient(out[active])
            out[active] -= d[active, None] * g
        d = self._sdf(out)
        if np.any(np.abs(d) > tol):
            raise ProjectionDiverged(
                f"projection onto {type(self).__name__} boundary did not reach "
                f"tolerance {tol:.3g} (residual {np.max(np.abs(d)):.3g})"
            )
        return out[0] if single else out

    def support(self, direction):
        """Boundary point extreme in ``direction`` or ``None`` if unavailable."""
        return None

    def planes(self):
        """Facet description ``(normals, offsets)`` with ``normals @ X <= offsets``
        inside, or ``None`` for curved shapes."""
        return None

    def _length_scale(self) -> float:
        r = self.bounding_radius
        return r if math.isfinite(r) else 1.0


class SphereShape(ShapeDescriptor):
    """Ball (3-D) or disk (2-D) of radius ``radius``."""

    def __init__(self, radius: float, dim: int = 3):
        if not radius > 0:
            raise DegenerateShape(f"sphere radius must be positive, got {radius}")
        if dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        self.radius = float(radius)
        self.dim = dim

    def __repr__(self):
        return f"SphereShape(radius={self.radius}, dim={self.dim})"

    @property
    def bounding_radius(self):
        return self.radius

    def _sdf(self, pts):
        return np.linalg.norm(pts, axis=1) - self.radius

    def _directions(self, pts):
        norm = np.linalg.norm(pts, axis=1, keepdims=True)
        fallback = np.zeros_like(pts)
        fallback[:, 0] = 1.0
        return np.where(norm > 0.0, pts / np.where(norm > 0.0, norm, 1.0), fallback)

    def gradient(self, X):
        pts, single = _as_points(X, self.dim)
        g = self._directions(pts)
        return g[0] if single else g

    def project(self, X):
        pts, single = _as_points(X, self.dim)
        p = self.radius * self._directions(pts)
        return p[0] if single else p

    def support(self, direction):
        d = np.asarray(direction, dtype=float)
        return self.radius * d / np.linalg.norm(d)

    def mass_properties(self, density):
        if self.dim == 3:
            volume = 4.0 / 3.0 * math.pi * self.radius**3
            mass = density * volume
            return mass, np.eye(3) * (0.4 * mass * self.radius**2), volume
        volume = math.pi * self.radius**2
        mass = density * volume
        return mass, 0.5 * mass * self.radius**2, volume


class BoxShape(ShapeDescriptor):
    """Axis-aligned box with side lengths ``extents``.

    Uses the exact box distance ``|max(q, 0)| + min(max_i q_i, 0)`` with
    ``q = |X| - extents / 2``.
    """

    def __init__(self, extents):
        Y = np.asarray(extents, dtype=float)
        if Y.ndim != 1 or Y.size not in (2, 3):
            raise ValueError("box extents must be a 2- or 3-vector")
        if np.any(Y <= 0):
            raise DegenerateShape(f"box extents must be positive, got {Y}")
        self.extents = Y
        self.half = 0.5 * Y
        self.dim = Y.size

    def __repr__(self):
        return f"BoxShape(extents={self.extents.tolist()})"

    @property
    def bounding_radius(self):
        return float(np.linalg.norm(self.half))

    def _sdf(self, pts):
        q = np.abs(pts) - self.half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def project(self, X):
        pts, single = _as_points(X, self.dim)
        out = np.clip(pts, -self.half, self.half)
        q = np.abs(pts) - self.half
        interior = np.all(q <= 0.0, axis=1)
        if interior.any():
            idx = np.nonzero(interior)[0]
            axis = np.argmax(q[idx], axis=1)
            sign = np.where(pts[idx, axis] < 0.0, -1.0, 1.0)
            out[idx, axis] = sign * self.half[axis]
        return out[0] if single else out

    def support(self, direction):
        d = np.asarray(direction, dtype=float)
        return np.where(d < 0.0, -self.half, self.half)

    def planes(self):
        eye = np.eye(self.dim)
        return np.vstack([eye, -eye]), np.concatenate([self.half, self.half])

    def mass_properties(self, density):
        volume = float(np.prod(self.extents))
        mass = density * volume
        Y2 = self.extents**2
        if self.dim == 3:
            inertia = mass / 12.0 * np.diag([Y2[1] + Y2[2], Y2[0] + Y2[2], Y2[0] + Y2[1]])
            return mass, inertia, volume
        return mass, mass * (Y2[0] + Y2[1]) / 12.0, volume


class HalfSpaceShape(ShapeDescriptor):
    """Fixed planar wall. Material occupies ``X . normal > offset``."""

    def __init__(self, normal, offset: float = 0.0):
        n = np.asarray(normal, dtype=float)
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-9:
            raise DegenerateShape(f"half-space normal must be unit length, got |n|={norm}")
        self.normal = n / norm
        self.offset = float(offset)
        self.dim = n.size

    def __repr__(self):
        return f"HalfSpaceShape(normal={self.normal.tolist()}, offset={self.offset})"

    @property
    def bounding_radius(self):
        return math.inf

    def _sdf(self, pts):
        return -(pts @ self.normal - self.offset)

    def gradient(self, X):
        pts, single = _as_points(X, self.dim)
        g = np.broadcast_to(-self.normal, pts.shape).copy()
        return g[0] if single else g

    def project(self, X):
        pts, single = _as_points(X, self.dim)
        out = pts - (pts @ self.normal - self.offset)[:, None] * self.normal
        return out[0] if single else out

    def planes(self):
        return -self.normal[None, :], np.array([-self.offset])

    def mass_properties(self, density):
        inertia = math.inf if self.dim == 2 else np.full((3, 3), math.inf)
        return math.inf, inertia, math.inf


class ConvexPolytopeShape(ShapeDescriptor):
    """Convex polygon (2-D) or polyhedron (3-D).

    In 2-D pass an ordered vertex loop. In 3-D pass the vertex array and a list
    of faces, each face a loop of vertex indices. Vertices are shifted so the
    centroid sits at the origin; the applied shift is kept in ``centroid``.
    """

    def __init__(self, vertices, faces=None, recenter: bool = True):
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] not in (2, 3):
            raise ValueError("vertices must be an (n, 2) or (n, 3) array")
        self.dim = V.shape[1]
        if self.dim == 2:
            if faces is not None:
                raise ValueError("2-D polygons take a vertex loop only")
            if V.shape[0] < 3:
                raise DegenerateShape("a polygon needs at least 3 vertices")
            if _polygon_area(V) < 0.0:
                V = V[::-1].copy()
            faces = [[i, (i + 1) % len(V)] for i in range(len(V))]
        elif faces is None:
            raise ValueError("3-D polytopes need a face list")
        self.faces = [list(map(int, f)) for f in faces]

        volume, centroid = _volume_centroid(V, self.faces, self.dim)
        if not volume > 0.0:
            raise DegenerateShape(f"polytope volume must be positive, got {volume}")
        self.centroid = centroid if recenter else np.zeros(self.dim)
        self.vertices = V - self.centroid
        self._build_faces()
        self._check_convex()

    def __repr__(self):
        return f"ConvexPolytopeShape(dim={self.dim}, vertices={len(self.vertices)}, faces={len(self.faces)})"

    # -- construction helpers -------------------------------------------------

    def _build_faces(self):
        V = self.vertices
        normals, offsets = [], []
        if self.dim == 2:
            for a, b in self.faces:
                t = V[b] - V[a]
                n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
                normals.append(n)
                offsets.append(n @ V[a])
        else:
            loops = []
            for loop in self.faces:
                P = V[loop]
                n = _newell_normal(P)
                if n @ (P.mean(axis=0)) < 0.0:
                    loop = loop[::-1]
                    n = -n
                loops.append(loop)
                normals.append(n)
                offsets.append(n @ V[loop].mean(axis=0))
            self.faces = loops
        self._normals = np.array(normals)
        self._offsets = np.array(offsets)
        if self.dim == 3:
            # in-plane outward edge normals per face for the point-in-face test
            self._face_edges = []
            for loop, n in zip(self.faces, self._normals):
                P = V[loop]
                Q = np.roll(P, -1, axis=0)
                out = np.cross(Q - P, n)
                out /= np.linalg.norm(out, axis=1, keepdims=True)
                self._face_edges.append((P, Q, out))

    def _check_convex(self):
        scale = self.bounding_radius
        excess = self.vertices @ self._normals.T - self._offsets
        if np.max(excess) > 1e-10 * scale:
            raise DegenerateShape("polytope is not convex: a vertex lies outside a face plane")

    # -- SDF ------------------------------------------------------------------

    @property
    def bounding_radius(self):
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    def planes(self):
        return self._normals.copy(), self._offsets.copy()

    def support(self, direction):
        d = np.asarray(direction, dtype=float)
        return self.vertices[int(np.argmax(self.vertices @ d))].copy()

    def _sdf(self, pts):
        plane = pts @ self._normals.T - self._offsets
        inside = np.all(plane <= 0.0, axis=1)
        out = plane.max(axis=1)
        if (~inside).any():
            q = pts[~inside]
            out[~inside] = self._unsigned_distance(q)
        return out

    def _unsigned_distance(self, q):
        best = np.full(len(q), np.inf)
        V = self.vertices
        if self.dim == 2:
            for a, b in self.faces:
                best = np.minimum(best, _segment_distance(q, V[a], V[b]))
            return best
        for n, off, (P, Q, out) in zip(self._normals, self._offsets, self._face_edges):
            s = q @ n - off
            proj = q - s[:, None] * n
            in_face = np.all(np.einsum("nkd,kd->nk", proj[:, None, :] - P[None], out) <= 0.0, axis=1)
            d = np.where(in_face, np.abs(s), np.inf)
            if (~in_face).any():
                sub = q[~in_face]
                edge_best = np.full(len(sub), np.inf)
                for a, b in zip(P, Q):
                    edge_best = np.minimum(edge_best, _segment_distance(sub, a, b))
                d[~in_face] = edge_best
            best = np.minimum(best, d)
        return best

    # -- mass -----------------------------------------------------------------

    def mass_properties(self, density):
        V = self.vertices
        if self.dim == 2:
            P, Q = V, np.roll(V, -1, axis=0)
            cross = P[:, 0] * Q[:, 1] - P[:, 1] * Q[:, 0]
            area = 0.5 * cross.sum()
            polar = (cross * ((P * P).sum(1) + (P * Q).sum(1) + (Q * Q).sum(1))).sum() / 12.0
            return density * area, density * polar, area
        volume = 0.0
        second = np.zeros((3, 3))
        for loop in self.faces:
            a = V[loop[0]]
            for k in range(1, len(loop) - 1):
                b, c = V[loop[k]], V[loop[k + 1]]
                v = np.linalg.det(np.array([a, b, c])) / 6.0
                s = a + b + c
                second += v / 20.0 * (np.outer(a, a) + np.outer(b, b) + np.outer(c, c) + np.outer(s, s))
                volume += v
        if not volume > 0.0:
            raise DegenerateShape(f"polytope volume must be positive, got {volume}")
        C = density * second
        inertia = np.trace(C) * np.eye(3) - C
        return density * volume, inertia, volume

    # -- convenience constructors ----------------------------------------------

    @classmethod
    def from_points(cls, points):
        """Convex hull of a 2-D or 3-D point cloud."""
        from scipy.spatial import ConvexHull

        pts = np.asarray(points, dtype=float)
        hull = ConvexHull(pts)
        if pts.shape[1] == 2:
            return cls(pts[hull.vertices])
        faces = []
        for simplex, eq in zip(hull.simplices, hull.equations):
            tri = list(simplex)
            n = _newell_normal(pts[tri])
            if n @ eq[:3] < 0.0:
                tri = tri[::-1]
            faces.append(tri)
        used = np.unique(np.concatenate(faces))
        remap = {int(old): new for new, old in enumerate(used)}
        return cls(pts[used], [[remap[int(i)] for i in f] for f in faces])


def _polygon_area(V):
    P, Q = V, np.roll(V, -1, axis=0)
    return 0.5 * float(np.sum(P[:, 0] * Q[:, 1] - P[:, 1] * Q[:, 0]))


def _volume_centroid(V, faces, dim):
    if dim == 2:
        P, Q = V, np.roll(V, -1, axis=0)
        cross = P[:, 0] * Q[:, 1] - P[:, 1] * Q[:, 0]
        area = 0.5 * cross.sum()
        if area == 0.0:
            return 0.0, np.zeros(2)
        c = ((P + Q) * cross[:, None]).sum(axis=0) / (6.0 * area)
        return area, c
    ref = V.mean(axis=0)
    volume = 0.0
    moment = np.zeros(3)
    for loop in faces:
        P = V[loop]
        n = _newell_normal(P)
        if n @ (P.mean(axis=0) - ref) < 0.0:
            P = P[::-1]
        a = P[0] - ref
        for k in range(1, len(P) - 1):
            b, c = P[k] - ref, P[k + 1] - ref
            v = np.linalg.det(np.array([a, b, c])) / 6.0
            volume += v
            moment += v * (a + b + c) / 4.0
    if volume == 0.0:
        return 0.0, ref
    return volume, ref + moment / volume


def _newell_normal(P):
    Q = np.roll(P, -1, axis=0)
    n = np.array([
        np.sum((P[:, 1] - Q[:, 1]) * (P[:, 2] + Q[:, 2])),
        np.sum((P[:, 2] - Q[:, 2]) * (P[:, 0] + Q[:, 0])),
        np.sum((P[:, 0] - Q[:, 0]) * (P[:, 1] + Q[:, 1])),
    ])
    norm = np.linalg.norm(n)
    if norm == 0.0:
        raise DegenerateShape("degenerate face with zero area")
    return n / norm


def _segment_distance(q, a, b):
    t = b - a
    s = np.clip(((q - a) @ t) / (t @ t), 0.0, 1.0)
    return np.linalg.norm(q - (a + s[:, None] * t), axis=1)


# -- module-level operations ----------------------------------------------------


def evaluate_sdf(shape: ShapeDescriptor, X):
    return shape.sdf(X)


def sdf_gradient(shape: ShapeDescriptor, X):
    return shape.gradient(X)


def project_to_boundary(shape: ShapeDescriptor, X):
    return shape.project(X)


def mass_properties(shape: ShapeDescriptor, density: float):
    if not density > 0:
        raise ValueError(f"density must be positive, got {density}")
    mass, inertia, volume = shape.mass_properties(density)
    if shape.is_finite and not volume > 0:
        raise DegenerateShape(f"shape volume must be positive, got {volume}")
    return mass, inertia, volume


# -- shape factories ------------------------------------------------------------


def regular_polygon(n: int, circumradius: float = 1.0, phase: float = 0.0) -> ConvexPolytopeShape:
    ang = phase + 2.0 * np.pi * np.arange(n) / n
    return ConvexPolytopeShape(circumradius * np.column_stack([np.cos(ang), np.sin(ang)]))


def extrude_polygon(polygon, height: float) -> ConvexPolytopeShape:
    """Right prism obtained by extruding a 2-D polygon (shape or vertex loop) along z."""
    if isinstance(polygon, ConvexPolytopeShape):
        polygon = polygon.vertices
    P = np.asarray(polygon, dtype=float)
    if _polygon_area(P) < 0.0:
        P = P[::-1]
    n = len(P)
    z0 = np.column_stack([P, np.full(n, -0.5 * height)])
    z1 = np.column_stack([P, np.full(n, 0.5 * height)])
    V = np.vstack([z0, z1])
    faces = [list(range(n - 1, -1, -1)), list(range(n, 2 * n))]
    for i in range(n):
        j = (i + 1) % n
        faces.append([i, j, n + j, n + i])
    return ConvexPolytopeShape(V, faces)


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> ConvexPolytopeShape:
    t = (1.0 + 5.0**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return ConvexPolytopeShape(radius * np.array(verts), [list(f) for f in faces])
