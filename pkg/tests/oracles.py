"""Independent reference computations shared by the tests."""

import numpy as np

from sdfdem.geometry import ConvexPolytopeShape
from sdfdem.rigid_body import Pose, from_reference, quaternion_from_axis_angle, to_reference


def polytope_boundary_samples(shape: ConvexPolytopeShape, n=4096, edge_share=0.5, seed=0):
    """``n`` boundary points of a polytope in its reference frame.

    Every vertex is included. In 2-D the rest is spread evenly along the edges.
    In 3-D ``edge_share`` of the rest is spread evenly along the edges and the
    remainder is drawn uniformly over the faces (area weighted).
    """
    V = shape.vertices
    pts = [V]
    budget = n - len(V)
    edges = {}
    for loop in shape.faces:
        for a, b in zip(loop, np.roll(loop, -1)):
            edges[(min(a, b), max(a, b))] = None
    edges = list(edges)
    lengths = np.array([np.linalg.norm(V[b] - V[a]) for a, b in edges])
    n_edge = budget if shape.dim == 2 else int(edge_share * budget)
    spacing = lengths.sum() / n_edge
    for (a, b), length in zip(edges, lengths):
        m = max(1, int(round(length / spacing)))
        t = (np.arange(1, m + 1) - 0.5) / m
        pts.append(V[a] + t[:, None] * (V[b] - V[a]))
    if shape.dim == 3:
        rng = np.random.default_rng(seed)
        tris, areas = [], []
        for loop in shape.faces:
            for k in range(1, len(loop) - 1):
                tri = V[[loop[0], loop[k], loop[k + 1]]]
                tris.append(tri)
                areas.append(0.5 * np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0])))
        tris, areas = np.array(tris), np.array(areas)
        m = n - sum(len(p) for p in pts)
        pick = rng.choice(len(tris), size=max(m, 0), p=areas / areas.sum())
        u, v = rng.random(len(pick)), rng.random(len(pick))
        flip = u + v > 1.0
        u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
        T = tris[pick]
        pts.append(T[:, 0] + u[:, None] * (T[:, 1] - T[:, 0]) + v[:, None] * (T[:, 2] - T[:, 0]))
    return np.vstack(pts)[:n]


def random_polytope(rng, dim, radius=1.0, n_points=None):
    """Convex hull of random points on a sphere of the given radius."""
    n_points = n_points or (int(rng.integers(5, 9)) if dim == 2 else int(rng.integers(8, 14)))
    P = rng.normal(size=(n_points, dim))
    P *= radius / np.linalg.norm(P, axis=1, keepdims=True)
    if dim == 2:
        ang = np.sort(np.arctan2(P[:, 1], P[:, 0]))
        return ConvexPolytopeShape(radius * np.column_stack([np.cos(ang), np.sin(ang)]))
    return ConvexPolytopeShape.from_points(P)


def random_pose(rng, dim, center):
    if dim == 2:
        return Pose(np.asarray(center, dtype=float), float(rng.uniform(-np.pi, np.pi)))
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Pose(np.asarray(center, dtype=float), quaternion_from_axis_angle(axis, float(rng.uniform(0, np.pi))))


def brute_force_contact(shape_a, pose_a, shape_b, pose_b, n=4096):
    """Deepest sampled boundary point of each body inside the other.

    Returns ``(x1, x2, phi_b_at_x1, phi_a_at_x2)`` in global coordinates.
    """
    Sa = from_reference(pose_a, polytope_boundary_samples(shape_a, n))
    Sb = from_reference(pose_b, polytope_boundary_samples(shape_b, n))
    fa = shape_b.sdf(to_reference(pose_b, Sa))
    fb = shape_a.sdf(to_reference(pose_a, Sb))
    i, j = int(np.argmin(fa)), int(np.argmin(fb))
    return Sa[i], Sb[j], float(fa[i]), float(fb[j])


def touching_offset(shape_a, pose_a, shape_b, pose_b, u):
    """Largest ``s`` for which B moved by ``s * u`` still touches A.

    Ray cast from the origin along ``u`` onto the Minkowski difference
    ``A - B`` of the two placed polytopes (B taken at its pose with its center
    at the origin), built as the convex hull of all vertex differences.
    """
    from scipy.spatial import ConvexHull

    VA = from_reference(pose_a, shape_a.vertices)
    VB = from_reference(Pose(np.zeros_like(pose_b.position), pose_b.orientation), shape_b.vertices)
    D = (VA[:, None, :] - VB[None, :, :]).reshape(-1, VA.shape[1])
    hull = ConvexHull(D)
    n, o = hull.equations[:, :-1], hull.equations[:, -1]
    nu = n @ u
    ahead = nu > 1e-14
    return float(np.min(-o[ahead] / nu[ahead]))
