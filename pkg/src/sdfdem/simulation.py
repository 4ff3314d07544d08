"""The simulation engine: a collection of bodies, bonds and auxiliary states
advanced in time.

Body state lives in flat arrays while a run is in progress; the
:class:`~sdfdem.rigid_body.RigidBody` objects are refreshed from the arrays
with :meth:`Simulation.sync_bodies` (observers call it before reading).

Each step:

1. drift positions and orientations with the accelerations of the last step;
2. rebuild the k-d tree and collect candidate contact pairs;
3. solve contact points pair by pair (closed form for sphere/sphere,
   sphere/wall and axis-aligned boxes, the general solver otherwise);
4. accumulate contact, peridynamic, beam and body forces;
5. kick velocities and step auxiliary states;
6. break over-stretched peridynamic bonds and hand their pairs to contact;
7. run post-step hooks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .contact import ElasticContactParams, SolverStalled, solve_contact_points
from .errors import SimulationAborted, UnknownBodyId
from .geometry import BoxShape, ConvexPolytopeShape, HalfSpaceShape, SphereShape
from .integration import quaternion_increment, rk2_step
from .neighbors import SpatialIndex, candidate_pairs
from .peridynamics import BeamBondSet, BondSet, LinearSolidMaterial, apply_fracture, assemble_peridynamic_forces, beam_bond_loads
from .rigid_body import (
    LoadContext,
    Pose,
    RigidBody,
    cross_r,
    cross_w,
    quat_conj,
    quat_to_matrix,
    rotate,
    rot2,
)

SPHERE, WALL, BOX, GENERAL = 0, 1, 2, 3


@dataclass
class PeridynamicModel:
    """A peridynamic body: bonds over a set of simulation bodies.

    ``members[k]`` is the simulation index of material point ``k``.
    """

    bonds: BondSet
    material: LinearSolidMaterial
    members: np.ndarray
    handoff: ElasticContactParams = None

    def __post_init__(self):
        self.members = np.asarray(self.members, dtype=int)
        if self.handoff is None:
            self.handoff = ElasticContactParams(kappa_n=self.material.handoff_stiffness)


@dataclass
class ContactTable:
    """Pair data of the most recent force evaluation (simulation indices).

    ``force`` is the force on body ``i`` from body ``j``; ``j`` receives the
    opposite. Only penetrating pairs are kept.
    """

    i: np.ndarray
    j: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    force: np.ndarray
    normal: np.ndarray
    v_a: np.ndarray
    kappa_n: np.ndarray
    kappa_s: np.ndarray

    @classmethod
    def empty(cls, dim):
        z = np.zeros((0, dim))
        e = np.zeros(0)
        return cls(np.zeros(0, dtype=int), np.zeros(0, dtype=int), z, z, z, z, z, e, e)

    def __len__(self):
        return len(self.i)


def _kind(shape):
    if isinstance(shape, SphereShape):
        return SPHERE
    if isinstance(shape, HalfSpaceShape):
        return WALL
    if isinstance(shape, BoxShape):
        return BOX
    return GENERAL


def _bincount_vec(idx, values, n):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.bincount(idx, values, minlength=n)
    out = np.empty((n, values.shape[1]))
    for k in range(values.shape[1]):
        out[:, k] = np.bincount(idx, values[:, k], minlength=n)
    return out


class Simulation:
    def __init__(
        self,
        bodies,
        contact_params: ElasticContactParams = None,
        peridynamics=(),
        beams=(),
        state_objects=(),
        threads: int = 1,
        skin_fraction: float = 0.1,
        angular_damping: float = 0.0,
    ):
        self.bodies = sorted(bodies, key=lambda b: b.id)
        ids = [b.id for b in self.bodies]
        if len(set(ids)) != len(ids):
            raise ValueError("body ids must be unique")
        self.index_of = {b.id: k for k, b in enumerate(self.bodies)}
        self.n = len(self.bodies)
        self.dim = self.bodies[0].dim if self.bodies else 3
        self.contact_params = contact_params
        self.peridynamics = list(peridynamics)
        self.beams = list(beams)
        self.state_objects = list(state_objects)
        self.threads = max(1, int(threads))
        self.skin_fraction = skin_fraction
        self.angular_damping = angular_damping
        self.t = 0.0
        self.steps = 0
        self.warm = {}
        self.shear_keys = np.zeros(0, dtype=np.int64)
        self.shear_vals = np.zeros((0, self.dim))
        self.handoff_i = np.zeros(0, dtype=int)
        self.handoff_j = np.zeros(0, dtype=int)
        self.handoff_kn = np.zeros(0)
        self.contacts = ContactTable.empty(self.dim)
        self.broken_log = []
        self.broken_per_body = np.zeros(self.n, dtype=int)
        self.step_hooks = []
        self._load_arrays()
        self._accel = None

    # -- state arrays --------------------------------------------------------------

    @property
    def is_empty(self):
        return self.n == 0

    def _load_arrays(self):
        b = self.bodies
        d = self.dim
        self.X = np.array([x.position for x in b], dtype=float).reshape(-1, d)
        self.V = np.array([x.velocity for x in b], dtype=float).reshape(-1, d)
        self.X_ref = np.array([x.reference_position for x in b], dtype=float).reshape(-1, d)
        if d == 2:
            self.Q = np.array([x.orientation for x in b], dtype=float)
            self.W = np.array([x.angular_velocity for x in b], dtype=float)
            self.I_ref = np.array([x.inertia_ref for x in b], dtype=float)
        else:
            self.Q = np.array([x.orientation for x in b], dtype=float).reshape(-1, 4)
            self.W = np.array([x.angular_velocity for x in b], dtype=float).reshape(-1, 3)
            self.I_ref = np.array([x.inertia_ref for x in b], dtype=float).reshape(-1, 3, 3)
        self.mass = np.array([x.mass for x in b], dtype=float)
        self.volume = np.array([x.volume for x in b], dtype=float)
        self.fixed = np.array([x.fixed for x in b], dtype=bool)
        self.rotates = np.array([x.rotates and not x.fixed for x in b], dtype=bool)
        self.kin_vel = np.array([x.kinematic_velocity for x in b], dtype=float).reshape(-1, d)
        self.kind = np.array([_kind(x.shape) for x in b], dtype=int)
        self.finite = np.array([x.shape.is_finite for x in b], dtype=bool)
        self.group = np.array([x.group for x in b], dtype=int)
        self._refresh_radii()
        self.laws = {}
        for k, body in enumerate(b):
            for law in body.body_forces:
                self.laws.setdefault(id(law), [law, []])[1].append(k)
        self.laws = [(law, np.array(idx, dtype=int)) for law, idx in self.laws.values()]

    def _refresh_radii(self):
        self._pair_cache = None
        self.radius = np.array([x.shape.bounding_radius if x.shape.is_finite else 0.0 for x in self.bodies])
        self.sphere_r = np.array([x.shape.radius if isinstance(x.shape, SphereShape) else 0.0 for x in self.bodies])
        half = np.zeros((self.n, self.dim))
        for k, x in enumerate(self.bodies):
            if isinstance(x.shape, BoxShape):
                half[k] = x.shape.half
        self.box_half = half

    def set_shape(self, body_id, shape):
        """Swap a body's geometry (time-dependent shapes). Mass is unchanged."""
        k = self.index_of[body_id]
        self.bodies[k].shape = shape
        self.kind[k] = _kind(shape)
        self._refresh_radii()

    def body(self, body_id) -> RigidBody:
        if body_id not in self.index_of:
            raise UnknownBodyId(body_id)
        self.sync_bodies()
        return self.bodies[self.index_of[body_id]]

    def sync_bodies(self):
        for k, body in enumerate(self.bodies):
            body.position = self.X[k].copy()
            body.velocity = self.V[k].copy()
            if self.dim == 2:
                body.orientation = float(self.Q[k])
                body.angular_velocity = float(self.W[k])
            else:
                body.orientation = self.Q[k].copy()
                body.angular_velocity = self.W[k].copy()

    def pose(self, k) -> Pose:
        return Pose(self.X[k], float(self.Q[k]) if self.dim == 2 else self.Q[k])

    # -- contact --------------------------------------------------------------------

    def _candidate_pairs(self):
        fin = np.nonzero(self.finite)[0]
        pairs = []
        if len(fin) >= 2:
            pairs.append(self._finite_pairs(fin))
        walls = np.nonzero(~self.finite)[0]
        if len(walls) and len(fin):
            skin = self.skin_fraction * float(self.radius[fin].max())
            for w in walls:
                shape = self.bodies[w].shape
                dist = -((self.X[fin] - self.X[w]) @ shape.normal - shape.offset)
                near = fin[(dist < self.radius[fin] + skin) & ~self.fixed[fin]]
                if len(near):
                    pairs.append(np.sort(np.stack([near, np.full(len(near), w)], axis=1), axis=1))
        if not pairs:
            return np.zeros((0, 2), dtype=int)
        allp = np.concatenate(pairs)
        order = np.lexsort((allp[:, 1], allp[:, 0]))
        return allp[order]

    def _finite_pairs(self, fin):
        """Particle-particle candidates, reused until some particle has moved
        more than half the skin distance since the list was built."""
        skin = self.skin_fraction * float(self.radius[fin].max())
        cache = self._pair_cache
        if cache is not None:
            moved = np.linalg.norm(self.X[fin] - cache[1], axis=1).max()
            if moved < 0.5 * skin:
                return cache[0]
        index = SpatialIndex(self.X[fin], timestamp=self.t)
        p = fin[candidate_pairs(self.X[fin], self.radius[fin], self.skin_fraction, index)]
        both_fixed = self.fixed[p[:, 0]] & self.fixed[p[:, 1]]
        gi, gj = self.group[p[:, 0]], self.group[p[:, 1]]
        same_body = (gi >= 0) & (gi == gj)
        p = p[~both_fixed & ~same_body]
        self._pair_cache = (p, self.X[fin].copy())
        return p

    def _solve_pairs(self, pairs):
        """Contact points for every pair: ``x1, x2, penetrating, normal``."""
        m = len(pairs)
        d = self.dim
        x1 = np.zeros((m, d))
        x2 = np.zeros((m, d))
        pen = np.zeros(m, dtype=bool)
        normal = np.zeros((m, d))
        if m == 0:
            return x1, x2, pen, normal
        i, j = pairs[:, 0], pairs[:, 1]
        ki, kj = self.kind[i], self.kind[j]

        sel = np.nonzero((ki == SPHERE) & (kj == SPHERE))[0]
        if len(sel):
            a, b = i[sel], j[sel]
            diff = self.X[b] - self.X[a]
            dist = np.linalg.norm(diff, axis=1)
            u = diff / np.where(dist > 0.0, dist, 1.0)[:, None]
            u[dist == 0.0] = np.eye(d)[0]
            x1[sel] = self.X[a] + self.sphere_r[a, None] * u
            x2[sel] = self.X[b] - self.sphere_r[b, None] * u
            pen[sel] = dist < self.sphere_r[a] + self.sphere_r[b]
            normal[sel] = -u

        for s_kind, w_kind, sphere_first in ((SPHERE, WALL, True), (WALL, SPHERE, False)):
            sel = np.nonzero((ki == s_kind) & (kj == w_kind))[0]
            if not len(sel):
                continue
            s_idx = i[sel] if sphere_first else j[sel]
            w_idx = j[sel] if sphere_first else i[sel]
            n_in = np.array([self.bodies[w].shape.normal for w in w_idx])
            off = np.array([self.bodies[w].shape.offset for w in w_idx])
            plane = off + np.einsum("ij,ij->i", n_in, self.X[w_idx])
            h = np.einsum("ij,ij->i", self.X[s_idx], n_in) - plane
            xs = self.X[s_idx] + self.sphere_r[s_idx, None] * n_in
            xw = self.X[s_idx] - h[:, None] * n_in
            pen[sel] = -h < self.sphere_r[s_idx]
            if sphere_first:
                x1[sel], x2[sel], normal[sel] = xs, xw, -n_in
            else:
                x1[sel], x2[sel], normal[sel] = xw, xs, n_in

        aligned = (ki == BOX) & (kj == BOX) & ~self.rotates[i] & ~self.rotates[j]
        if d == 3:
            aligned &= np.all(np.abs(self.Q[i] - np.array([1.0, 0, 0, 0])) < 1e-15, axis=1)
            aligned &= np.all(np.abs(self.Q[j] - np.array([1.0, 0, 0, 0])) < 1e-15, axis=1)
        else:
            aligned &= (self.Q[i] == 0.0) & (self.Q[j] == 0.0)
        sel = np.nonzero(aligned)[0]
        if len(sel):
            a, b = i[sel], j[sel]
            p1, f1 = self._box_deepest(a, b)
            p2, f2 = self._box_deepest(b, a)
            x1[sel], x2[sel] = p1, p2
            pen[sel] = (f1 < 0.0) & (f2 < 0.0)
            xi = p2 - p1
            nrm = np.linalg.norm(xi, axis=1)
            c = self.X[a] - self.X[b]
            fallback = c / np.maximum(np.linalg.norm(c, axis=1), 1e-300)[:, None]
            unit = xi / np.where(nrm > 0, nrm, 1.0)[:, None]
            signed = np.where(pen[sel, None], unit, -unit)
            normal[sel] = np.where(nrm[:, None] > 1e-14, signed, fallback)

        handled = ((ki == SPHERE) & (kj == SPHERE)) | ((ki == SPHERE) & (kj == WALL)) | ((ki == WALL) & (kj == SPHERE)) | aligned
        rest = np.nonzero(~handled)[0]
        if len(rest):
            results = self._solve_general(pairs[rest])
            for r, (p1, p2, pn, nrm) in zip(rest, results):
                x1[r], x2[r], pen[r], normal[r] = p1, p2, pn, nrm
        return x1, x2, pen, normal

    def _box_deepest(self, a, b):
        """argmin of box b's SDF over the boundary of axis-aligned box a."""
        d = self.dim
        ca, cb = self.X[a], self.X[b]
        ha, hb = self.box_half[a], self.box_half[b]
        base = np.clip(cb, ca - ha, ca + ha)
        best = np.full(len(a), np.inf)
        best_p = base.copy()
        for axis in range(d):
            for sign in (-1.0, 1.0):
                p = base.copy()
                p[:, axis] = ca[:, axis] + sign * ha[:, axis]
                q = np.abs(p - cb) - hb
                phi = np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0)
                better = phi < best
                best = np.where(better, phi, best)
                best_p[better] = p[better]
        return best_p, best

    def _solve_general(self, pairs):
        def solve(pair):
            a, b = int(pair[0]), int(pair[1])
            if self._separated(a, b):
                return "apart"
            key = (a, b)
            pa, pb = self.pose(a), self.pose(b)
            warm = None
            if key in self.warm:
                X1, X2 = self.warm[key]
                warm = (self._from_body(a, X1), self._from_body(b, X2))
            try:
                p1, p2, pn, _ = solve_contact_points(self.bodies[a].shape, pa, self.bodies[b].shape, pb, warm)
            except SolverStalled:
                return None
            return p1, p2, pn

        if self.threads > 1 and len(pairs) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                raw = list(pool.map(solve, pairs))
        else:
            raw = [solve(p) for p in pairs]
        out = []
        new_warm = {}
        for pair, res in zip(pairs, raw):
            a, b = int(pair[0]), int(pair[1])
            if res is None or isinstance(res, str):
                z = np.zeros(self.dim)
                out.append((self.X[a].copy(), self.X[b].copy(), False, z))
                continue
            p1, p2, pn = res
            new_warm[(a, b)] = (self._to_body(a, p1), self._to_body(b, p2))
            xi = p2 - p1
            nrm = np.linalg.norm(xi)
            if nrm > 1e-14:
                normal = xi / nrm if pn else -xi / nrm
            else:
                g = self.bodies[b].shape.gradient(self._to_body(b, p1))
                normal = self._rotate_global(b, g)
            out.append((p1, p2, pn, normal))
        self.warm = new_warm
        return out

    def _hull_global(self, k):
        """Global vertices of a polytope or box body, else None."""
        shape = self.bodies[k].shape
        if isinstance(shape, ConvexPolytopeShape):
            V = shape.vertices
        elif isinstance(shape, BoxShape):
            signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * self.dim, indexing="ij")).reshape(self.dim, -1).T
            V = signs * shape.half
        else:
            return None
        return self.X[k] + self._rotate_global(k, V)

    def _planes_global(self, k):
        shape = self.bodies[k].shape
        planes = shape.planes()
        if planes is None:
            return None
        N, O = planes
        Ng = self._rotate_global(k, np.asarray(N, dtype=float))
        return Ng, np.asarray(O, dtype=float) + Ng @ self.X[k]

    def _separated(self, a, b):
        """Cheap exact certificate that two bodies do not touch.

        Tries bounding spheres, then a sphere center against the other SDF,
        then every face plane of either polytope against the other's
        vertices. ``False`` means no certificate was found, not contact.
        """
        if self.finite[a] and self.finite[b]:
            if np.linalg.norm(self.X[a] - self.X[b]) >= self.radius[a] + self.radius[b]:
                return True
        for s, o in ((a, b), (b, a)):
            if self.kind[s] == SPHERE:
                X = self._to_body(o, self.X[s])
                return bool(self.bodies[o].shape.sdf(X) > self.sphere_r[s])
        for p, q in ((a, b), (b, a)):
            planes = self._planes_global(p)
            verts = self._hull_global(q)
            if planes is None or verts is None:
                continue
            N, O = planes
            if np.any((verts @ N.T - O).min(axis=0) > 0.0):
                return True
        return False

    def _to_body(self, k, x):
        off = np.asarray(x) - self.X[k]
        return rot2(-self.Q[k], off) if self.dim == 2 else rotate(quat_conj(self.Q[k]), off)

    def _from_body(self, k, X):
        return self.X[k] + self._rotate_global(k, X)

    def _rotate_global(self, k, v):
        return rot2(self.Q[k], v) if self.dim == 2 else rotate(self.Q[k], v)

    def _contact_forces(self, X, V, W, dt_shear):
        """Contact loads ``(F, T)`` and the refreshed contact table."""
        d = self.dim
        F = np.zeros((self.n, d))
        T = np.zeros(self.n) if d == 2 else np.zeros((self.n, 3))
        pairs = self._candidate_pairs() if self.contact_params is not None else np.zeros((0, 2), dtype=int)
        kn = np.full(len(pairs), self.contact_params.kappa_n if self.contact_params else 0.0)
        ks = np.full(len(pairs), self.contact_params.kappa_s if self.contact_params else 0.0)
        mu = np.full(len(pairs), self.contact_params.mu if self.contact_params else 0.0)
        gn = np.full(len(pairs), self.contact_params.gamma_n if self.contact_params else 0.0)
        gs = np.full(len(pairs), self.contact_params.gamma_s if self.contact_params else 0.0)
        if len(self.handoff_i):
            hp = np.stack([self.handoff_i, self.handoff_j], axis=1)
            pairs = np.concatenate([pairs, hp])
            kn = np.concatenate([kn, self.handoff_kn])
            zeros = np.zeros(len(hp))
            ks, mu, gn, gs = (np.concatenate([a, zeros]) for a in (ks, mu, gn, gs))
        if len(pairs) == 0:
            self.contacts = ContactTable.empty(d)
            self.shear_keys = np.zeros(0, dtype=np.int64)
            self.shear_vals = np.zeros((0, d))
            return F, T

        x1, x2, pen, normal = self._solve_pairs(pairs)
        keep = np.nonzero(pen)[0]
        pairs, x1, x2, normal = pairs[keep], x1[keep], x2[keep], normal[keep]
        kn, ks, mu, gn, gs = kn[keep], ks[keep], mu[keep], gn[keep], gs[keep]
        i, j = pairs[:, 0], pairs[:, 1]
        v_r = (V[i] + cross_w(W[i], x1 - X[i])) - (V[j] + cross_w(W[j], x2 - X[j]))
        v_a = v_r - np.einsum("ij,ij->i", v_r, normal)[:, None] * normal
        xi = x2 - x1

        # elastic shear: look up the stored value for continuing contacts
        keys = i.astype(np.int64) * self.n + j
        shear = np.zeros((len(keys), d))
        if len(self.shear_keys) and len(keys):
            pos = np.searchsorted(self.shear_keys, keys)
            pos = np.minimum(pos, len(self.shear_keys) - 1)
            found = self.shear_keys[pos] == keys
            shear[found] = self.shear_vals[pos[found]]
        shear = shear - dt_shear * ks[:, None] * v_a
        F_ne = kn[:, None] * xi
        shear = _cap(shear, F_ne, mu)
        order = np.argsort(keys, kind="stable")
        self.shear_keys = keys[order]
        self.shear_vals = shear[order]

        F_n = F_ne - gn[:, None] * v_r
        F_s = _cap(shear - gs[:, None] * v_a, F_n, mu)
        force = F_n + F_s
        arm = 0.5 * (x1 + x2)
        F += _bincount_vec(i, force, self.n) - _bincount_vec(j, force, self.n)
        T += _bincount_vec(i, cross_r(arm - X[i], force), self.n)
        T -= _bincount_vec(j, cross_r(arm - X[j], force), self.n)
        self.contacts = ContactTable(i, j, x1, x2, force, normal, v_a, kn, ks)
        return F, T

    # -- forces and accelerations -----------------------------------------------

    def _loads(self, X, V, Q, W, t, dt_shear):
        F, T = self._contact_forces(X, V, W, dt_shear)
        for model in self.peridynamics:
            u = X[model.members] - self.X_ref[model.members]
            F[model.members] += assemble_peridynamic_forces(model.bonds, u, model.material)
        for beams in self.beams:
            F_i, F_j, T_i, T_j = beam_bond_loads(beams, X, Q)
            F += _bincount_vec(beams.i, F_i, self.n) + _bincount_vec(beams.j, F_j, self.n)
            T += _bincount_vec(beams.i, T_i, self.n) + _bincount_vec(beams.j, T_j, self.n)
        for law, idx in self.laws:
            ctx = LoadContext(X[idx], V[idx], self.mass[idx], self.volume[idx], self.X_ref[idx], t)
            F[idx] += law.force(ctx)
        return F, T

    def _accelerations(self, F, T, Q, W):
        d = self.dim
        dyn = ~self.fixed
        a = np.zeros((self.n, d))
        a[dyn] = F[dyn] / self.mass[dyn, None]
        rot = self.rotates
        if d == 2:
            alpha = np.zeros(self.n)
            alpha[rot] = T[rot] / self.I_ref[rot] - self.angular_damping * W[rot]
            return a, alpha
        alpha = np.zeros((self.n, 3))
        if rot.any():
            R = quat_to_matrix(Q[rot])
            I = R @ self.I_ref[rot] @ np.transpose(R, (0, 2, 1))
            w = W[rot]
            Iw = np.einsum("nij,nj->ni", I, w)
            rhs = T[rot] - np.cross(w, Iw)
            alpha[rot] = np.linalg.solve(I, rhs[..., None])[..., 0] - self.angular_damping * w
        return a, alpha

    def initialize(self):
        F, T = self._loads(self.X, self.V, self.Q, self.W, self.t, 0.0)
        self._accel = self._accelerations(F, T, self.Q, self.W)

    # -- time stepping ----------------------------------------------------------

    def step(self, dt: float):
        if self._accel is None:
            self.initialize()
        a0, alpha0 = self._accel
        dyn = ~self.fixed
        rot = self.rotates
        X = self.X.copy()
        X[dyn] += dt * self.V[dyn] + 0.5 * dt * dt * a0[dyn]
        X[self.fixed] += dt * self.kin_vel[self.fixed]
        Q = self.Q.copy()
        if self.dim == 2:
            Q[rot] += dt * self.W[rot] + 0.5 * dt * dt * alpha0[rot]
        elif rot.any():
            Q[rot] = quaternion_increment(self.Q[rot], self.W[rot], alpha0[rot], dt)
        V_pred = self.V + dt * a0
        V_pred[self.fixed] = self.kin_vel[self.fixed]
        W_pred = self.W + dt * alpha0
        t_new = self.t + dt

        self.X, self.Q = X, Q
        F, T = self._loads(X, V_pred, Q, W_pred, t_new, dt)
        a1, alpha1 = self._accelerations(F, T, Q, W_pred)
        V = self.V.copy()
        V[dyn] += 0.5 * dt * (a0[dyn] + a1[dyn])
        V[self.fixed] = self.kin_vel[self.fixed]
        W = self.W.copy()
        W[rot] = W[rot] + 0.5 * dt * (alpha0[rot] + alpha1[rot])
        self.V, self.W = V, W
        self._accel = (a1, alpha1)

        for state in self.state_objects:
            rk2_step(state, self.t, dt)
        self.t = t_new
        self.steps += 1

        for model in self.peridynamics:
            u = self.X[model.members] - self.X_ref[model.members]
            broken = apply_fracture(model.bonds, u, model.material.s_c)
            if broken:
                b = np.array(broken, dtype=int)
                gi, gj = model.members[b[:, 0]], model.members[b[:, 1]]
                self.handoff_i = np.concatenate([self.handoff_i, np.minimum(gi, gj)])
                self.handoff_j = np.concatenate([self.handoff_j, np.maximum(gi, gj)])
                self.handoff_kn = np.concatenate([self.handoff_kn, np.full(len(b), model.handoff.kappa_n)])
                np.add.at(self.broken_per_body, gi, 1)
                np.add.at(self.broken_per_body, gj, 1)
                self.broken_log.append((self.t, [(self.bodies[p].id, self.bodies[q].id) for p, q in zip(gi, gj)]))

        for state in self.state_objects:
            state.post_step(self.t)
        for hook in self.step_hooks:
            hook(self)
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.V))):
            raise SimulationAborted(f"non-finite body state at t={self.t:.6g}")

    def run(self, dt: float, n_steps: int):
        for _ in range(n_steps):
            self.step(dt)
        self.sync_bodies()

    # -- diagnostics -----------------------------------------------------------

    def momentum(self):
        dyn = ~self.fixed
        return (self.mass[dyn, None] * self.V[dyn]).sum(axis=0)

    def kinetic_energy(self):
        dyn = ~self.fixed
        e = 0.5 * float(np.sum(self.mass[dyn] * np.einsum("ij,ij->i", self.V[dyn], self.V[dyn])))
        rot = self.rotates
        if self.dim == 2:
            return e + 0.5 * float(np.sum(self.I_ref[rot] * self.W[rot] ** 2))
        if rot.any():
            R = quat_to_matrix(self.Q[rot])
            w_ref = np.einsum("nji,nj->ni", R, self.W[rot])
            e += 0.5 * float(np.sum(np.einsum("ni,nij,nj->n", w_ref, self.I_ref[rot], w_ref)))
        return e

    def contact_potential(self):
        c = self.contacts
        if not len(c):
            return 0.0
        xi = c.x2 - c.x1
        return 0.5 * float(np.sum(c.kappa_n * np.einsum("ij,ij->i", xi, xi)))

    def broken_bond_count(self):
        counts = np.zeros(self.n, dtype=int)
        for model in self.peridynamics:
            counts[model.members] += model.bonds.broken_count()
        return counts


def _cap(F_s, F_n, mu):
    limit = mu * np.linalg.norm(F_n, axis=1)
    mag = np.linalg.norm(F_s, axis=1)
    scale = np.where(mag > limit, limit / np.where(mag > 0.0, mag, 1.0), 1.0)
    return F_s * scale[:, None]
