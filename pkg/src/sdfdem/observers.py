"""Quantities of interest extracted during a run.

Collection-level quantities use the contact table of the most recent force
evaluation. The averaging volume is the smallest axis-aligned box containing
every finite particle's bounding box (center +/- bounding radius).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCollection, UnknownBodyId


@dataclass
class ObserverRecord:
    t: float
    kind: str
    body_id: int = None
    data: dict = field(default_factory=dict)


def particle_snapshot(body, t: float) -> ObserverRecord:
    """Copy of a body's kinematic state at time ``t``."""
    if body is None:
        raise UnknownBodyId("no such body")
    q = np.asarray(body.orientation, dtype=float)
    return ObserverRecord(
        t,
        "particle",
        body.id,
        {
            "position": np.array(body.position, dtype=float),
            "velocity": np.array(body.velocity, dtype=float),
            "orientation": q.copy() if q.ndim else float(q),
            "angular_velocity": np.array(body.angular_velocity, dtype=float)
            if np.ndim(body.angular_velocity)
            else float(body.angular_velocity),
        },
    )


def bounding_volume(centers, radii) -> float:
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if len(centers) == 0:
        raise EmptyCollection("no finite particles to bound")
    lo = (centers - radii[:, None]).min(axis=0)
    hi = (centers + radii[:, None]).max(axis=0)
    return float(np.prod(hi - lo))


def cauchy_stress_from_pairs(centers, radii, i, j, forces):
    """``sigma = (1/V) sum over ordered pairs d_ij (x) F_ij``.

    Each unordered contact ``(i, j)`` with force ``F`` on ``i`` contributes both
    orderings: ``d_ij = c_j - c_i`` with ``F_ij = F`` and ``d_ji = -d_ij`` with
    ``F_ji = -F``.
    """
    centers = np.asarray(centers, dtype=float)
    V = bounding_volume(centers, radii)
    d = centers.shape[1]
    if len(i) == 0:
        return np.zeros((d, d))
    branch = centers[np.asarray(j)] - centers[np.asarray(i)]
    return 2.0 * np.einsum("ka,kb->ab", branch, np.asarray(forces, dtype=float)) / V


def _finite_contacts(collection):
    c = collection.contacts
    fin = collection.finite
    keep = fin[c.i] & fin[c.j]
    return c, keep


def homogenized_cauchy_stress(collection) -> np.ndarray:
    """Average Cauchy stress of the finite particles of ``collection``.

    Only particle-particle contacts contribute; wall contacts have no branch
    vector.
    """
    fin = np.nonzero(collection.finite)[0]
    if len(fin) == 0:
        raise EmptyCollection("collection has no finite particles")
    c, keep = _finite_contacts(collection)
    return cauchy_stress_from_pairs(
        collection.X, np.where(collection.finite, collection.radius, 0.0), c.i[keep], c.j[keep], c.force[keep]
    ) if keep.any() else np.zeros((collection.dim, collection.dim))


def collection_volume(collection) -> float:
    fin = np.nonzero(collection.finite)[0]
    if len(fin) == 0:
        raise EmptyCollection("collection has no finite particles")
    return bounding_volume(collection.X[fin], collection.radius[fin])


def tangent_operator_from_contacts(branch, normals, tangents, k_n, k_t, volume):
    """``D = (1/V) sum (k_n n d n d + k_t t d t d)`` over contacts."""
    branch = np.asarray(branch, dtype=float)
    d = branch.shape[1] if branch.ndim == 2 else 3
    D = np.zeros((d, d, d, d))
    if len(branch) == 0:
        return D
    k_n = np.broadcast_to(np.asarray(k_n, dtype=float), (len(branch),))
    k_t = np.broadcast_to(np.asarray(k_t, dtype=float), (len(branch),))
    D += np.einsum("c,ci,cj,ck,cl->ijkl", k_n, normals, branch, normals, branch)
    D += np.einsum("c,ci,cj,ck,cl->ijkl", k_t, tangents, branch, tangents, branch)
    return D / volume


def tangent_operator(collection) -> np.ndarray:
    """Contact stiffness tensor of the finite particles of ``collection``.

    The tangential direction is that of the sliding velocity; a sticking
    contact (zero sliding velocity) contributes no tangential term.
    """
    V = collection_volume(collection)
    c, keep = _finite_contacts(collection)
    d = collection.dim
    if not keep.any():
        return np.zeros((d, d, d, d))
    branch = collection.X[c.j[keep]] - collection.X[c.i[keep]]
    va = c.v_a[keep]
    mag = np.linalg.norm(va, axis=1)
    tangents = np.where(mag[:, None] > 0.0, va / np.where(mag > 0.0, mag, 1.0)[:, None], 0.0)
    return tangent_operator_from_contacts(branch, c.normal[keep], tangents, c.kappa_n[keep], c.kappa_s[keep], V)


def strain_proxy(position, reference_position, reference_length: float, axis: int = -1) -> float:
    """Engineering strain ``(z_ref - z) / L_ref`` from a tracked boundary."""
    return float((np.asarray(reference_position)[axis] - np.asarray(position)[axis]) / reference_length)


# -- observers fired by the run loop ------------------------------------------------


class ParticleTracker:
    """Snapshots of selected bodies (all bodies when ``ids`` is None)."""

    def __init__(self, ids=None):
        self.ids = None if ids is None else list(ids)

    def __call__(self, sim, t):
        sim.sync_bodies()
        ids = [b.id for b in sim.bodies] if self.ids is None else self.ids
        out = []
        for body_id in sorted(ids):
            if body_id not in sim.index_of:
                raise UnknownBodyId(body_id)
            k = sim.index_of[body_id]
            rec = particle_snapshot(sim.bodies[k], t)
            rec.data["broken_bonds"] = int(sim.broken_per_body[k])
            out.append(rec)
        return out


class CollectionTracker:
    """Homogenized stress, bounding volume and the strain of a tracked plate.

    With ``average=True`` the reported stress is the mean over every step
    since the previous output, which filters contact-scale rattling that
    would otherwise alias into the sampled series. The first output is the
    instantaneous value.
    """

    def __init__(self, tracked_id=None, reference_length: float = 1.0, axis: int = -1, with_tangent: bool = False,
                 average: bool = False):
        self.tracked_id = tracked_id
        self.reference_length = reference_length
        self.axis = axis
        self.with_tangent = with_tangent
        self.average = average
        self._reference = None
        self._attached = None
        self._sum = None
        self._count = 0

    def _accumulate(self, sim):
        s = homogenized_cauchy_stress(sim)
        self._sum = s if self._sum is None else self._sum + s
        self._count += 1

    def _stress(self, sim):
        if not self.average:
            return homogenized_cauchy_stress(sim)
        if self._attached is not sim:
            sim.step_hooks.append(self._accumulate)
            self._attached = sim
        if self._count == 0:
            return homogenized_cauchy_stress(sim)
        out = self._sum / self._count
        self._sum, self._count = None, 0
        return out

    def __call__(self, sim, t):
        if self.tracked_id is not None:
            if self.tracked_id not in sim.index_of:
                raise UnknownBodyId(self.tracked_id)
            pos = sim.X[sim.index_of[self.tracked_id]]
            if self._reference is None:
                self._reference = pos.copy()
            strain = strain_proxy(pos, self._reference, self.reference_length, self.axis)
        else:
            strain = 0.0
        data = {
            "stress": self._stress(sim),
            "volume": collection_volume(sim),
            "strain": strain,
            "contacts": int(len(sim.contacts)),
        }
        if self.with_tangent:
            data["tangent"] = tangent_operator(sim)
        return [ObserverRecord(t, "collection", None, data)]
