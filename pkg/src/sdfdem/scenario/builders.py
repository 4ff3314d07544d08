"""Builders for the standard experiments: hex packings, the confined RVE, the
peridynamic plate with a hole, and bonded cantilevers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateDeformedBond
from ..geometry import BoxShape, HalfSpaceShape, SphereShape
from ..peridynamics import BeamBondMaterial, LinearSolidMaterial, build_horizon, make_beam_bonds
from ..rigid_body import RigidBody, StripTraction
from ..simulation import PeridynamicModel


@dataclass
class BuiltScenario:
    bodies: list
    peridynamics: list = field(default_factory=list)
    beams: list = field(default_factory=list)
    state_objects: list = field(default_factory=list)
    tracked_id: int = None
    reference_length: float = 1.0
    info: dict = field(default_factory=dict)


# -- packings -----------------------------------------------------------------------


def hex_packing_positions(rows: int, cols: int, layers: int, radius: float, dim: int = 3):
    """Centers of a hexagonal close packing of equal spheres.

    Within a layer, neighboring centers are ``2r`` apart and alternate rows
    shift by ``r`` with row spacing ``r sqrt(3)``; stacked layers sit
    ``2 r sqrt(2/3)`` apart in the hollows of the layer below.
    """
    if min(rows, cols, layers) < 1 or not radius > 0.0:
        raise ValueError("counts must be positive and radius > 0")
    if dim == 2 and layers != 1:
        raise ValueError("a 2-D packing has exactly one layer")
    r = radius
    pts = []
    for k in range(layers):
        layer_shift = np.array([r, r / math.sqrt(3.0)]) * (k % 2)
        for j in range(rows):
            for i in range(cols):
                x = 2.0 * r * i + r * (j % 2) + layer_shift[0]
                y = math.sqrt(3.0) * r * j + layer_shift[1]
                z = 2.0 * r * math.sqrt(2.0 / 3.0) * k
                pts.append((x, y, z))
    pts = np.array(pts)
    return pts[:, :2] if dim == 2 else pts


def build_hex_packing(rows, cols, layers, radius, density=1.0, dim=3, first_id=0, origin=None, **body_kw):
    pts = hex_packing_positions(rows, cols, layers, radius, dim)
    if origin is not None:
        pts = pts + np.asarray(origin, dtype=float)
    return [
        RigidBody(first_id + k, SphereShape(radius, dim=dim), density, position=p, **body_kw)
        for k, p in enumerate(pts)
    ]


def _hex_counts(box, r):
    lx, ly, lz = box
    # odd rows and odd layers each shift by r along x
    cols = int(math.floor((lx - 4.0 * r) / (2.0 * r))) + 1
    rows = int(math.floor((ly - 2.0 * r - r / math.sqrt(3.0)) / (math.sqrt(3.0) * r))) + 1
    layers = int(math.floor((lz - 2.0 * r) / (2.0 * r * math.sqrt(2.0 / 3.0)))) + 1
    return max(rows, 0), max(cols, 0), max(layers, 0)


def hex_radius_for_count(n_target: int, box=(0.85, 0.85, 1.0)) -> float:
    """Largest sphere radius whose hex packing in ``box`` holds ``n_target``."""
    lo, hi = 1e-4 * min(box), 0.5 * min(box)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        rows, cols, layers = _hex_counts(box, mid)
        if rows * cols * layers >= n_target:
            lo = mid
        else:
            hi = mid
    return lo


def build_rve(
    n_target: int = 1500,
    box=(0.85, 0.85, 1.0),
    plate_velocity=(0.0, 0.0, -0.35),
    density: float = 1.0,
    radius: float = None,
    polydispersity: float = 0.0,
    seed: int = 0,
):
    """Hex-packed spheres confined by five fixed walls and a driven lid.

    The lid starts at the top of the box; its downward travel relative to the
    box height is the strain proxy. With ``polydispersity = p`` each radius is
    drawn uniformly from ``[(1 - p) r, r]`` on the unchanged lattice, which
    breaks the crystal symmetry without creating overlaps.
    """
    if not 0.0 <= polydispersity < 1.0:
        raise ValueError("polydispersity must lie in [0, 1)")
    r = radius if radius is not None else hex_radius_for_count(n_target, box)
    rows, cols, layers = _hex_counts(box, r)
    bodies = build_hex_packing(rows, cols, layers, r, density, origin=(r, r, r))
    if polydispersity > 0.0:
        rng = np.random.default_rng(seed)
        scale = 1.0 - polydispersity * rng.random(len(bodies))
        bodies = [
            RigidBody(b.id, SphereShape(r * f), density, position=b.position)
            for b, f in zip(bodies, scale)
        ]
    n = len(bodies)
    lx, ly, lz = box
    walls = [
        ((1.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
        ((-1.0, 0.0, 0.0), (lx, 0.0, 0.0)),
        ((0.0, 1.0, 0.0), (0.0, 0.0, 0.0)),
        ((0.0, -1.0, 0.0), (0.0, ly, 0.0)),
        ((0.0, 0.0, 1.0), (0.0, 0.0, 0.0)),
    ]
    # walls keep their material on the far side: the inward normal of the
    # wall's own region points away from the box
    for k, (n_in, at) in enumerate(walls):
        bodies.append(RigidBody(n + k, HalfSpaceShape(-np.asarray(n_in), 0.0), position=at))
    lid_id = n + len(walls)
    bodies.append(
        RigidBody(lid_id, HalfSpaceShape((0.0, 0.0, 1.0), 0.0), position=(0.0, 0.0, lz),
                  fixed=True, kinematic_velocity=plate_velocity)
    )
    return BuiltScenario(bodies, tracked_id=lid_id, reference_length=lz,
                         info={"radius": r, "spheres": n, "rows": rows, "cols": cols, "layers": layers})


# -- peridynamic plate -----------------------------------------------------------------


def plate_lattice(nx: int, ny: int, nz: int, r1: float, r2: float, size=(1.0, 1.0, 0.01)):
    """Cell centers of the plate lattice and the mask of points kept.

    Points whose center satisfies ``(x-0.5)^2/r1^2 + (y-0.5)^2/r2^2 < 1`` are
    cut out; a zero radius disables the hole.
    """
    if nx < 2 or ny < 2 or nz < 1:
        raise ValueError("need nx, ny >= 2 and nz >= 1")
    lx, ly, lz = size
    xs = (np.arange(nx) + 0.5) * lx / nx
    ys = (np.arange(ny) + 0.5) * ly / ny
    zs = (np.arange(nz) + 0.5) * lz / nz
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    if r1 > 0.0 and r2 > 0.0:
        keep = (pts[:, 0] - 0.5) ** 2 / r1**2 + (pts[:, 1] - 0.5) ** 2 / r2**2 >= 1.0
    else:
        keep = np.ones(len(pts), dtype=bool)
    return pts, keep


def build_plate_with_hole(
    nx: int = 63,
    ny: int = 63,
    nz: int = 1,
    r1: float = 0.1,
    r2: float = 0.2,
    horizon_factor: float = 3.0,
    k: float = 10.0,
    mu: float = 7.5,
    s_c: float = 0.01,
    density: float = 1.0,
    size=(1.0, 1.0, 0.01),
    traction: StripTraction = None,
    first_id: int = 0,
):
    pts, keep = plate_lattice(nx, ny, nz, r1, r2, size)
    pts = pts[keep]
    cell = np.array([size[0] / nx, size[1] / ny, size[2] / nz])
    volume = float(np.prod(cell))
    delta = horizon_factor * size[0] / nx
    material = LinearSolidMaterial(k=k, mu=mu, delta=delta, s_c=s_c, volume=volume, density=density)
    traction = traction if traction is not None else StripTraction()
    shape = BoxShape(cell)
    bodies = [
        RigidBody(first_id + m, shape, density, position=p, rotates=False, group=0, body_forces=[traction])
        for m, p in enumerate(pts)
    ]
    bonds = build_horizon(pts, volume, delta)
    if len(bonds) and np.any(bonds.length <= 0.0):
        raise DegenerateDeformedBond("zero-length bond in plate lattice")
    model = PeridynamicModel(bonds, material, np.arange(len(bodies)))
    return BuiltScenario(bodies, peridynamics=[model],
                         info={"points": len(bodies), "removed": int((~keep).sum()), "delta": delta, "traction": traction})


# -- cantilever -----------------------------------------------------------------------


def cantilever_pairs(points, mode: str = "adjacent", radius: float = None):
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if mode == "adjacent":
        return np.array([(k, k + 1) for k in range(n - 1)], dtype=int).reshape(-1, 2)
    if mode == "radius":
        if radius is None or not radius > 0.0:
            raise ValueError("radius mode needs a positive bond radius")
        d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        i, j = np.nonzero(np.triu(d <= radius, k=1))
        return np.stack([i, j], axis=1)
    raise ValueError(f"unknown bonding mode {mode!r}")


def cantilever_points(n_points: int, length: float, dim: int = 2, cross_section=None):
    """Points along the beam axis, optionally replicated over a cross-section
    grid ``(ny, nz, spacing)`` for 3-D beams."""
    xs = np.linspace(0.0, length, n_points)
    if cross_section is None:
        pts = np.zeros((n_points, dim))
        pts[:, 0] = xs
        return pts
    ny, nz, h = cross_section
    ys = (np.arange(ny) - 0.5 * (ny - 1)) * h
    zs = (np.arange(nz) - 0.5 * (nz - 1)) * h
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


def build_cantilever(
    n_points: int = 11,
    length: float = 1.0,
    material: BeamBondMaterial = None,
    total_mass: float = 1.0,
    dim: int = 2,
    mode: str = "adjacent",
    bond_radius: float = None,
    clamp: str = "left",
    point_radius: float = None,
    cross_section=None,
    body_forces=(),
):
    """Material points along a beam joined by elastic beam bonds.

    Each point carries the mass of its share of the beam length (half shares
    at the two ends), so the beam's weight is distributed as for a uniform
    beam. Clamped points are fixed in place and orientation.
    """
    if n_points < 2:
        raise ValueError("a beam needs at least two points")
    material = material if material is not None else BeamBondMaterial.circular(1000.0, 0.01)
    pts = cantilever_points(n_points, length, dim, cross_section)
    spacing = length / (n_points - 1)
    share = np.full(n_points, spacing)
    share[[0, -1]] = 0.5 * spacing
    per_station = len(pts) // n_points
    masses = np.repeat(share / length * total_mass / per_station, per_station)
    rp = point_radius if point_radius is not None else 0.5 * spacing
    shape = SphereShape(rp, dim=dim)
    unit_mass = shape.mass_properties(1.0)[0]
    station = np.repeat(np.arange(n_points), per_station)
    clamped = station == 0
    if clamp == "both":
        clamped |= station == n_points - 1
    elif clamp != "left":
        raise ValueError(f"unknown clamp {clamp!r}")
    bodies = [
        RigidBody(k, shape, masses[k] / unit_mass, position=p, fixed=bool(clamped[k]),
                  body_forces=list(body_forces), group=0)
        for k, p in enumerate(pts)
    ]
    pairs = cantilever_pairs(pts, mode, bond_radius)
    orient = np.zeros(len(pts)) if dim == 2 else np.tile([1.0, 0.0, 0.0, 0.0], (len(pts), 1))
    beams = make_beam_bonds(pts, orient, pairs, material)
    tip = [k for k in range(len(pts)) if station[k] == n_points - 1]
    return BuiltScenario(bodies, beams=[beams], tracked_id=tip[0], reference_length=length,
                         info={"pairs": pairs, "tip_ids": tip, "spacing": spacing})


def cantilever_deflection(total_mass, acceleration, length, E, I):
    """Tip deflection ``M a L^4 / (8 E I)`` of a uniformly loaded cantilever
    (``M`` per unit length; total mass for a unit-length beam)."""
    return total_mass * acceleration * length**4 / (8.0 * E * I)
