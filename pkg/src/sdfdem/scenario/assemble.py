"""Turn a validated :class:`ScenarioConfig` into a ready-to-run simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..contact import ElasticContactParams, ViscoelasticContactParams
from ..errors import SchemaError
from ..geometry import (
    BoxShape,
    ConvexPolytopeShape,
    HalfSpaceShape,
    SphereShape,
    extrude_polygon,
    regular_polygon,
)
from ..integration import ScalarRateState, StepPlan, constant_rate
from ..observers import CollectionTracker, ParticleTracker
from ..peridynamics import BeamBondMaterial
from ..rigid_body import Gravity, RigidBody, StripTraction, ViscousDamping
from ..simulation import Simulation
from .builders import (
    BuiltScenario,
    build_cantilever,
    build_hex_packing,
    build_plate_with_hole,
    build_rve,
)


@dataclass
class Experiment:
    simulation: Simulation
    plan: StepPlan
    observers: list
    scenario: BuiltScenario
    output: dict = field(default_factory=dict)


def contact_params(spec):
    law = spec.get("law", "none")
    if law == "none":
        return None
    if law == "elastic":
        return ElasticContactParams(spec["kappa_n"], spec["kappa_s"], spec["mu"])
    return ViscoelasticContactParams(spec["kappa_n"], spec["kappa_s"], spec["mu"], spec["gamma_n"], spec["gamma_s"])


def _polygon_vertices(spec):
    if spec.get("vertices") is not None:
        return np.asarray(spec["vertices"], dtype=float)
    return regular_polygon(spec["sides"], spec["circumradius"], spec["phase"]).vertices


def make_shape(spec, dim, rng):
    """Shape for one body entry; prism heights drawn from ``heights`` use ``rng``."""
    kind = spec["shape"]
    if kind == "sphere":
        return SphereShape(spec["radius"], dim=dim)
    if kind == "box":
        return BoxShape(spec["extents"])
    if kind == "halfspace":
        return HalfSpaceShape(spec["normal"], spec["offset"])
    if kind == "polygon":
        return ConvexPolytopeShape(_polygon_vertices(spec))
    if kind == "prism":
        heights = spec.get("heights")
        height = float(heights[rng.integers(len(heights))]) if heights else spec["height"]
        return extrude_polygon(_polygon_vertices(spec), height)
    if kind == "polytope":
        return ConvexPolytopeShape.from_points(np.asarray(spec["vertices"], dtype=float))
    raise SchemaError(f"unknown shape {kind!r}")


def _orientation(spec, dim):
    q = spec.get("orientation")
    if q is None:
        return None
    return float(q[0]) if dim == 2 else np.asarray(q, dtype=float)


def _spin(spec, dim):
    w = spec.get("angular_velocity")
    if w is None:
        return None
    return float(w[0]) if dim == 2 else np.asarray(w, dtype=float)


def _next_id(bodies):
    return max((b.id for b in bodies), default=-1) + 1


def build_scenario(cfg, rng=None) -> BuiltScenario:
    """Bodies, bond sets and state objects described by ``cfg``."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    dim = cfg.dimension
    bodies = []
    for k, spec in enumerate(cfg.bodies):
        bodies.append(
            RigidBody(
                spec["id"] if spec["id"] is not None else k,
                make_shape(spec, dim, rng),
                spec["density"],
                position=spec["position"],
                velocity=spec["velocity"],
                orientation=_orientation(spec, dim),
                angular_velocity=_spin(spec, dim),
                fixed=spec["fixed"],
                kinematic_velocity=spec["kinematic_velocity"],
                group=spec["group"],
            )
        )
    built = BuiltScenario(bodies)

    if cfg.packing is not None:
        p = cfg.packing
        first = max(p["first_id"], _next_id(bodies))
        bodies += build_hex_packing(p["rows"], p["cols"], p["layers"], p["radius"], p["density"],
                                    dim=dim, first_id=first, origin=p["origin"])

    if cfg.rve is not None:
        r = cfg.rve
        rve = build_rve(r["spheres"], r["box"], r["plate_velocity"], r["density"], r["radius"],
                        r["polydispersity"], cfg.seed)
        offset = _next_id(bodies)
        for b in rve.bodies:
            b.id += offset
        bodies += rve.bodies
        built.tracked_id = rve.tracked_id + offset
        built.reference_length = rve.reference_length
        built.info.update(rve.info)

    if cfg.peridynamics is not None:
        p = cfg.peridynamics
        nx, ny, nz = (list(p["lattice"]) + [1])[:3]
        traction = StripTraction(**p["traction"]) if p["traction"] else StripTraction()
        hole = (list(p["hole"]) + [0.0, 0.0])[:2]
        plate = build_plate_with_hole(nx, ny, nz, hole[0], hole[1], p["horizon_factor"], p["k"], p["mu"], p["s_c"],
                                      p["density"], tuple(p["size"]), traction, first_id=_next_id(bodies))
        model = plate.peridynamics[0]
        model.members = model.members + len(bodies)
        if p["handoff_kappa_n"] is not None:
            model.handoff = ElasticContactParams(kappa_n=p["handoff_kappa_n"])
        bodies += plate.bodies
        built.peridynamics.append(model)
        built.info.update(plate.info)

    if cfg.beam is not None:
        b = cfg.beam
        if b["I"] is not None:
            A = b["A"] if b["A"] is not None else math.sqrt(4.0 * math.pi * b["I"])
            material = BeamBondMaterial(E=b["E"], I=b["I"], A=A, r=b["section_radius"] or math.sqrt(A / math.pi))
        else:
            material = BeamBondMaterial.circular(b["E"], b["section_radius"])
        laws = []
        if b["acceleration"] is not None:
            laws.append(Gravity(np.asarray(b["acceleration"], dtype=float)))
        if b["damping"] > 0.0:
            laws.append(ViscousDamping(b["damping"]))
        cross = b["cross_section"]
        if cross is not None:
            cross = (int(cross[0]), int(cross[1]), float(cross[2]))
        beam = build_cantilever(b["n_points"], b["length"], material, b["total_mass"], dim, b["mode"],
                                b["bond_radius"], b["clamp"], b["point_radius"], cross, laws)
        offset = _next_id(bodies)
        start = len(bodies)
        for body in beam.bodies:
            body.id += offset
        bonds = beam.beams[0]
        bonds.i = bonds.i + start
        bonds.j = bonds.j + start
        bodies += beam.bodies
        built.beams.append(bonds)
        built.tracked_id = beam.tracked_id + offset
        built.reference_length = beam.reference_length
        built.info.update(beam.info)

    shared = []
    if cfg.gravity is not None and any(cfg.gravity):
        shared.append(Gravity(np.asarray(cfg.gravity, dtype=float)))
    if cfg.damping > 0.0:
        shared.append(ViscousDamping(cfg.damping))
    for body in bodies:
        if body.shape.is_finite and not body.fixed:
            body.body_forces.extend(shared)
    built.bodies = bodies
    return built


def _attach_growth(sim, cfg):
    for spec in cfg.growth:
        body = sim.body(spec["body"])
        if not isinstance(body.shape, SphereShape):
            raise SchemaError(f"growth.body: body {spec['body']} is not a sphere")
        dim = body.dim
        body_id = body.id

        def on_change(R, body_id=body_id, dim=dim):
            sim.set_shape(body_id, SphereShape(max(R, 1e-12), dim=dim))

        sim.state_objects.append(
            ScalarRateState(body.shape.radius, constant_rate, {"rate": spec["rate"]}, on_change)
        )


def make_observers(cfg, built):
    observers = []
    for spec in cfg.observers or [{"kind": "particles", "ids": None}]:
        if spec["kind"] == "particles":
            observers.append(ParticleTracker(spec.get("ids")))
        else:
            tracked = spec.get("tracked_id")
            if tracked is None and spec.get("tracked") is not None:
                tracked = built.tracked_id
            length = spec.get("reference_length") or built.reference_length
            observers.append(CollectionTracker(tracked, length, spec.get("axis", -1),
                                                spec.get("tangent", False), spec.get("average", False)))
    return observers


def preflight(sim, tolerance=1e-9):
    """Reject initial overlaps deeper than ``tolerance`` times the particle size.

    Touching neighbors of a packing may overlap by round-off; anything deeper
    means the configuration is inconsistent.
    """
    pairs = sim._candidate_pairs()
    if len(pairs) == 0:
        return
    x1, x2, pen, _ = sim._solve_pairs(pairs)
    depth = np.linalg.norm(x2 - x1, axis=1)
    scale = np.maximum(sim.radius[pairs[:, 0]], sim.radius[pairs[:, 1]])
    bad = np.nonzero(pen & (depth > tolerance * scale))[0]
    if len(bad):
        a, b = pairs[bad[0]]
        raise SchemaError(
            f"bodies {sim.bodies[a].id} and {sim.bodies[b].id} overlap by {depth[bad[0]]:.3g} at t=0"
            f" ({len(bad)} overlapping pair(s))"
        )


def assemble(cfg, threads=None) -> Experiment:
    """Build the scenario, engine, step plan and observers for ``cfg``."""
    built = build_scenario(cfg)
    sim = Simulation(
        built.bodies,
        contact_params(cfg.contact),
        peridynamics=built.peridynamics,
        beams=built.beams,
        state_objects=built.state_objects,
        threads=threads if threads is not None else cfg.threads,
        skin_fraction=cfg.skin_fraction,
        angular_damping=cfg.angular_damping,
    )
    _attach_growth(sim, cfg)
    if sim.contact_params is not None:
        preflight(sim)
    plan = StepPlan(cfg.dt, cfg.t_end, max(cfg.output_interval, cfg.dt))
    return Experiment(sim, plan, make_observers(cfg, built), built, dict(cfg.output))
