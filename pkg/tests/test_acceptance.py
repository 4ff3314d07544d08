"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) before it
asserts. The full-size compression run is opt-in: set ``SDFDEM_FULL_RVE=1``.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.stats import spearmanr

import sdfdem
from acceptance_log import record
from oracles import brute_force_contact
from test_contact import placed_pair
from test_integration import Oscillator, spring_accelerations
from test_neighbors import brute_knn, brute_radius
from test_peridynamics import LATTICES, grid, rotation_3d

from sdfdem.contact import ElasticContactParams, ViscoelasticContactParams, solve_contact_points
from sdfdem.geometry import SphereShape
from sdfdem.integration import rk2_step, verlet_step
from sdfdem.neighbors import SpatialIndex
from sdfdem.peridynamics import (
    BeamBondMaterial,
    BondSet,
    LinearSolidMaterial,
    assemble_peridynamic_forces,
    bond_pair_forces,
    build_horizon,
    dilation,
)
from sdfdem.rigid_body import Gravity, Pose, RigidBody, ViscousDamping, to_reference
from sdfdem.scenario.assemble import assemble
from sdfdem.scenario.builders import build_cantilever, cantilever_deflection
from sdfdem.scenario.cli import main
from sdfdem.scenario.config import load_config
from sdfdem.scenario.writers import read_csv
from sdfdem.simulation import Simulation

CONFIGS = Path(sdfdem.__file__).parent / "configs"


def collection_series(path):
    header, rows = read_csv(path)
    data = np.array(rows)
    return data[:, header.index("strain")], data[:, header.index("szz")]


def test_criterion_1_cantilever_deflection():
    started = time.perf_counter()
    a, section = -2.2e-7, 0.01
    tips, gaps = {}, []
    for E in (100.0, 200.0, 500.0, 1000.0):
        mat = BeamBondMaterial.circular(E, section)
        omega1 = 3.516 * math.sqrt(E * mat.I)
        built = build_cantilever(11, 1.0, mat, 1.0, dim=2,
                                 body_forces=[Gravity(np.array([0.0, a])), ViscousDamping(2 * omega1)])
        sim = Simulation(built.bodies, beams=built.beams)
        dt = 0.3 / math.sqrt(E / 100.0)
        sim.run(dt, int(12.0 / omega1 / dt))
        tips[E] = sim.body(built.tracked_id).position[1]
        exact = cantilever_deflection(1.0, a, 1.0, E, mat.I)
        gaps.append(abs(tips[E] / exact - 1.0))
    ratios = [tips[100.0] / tips[200.0], tips[500.0] / tips[1000.0]]
    elapsed = time.perf_counter() - started
    ok = max(gaps) <= 0.10 and all(abs(r / 2.0 - 1.0) <= 0.05 for r in ratios) and elapsed < 60.0
    detail = (f"max gap {max(gaps):.2%}, d(E)/d(2E) = {ratios[0]:.4f}, {ratios[1]:.4f}, {elapsed:.1f} s")
    assert record(1, "cantilever deflection", ok, detail), detail


def test_criterion_2_contact_oracle():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {2: 0.0, 3: 0.0}
    misses = {2: 0, 3: 0}
    shallower = 0
    max_warm = 0
    for dim in (2, 3):
        for _ in range(250):
            A, pa, B, pb, mean_r = placed_pair(rng, dim, rng.uniform(0.0, 0.25))
            x1, x2, _, _ = solve_contact_points(A, pa, B, pb)
            # depth of the deeper of the two one-sided penetrations
            solved = max(-B.sdf(to_reference(pb, x1)), -A.sdf(to_reference(pa, x2)), 0.0)
            _, _, f1, f2 = brute_force_contact(A, pa, B, pb, n=4096)
            sampled = max(-f1, -f2, 0.0)
            err = abs(solved - sampled) / mean_r
            worst[dim] = max(worst[dim], err)
            misses[dim] += err > 1e-3
            shallower += solved < sampled - 1e-9 * mean_r
            step = rng.normal(size=dim)
            moved = Pose(pb.position + 1e-4 * step / np.linalg.norm(step), pb.orientation)
            max_warm = max(max_warm, solve_contact_points(A, pa, B, moved, warm_start=(x1, x2))[3])
    elapsed = time.perf_counter() - started
    ok = misses[2] + misses[3] == 0 and max_warm <= 2 and elapsed < 120.0
    detail = (f"depth misses 2-D {misses[2]}/250 (worst {worst[2]:.2e}), 3-D {misses[3]}/250 "
              f"(worst {worst[3]:.2e}), solver shallower than sampling {shallower}, "
              f"warm-start iterations <= {max_warm}, {elapsed:.1f} s")
    assert record(2, "contact oracle equivalence", ok, detail), detail


def test_criterion_3_conservation():
    def two_spheres(params):
        a = RigidBody(0, SphereShape(0.5), position=[0.0, 0.0, 0.0], velocity=[1.0, 0.0, 0.0])
        b = RigidBody(1, SphereShape(0.5), position=[1.5, 0.1, 0.0], velocity=[-1.0, 0.0, 0.0])
        return Simulation([a, b], params)

    elastic = two_spheres(ElasticContactParams(kappa_n=1e4))
    m = elastic.mass[0]
    dt = 0.01 * math.sqrt(m / 1e4)
    p0, e0 = elastic.momentum(), elastic.kinetic_energy()
    p_scale = 2 * m * 1.0
    energy_err = 0.0
    touched = False
    for _ in range(int(1.0 / dt)):
        elastic.step(dt)
        touched |= len(elastic.contacts) > 0
        energy_err = max(energy_err, abs(elastic.kinetic_energy() + elastic.contact_potential() - e0) / e0)
    momentum_err = np.linalg.norm(elastic.momentum() - p0) / p_scale

    visco = two_spheres(ViscoelasticContactParams(kappa_n=1e4, gamma_n=5.0))
    ke0 = visco.kinetic_energy()
    visco.run(dt, int(1.0 / dt))
    dissipates = len(visco.contacts) == 0 and visco.kinetic_energy() < ke0

    rng = np.random.default_rng(3)
    pts = grid(5, 5, 4, h=0.1) + rng.uniform(-0.01, 0.01, (100, 3))
    bonds = build_horizon(pts, 1e-3, 0.25)
    mat = LinearSolidMaterial(k=3.0, mu=1.0, delta=0.25, volume=1e-3)
    u = rng.normal(scale=0.01, size=pts.shape)
    # the force applied to the two ends of every bond, one live bond at a time
    applied_exact = True
    for b in range(0, len(bonds), 37):
        bonds.broken[:] = True
        bonds.broken[b] = False
        F = assemble_peridynamic_forces(bonds, u, mat)
        applied_exact &= bool(np.array_equal(F[bonds.i[b]], -F[bonds.j[b]]))
    bonds.broken[:] = False
    eta = bond_pair_forces(bonds, u, mat)
    eta_flipped = bond_pair_forces(BondSet(pts, 1e-3, 0.25, bonds.j, bonds.i), u, mat)
    flip_err = np.abs(eta + eta_flipped).max() / np.abs(eta).max()
    F = assemble_peridynamic_forces(bonds, u, mat)
    sum_err = np.linalg.norm(F.sum(axis=0)) / np.abs(F).max()

    ok = (touched and momentum_err <= 1e-12 and energy_err < 0.01 and dissipates and applied_exact
          and flip_err <= 1e-14 and sum_err <= 1e-12)
    detail = (f"momentum {momentum_err:.1e}, energy {energy_err:.2%}, viscoelastic KE "
              f"{visco.kinetic_energy():.4g} < {ke0:.4g}, applied pair forces exact {applied_exact}, "
              f"flipped bonds {flip_err:.1e}, force sum {sum_err:.1e}")
    assert record(3, "conservation", ok, detail), detail


def test_criterion_4_integrator_order():
    verlet_errors, rk2_errors = [], []
    for dt in (0.1, 0.05):
        body = RigidBody(0, SphereShape(0.1), position=[1.0, 0.0, 0.0])
        accel = spring_accelerations(1.0)
        for _ in range(int(round(3.0 / dt))):
            verlet_step(body, dt, accel)
        verlet_errors.append(abs(body.position[0] - math.cos(3.0)))
        s = Oscillator()
        for k in range(int(round(3.0 / dt))):
            rk2_step(s, k * dt, dt)
        rk2_errors.append(abs(s.state[0] - math.cos(3.0)))
    rv, rr = verlet_errors[0] / verlet_errors[1], rk2_errors[0] / rk2_errors[1]
    ok = rv >= 3.6 and rr >= 3.6
    detail = f"error ratio verlet {rv:.3f}, rk2 {rr:.3f}"
    assert record(4, "integrator order", ok, detail), detail


def compression_checks(strain, szz):
    first = int(np.argmax(szz != 0.0))
    early = szz[first:][strain[first:] <= 0.1]
    oscillatory = bool(np.any(np.diff(early) > 0.0))
    late = strain > 0.1
    rho = spearmanr(strain[late], szz[late]).correlation
    return first, oscillatory, rho


def test_criterion_5_uniaxial_compression(tmp_path):
    started = time.perf_counter()
    code = main(["--config", str(CONFIGS / "rve_compression.toml"), "--out", str(tmp_path)])
    elapsed = time.perf_counter() - started
    strain, szz = collection_series(tmp_path / "collection.csv")
    first, oscillatory, rho = compression_checks(strain, szz)
    ok = code == 0 and oscillatory and rho <= -0.95 and elapsed < 600.0
    detail = (f"first contact at strain {strain[first]:.3f}, non-monotone before 0.1: {oscillatory}, "
              f"Spearman for strain > 0.1: {rho:.3f}, end stress {szz[-1]:.2f} at strain {strain[-1]:.4f}, "
              f"{elapsed:.0f} s")
    assert record(5, "uniaxial compression (scaled)", ok, detail), detail


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("SDFDEM_FULL_RVE") != "1", reason="set SDFDEM_FULL_RVE=1 for the full run")
def test_criterion_5_full_size_compression(tmp_path):
    code = main(["--config", str(CONFIGS / "rve_compression_full.toml"), "--out", str(tmp_path)])
    strain, szz = collection_series(tmp_path / "collection.csv")
    _, oscillatory, rho = compression_checks(strain, szz)
    ok = code == 0 and strain[-1] >= 0.3465 - 1e-9 and -48.0 <= szz[-1] <= -32.0 and rho <= -0.95
    detail = f"end stress {szz[-1]:.2f} at strain {strain[-1]:.4f}, Spearman {rho:.3f}"
    assert record(5, "uniaxial compression (full size)", ok, detail), detail


def bond_components(bonds):
    keep = ~bonds.broken
    graph = coo_matrix((np.ones(keep.sum()), (bonds.i[keep], bonds.j[keep])), shape=(bonds.n, bonds.n))
    return connected_components(graph, directed=False)


def test_criterion_6_plate_with_hole():
    started = time.perf_counter()
    exp = assemble(load_config(CONFIGS / "plate_with_hole.toml"))
    sim = exp.simulation
    model = sim.peridynamics[0]
    bonds = model.bonds
    sim.initialize()
    n_steps = exp.plan.n_steps
    gaps = []
    for k in range(n_steps):
        sim.step(exp.plan.dt)
        if k >= n_steps - 201 and (n_steps - 1 - k) % 100 == 0:
            n_comp, label = bond_components(bonds)
            big = np.argsort(np.bincount(label))[::-1][:2]
            X = sim.X[model.members]
            gaps.append(np.linalg.norm(X[label == big[1]].mean(0) - X[label == big[0]].mean(0))
                        if n_comp > 1 else 0.0)
    elapsed = time.perf_counter() - started

    _, first_pairs = sim.broken_log[0]
    mid = np.array([0.5 * (sim.X_ref[sim.index_of[a]] + sim.X_ref[sim.index_of[b]]) for a, b in first_pairs])
    angle = np.degrees(np.arctan2(mid[:, 1] - 0.5, mid[:, 0] - 0.5))
    in_sectors = bool(np.all(np.abs(np.abs(angle) - 90.0) <= 30.0))

    n_comp, label = bond_components(bonds)
    sizes = np.sort(np.bincount(label))[::-1]
    two_pieces = n_comp >= 2 and sizes[1] >= 0.25 * bonds.n
    separating = len(gaps) == 3 and gaps[0] < gaps[1] < gaps[2]
    handoff_contacts = len(sim.handoff_i) > 0 and len(sim.contacts) > 0 and np.abs(sim.contacts.force).max() > 0
    ok = in_sectors and two_pieces and separating and handoff_contacts and elapsed < 900.0
    detail = (f"first break angles {np.round(angle, 1).tolist()}, largest pieces {sizes[:2].tolist()}, "
              f"centroid gaps {np.round(gaps, 4).tolist()}, {len(sim.contacts)} contacts between "
              f"broken pairs, {elapsed:.0f} s")
    assert record(6, "plate with hole fracture", ok, detail), detail


def test_criterion_7_dilation_identity():
    eps = 0.01
    worst_theta = 0.0
    worst_force = 0.0
    for name, make in sorted(LATTICES.items()):
        pts = make()
        bonds = build_horizon(pts, 1e-3, 0.25)
        worst_theta = max(worst_theta, max(abs(dilation(k, bonds, eps * pts) - 3 * eps) for k in range(len(pts))))
        mat = LinearSolidMaterial(k=5.0, mu=3.0, delta=0.25, volume=1e-3)
        if pts.shape[1] == 2:
            c, s = math.cos(0.9), math.sin(0.9)
            R = np.array([[c, -s], [s, c]])
        else:
            R = rotation_3d([1.0, 2.0, 3.0], 0.9)
        F = assemble_peridynamic_forces(bonds, pts @ R.T - pts, mat)
        worst_force = max(worst_force, np.abs(F).max() / (mat.k * mat.volume))
    ok = worst_theta <= 1e-9 and worst_force <= 1e-9
    detail = f"worst |theta - 3 eps| {worst_theta:.1e}, worst rotation force / kV {worst_force:.1e}"
    assert record(7, "dilation identity", ok, detail), detail


def test_criterion_8_neighbor_search():
    rng = np.random.default_rng(8)
    mismatches = 0
    queries = 0
    for config in range(100):
        dim = 2 + config % 2
        points = rng.uniform(0.0, 1.0, (1000, dim))
        ids = np.arange(1000)
        index = SpatialIndex(points, ids)
        for _ in range(5):
            center = rng.uniform(-0.1, 1.1, dim)
            h = float(rng.uniform(0.02, 0.3))
            k = int(rng.integers(1, 40))
            mismatches += index.radius_query(center, h) != brute_radius(points, ids, center, h)
            mismatches += index.knn_query(center, k) != brute_knn(points, ids, center, k)
            member = int(rng.integers(1000))
            mismatches += index.radius_query(points[member], h, exclude=member) != brute_radius(
                points, ids, points[member], h, exclude=member)
            mismatches += index.knn_query(points[member], k, exclude=member) != brute_knn(
                points, ids, points[member], k, exclude=member)
            queries += 4
    ok = mismatches == 0
    detail = f"{mismatches} mismatches in {queries} queries over 100 configurations of 1000 points"
    assert record(8, "neighbor search equivalence", ok, detail), detail


def test_criterion_9_determinism(tmp_path):
    config = str(CONFIGS / "polygons_2d.toml")
    outputs = []
    for name, threads in (("a", 1), ("b", 1), ("c", 4)):
        out = tmp_path / name
        code = main(["--config", config, "--out", str(out), "--t-end", "0.5", "--threads", str(threads)])
        assert code == 0
        outputs.append((out / "timeseries.csv").read_bytes())
    same_runs = outputs[0] == outputs[1]
    same_threads = outputs[0] == outputs[2]
    ok = same_runs and same_threads and len(outputs[0]) > 0
    detail = (f"repeat run identical: {same_runs}, threads 1 vs 4 identical: {same_threads}, "
              f"{len(outputs[0])} bytes")
    assert record(9, "determinism", ok, detail), detail
