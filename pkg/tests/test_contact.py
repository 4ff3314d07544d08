import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_contact, random_polytope, random_pose, touching_offset
from sdfdem.contact import (
    ElasticContactParams,
    ShearForceState,
    ViscoelasticContactParams,
    contact_force,
    contact_kinematics,
    coulomb_cap,
    detect_contact,
    elastic_normal_force,
    shear_rhs,
    solve_contact_points,
    viscoelastic_forces,
)
from sdfdem.errors import DegenerateBond
from sdfdem.geometry import BoxShape, ConvexPolytopeShape, HalfSpaceShape, SphereShape, extrude_polygon, regular_polygon
from sdfdem.rigid_body import Pose, RigidBody, to_reference


def sphere(body_id, center, radius=1.0, **kw):
    return RigidBody(body_id, SphereShape(radius, dim=len(center)), position=center, **kw)


def placed_pair(rng, dim, push):
    """Two random polytopes touching along a random direction, then pushed
    together by ``push`` times their mean bounding radius."""
    A, B = random_polytope(rng, dim, rng.uniform(0.5, 1.5)), random_polytope(rng, dim, rng.uniform(0.5, 1.5))
    u = rng.normal(size=dim)
    u /= np.linalg.norm(u)
    pa, pb = random_pose(rng, dim, np.zeros(dim)), random_pose(rng, dim, np.zeros(dim))
    s = touching_offset(A, pa, B, pb, u)
    mean_r = 0.5 * (A.bounding_radius + B.bounding_radius)
    return A, pa, B, Pose(u * (s - push * mean_r), pb.orientation), mean_r


class TestDetectContactExamples:
    def test_overlapping_spheres(self):
        s = detect_contact(sphere(0, [0.0, 0.0, 0.0]), sphere(1, [1.5, 0.0, 0.0]))
        assert np.allclose(s.x1, [1.0, 0.0, 0.0])
        assert np.allclose(s.x2, [0.5, 0.0, 0.0])
        assert s.penetrating
        assert s.depth == pytest.approx(0.5)

    def test_separated_spheres(self):
        s = detect_contact(sphere(0, [0.0, 0.0, 0.0]), sphere(1, [3.0, 0.0, 0.0]))
        assert np.allclose(s.x1, [1.0, 0.0, 0.0])
        assert np.allclose(s.x2, [2.0, 0.0, 0.0])
        assert not s.penetrating
        assert s.depth == 0.0

    def test_sphere_on_wall(self):
        ball = sphere(0, [0.0, 0.0, 0.9])
        wall = RigidBody(1, HalfSpaceShape([0.0, 0.0, -1.0], 0.0))
        s = detect_contact(ball, wall)
        assert s.penetrating
        assert np.allclose(s.x1, [0.0, 0.0, -0.1])
        assert np.allclose(s.x2, [0.0, 0.0, 0.0])

    def test_box_on_wall(self):
        box = RigidBody(0, BoxShape([1.0, 1.0, 1.0]), position=[0.0, 0.0, 0.45])
        wall = RigidBody(1, HalfSpaceShape([0.0, 0.0, -1.0], 0.0))
        s = detect_contact(box, wall)
        assert s.penetrating
        assert s.depth == pytest.approx(0.05, abs=1e-8)
        assert s.x1[2] == pytest.approx(-0.05, abs=1e-8)

    def test_rotated_boxes(self):
        a = RigidBody(0, BoxShape([2.0, 2.0]), position=[0.0, 0.0])
        b = RigidBody(1, BoxShape([2.0, 2.0]), position=[2.2, 0.0], orientation=math.pi / 4)
        s = detect_contact(a, b)
        # the corner of b reaches x = 2.2 - sqrt(2)
        assert s.penetrating
        assert s.x2[0] == pytest.approx(2.2 - math.sqrt(2.0), abs=1e-8)
        assert s.depth == pytest.approx(1.0 - (2.2 - math.sqrt(2.0)), abs=1e-8)

    def test_points_lie_on_boundaries(self):
        rng = np.random.default_rng(0)
        for dim in (2, 3):
            for _ in range(10):
                A, pa, B, pb, _ = placed_pair(rng, dim, 0.1)
                x1, x2, _, _ = solve_contact_points(A, pa, B, pb)
                tol = 1e-8 * min(A.bounding_radius, B.bounding_radius)
                assert abs(A.sdf(to_reference(pa, x1))) <= tol
                assert abs(B.sdf(to_reference(pb, x2))) <= tol

    def test_self_contact_rejected(self):
        body = sphere(0, [0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            detect_contact(body, body)


class TestDetectContactAgainstBruteForce:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_solver_never_shallower_than_sampling(self, dim):
        rng = np.random.default_rng(dim)
        for _ in range(15):
            A, pa, B, pb, _ = placed_pair(rng, dim, rng.uniform(0.0, 0.3))
            x1, x2, pen, _ = solve_contact_points(A, pa, B, pb)
            _, _, f1, f2 = brute_force_contact(A, pa, B, pb, n=1024)
            s1, s2 = B.sdf(to_reference(pb, x1)), A.sdf(to_reference(pa, x2))
            tol = 1e-9 * min(A.bounding_radius, B.bounding_radius)
            assert s1 <= f1 + tol
            assert s2 <= f2 + tol

    def test_polygon_depth_matches_sampling(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            A, pa, B, pb, mean_r = placed_pair(rng, 2, rng.uniform(0.0, 0.3))
            x1, x2, pen, _ = solve_contact_points(A, pa, B, pb)
            _, _, f1, f2 = brute_force_contact(A, pa, B, pb)
            solver = max(-B.sdf(to_reference(pb, x1)), -A.sdf(to_reference(pa, x2)), 0.0)
            brute = max(-f1, -f2, 0.0)
            assert abs(solver - brute) <= 1e-3 * mean_r

    def test_separated_distance_is_exact(self):
        a = RigidBody(0, extrude_polygon(regular_polygon(6, 0.5), 0.4))
        b = RigidBody(1, SphereShape(0.3), position=[1.2, 0.3, 0.1])
        s = detect_contact(a, b)
        assert not s.penetrating
        gap = np.linalg.norm(s.xi)
        assert gap == pytest.approx(a.sdf(s.x2), abs=1e-8)
        assert gap == pytest.approx(b.sdf(s.x1), abs=1e-8)


class TestWarmStart:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_perturbed_resolve_is_fast(self, dim):
        rng = np.random.default_rng(20 + dim)
        for _ in range(10):
            A, pa, B, pb, _ = placed_pair(rng, dim, 0.05)
            x1, x2, _, _ = solve_contact_points(A, pa, B, pb)
            shift = rng.normal(size=dim) * 1e-4
            moved = Pose(pb.position + shift, pb.orientation)
            _, _, _, iters = solve_contact_points(A, pa, B, moved, warm_start=(x1, x2))
            assert iters <= 2

    def test_sphere_box_warm_start(self):
        box = BoxShape([1.0, 1.0, 1.0])
        ball = SphereShape(0.4)
        pa, pb = Pose(np.zeros(3), np.array([1.0, 0, 0, 0])), Pose(np.array([0.85, 0.1, 0.05]), np.array([1.0, 0, 0, 0]))
        x1, x2, pen, _ = solve_contact_points(box, pa, ball, pb)
        assert pen
        moved = Pose(pb.position + 1e-4, pb.orientation)
        _, _, _, iters = solve_contact_points(box, pa, ball, moved, warm_start=(x1, x2))
        assert iters <= 2


class TestSymmetry:
    def test_mirrored_summaries(self):
        rng = np.random.default_rng(5)
        for dim in (2, 3):
            for _ in range(8):
                A, pa, B, pb, _ = placed_pair(rng, dim, 0.1)
                x1, x2, pen, _ = solve_contact_points(A, pa, B, pb)
                y1, y2, pen2, _ = solve_contact_points(B, pb, A, pa)
                assert pen == pen2
                fa = B.sdf(to_reference(pb, x1))
                fb = B.sdf(to_reference(pb, y2))
                # the deepest values agree even when the minimizer is not unique
                assert fa == pytest.approx(fb, abs=1e-7)
                assert A.sdf(to_reference(pa, x2)) == pytest.approx(A.sdf(to_reference(pa, y1)), abs=1e-7)


class TestContactKinematics:
    def test_at_rest(self):
        a, b = sphere(0, [0.0, 0.0, 0.0]), sphere(1, [1.5, 0.0, 0.0])
        v_r, v_a = contact_kinematics(a, b, [1.0, 0.0, 0.0], [0.5, 0.0, 0.0])
        assert np.allclose(v_r, 0.0) and np.allclose(v_a, 0.0)

    def test_parallel_velocity_has_no_tangential_part(self):
        a, b = sphere(0, [0.0, 0.0, 0.0], velocity=[2.0, 0.0, 0.0]), sphere(1, [1.5, 0.0, 0.0])
        v_r, v_a = contact_kinematics(a, b, [1.0, 0.0, 0.0], [0.5, 0.0, 0.0])
        assert np.allclose(v_r, [2.0, 0.0, 0.0])
        assert np.allclose(v_a, 0.0)

    def test_perpendicular_velocity_is_all_tangential(self):
        a, b = sphere(0, [0.0, 0.0, 0.0], velocity=[0.0, 1.0, 0.0]), sphere(1, [1.5, 0.0, 0.0])
        v_r, v_a = contact_kinematics(a, b, [1.0, 0.0, 0.0], [0.5, 0.0, 0.0])
        assert np.allclose(v_a, v_r)

    def test_spin_contributes(self):
        a = sphere(0, [0.0, 0.0], angular_velocity=2.0)
        b = sphere(1, [1.5, 0.0])
        v_r, v_a = contact_kinematics(a, b, [1.0, 0.0], [0.5, 0.0])
        assert np.allclose(v_r, [0.0, 2.0])
        assert np.allclose(v_a, [0.0, 2.0])

    def test_coincident_points_rejected(self):
        a, b = sphere(0, [0.0, 0.0, 0.0]), sphere(1, [2.0, 0.0, 0.0])
        with pytest.raises(DegenerateBond):
            contact_kinematics(a, b, [1.0, 0.0, 0.0], [1.0, 0.0, 0.0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.floats(0.05, 0.9))
    def test_tangential_orthogonal_to_bond(self, v, gap):
        a = sphere(0, [0.0, 0.0, 0.0], velocity=v[:3], angular_velocity=v[3:])
        b = sphere(1, [2.0 - gap, 0.3, -0.2])
        s = detect_contact(a, b)
        u = s.xi / np.linalg.norm(s.xi)
        assert abs(s.v_a @ u) <= 1e-9 * max(1.0, np.linalg.norm(s.v_r))


class TestElasticNormalForce:
    PARAMS = ElasticContactParams(kappa_n=10.0)

    def test_no_force_when_apart(self):
        s = detect_contact(sphere(0, [0.0, 0.0, 0.0]), sphere(1, [3.0, 0.0, 0.0]))
        assert np.allclose(elastic_normal_force(s, self.PARAMS), 0.0)

    def test_spec_example_and_potential_gradient(self):
        s = detect_contact(sphere(0, [0.0, 0.0, 0.0]), sphere(1, [1.5, 0.0, 0.0]))
        F = elastic_normal_force(s, self.PARAMS)
        assert np.allclose(F, [-5.0, 0.0, 0.0])

        # force on the home body is minus the gradient of 0.5 k depth^2
        def energy(x):
            depth = max(2.0 - np.linalg.norm(np.array([1.5, 0.0, 0.0]) - x), 0.0)
            return 0.5 * 10.0 * depth**2

        h = 1e-6
        grad = np.array([(energy(h * e) - energy(-h * e)) / (2 * h) for e in np.eye(3)])
        assert np.allclose(F, -grad, atol=1e-6)

    def test_linear_in_depth(self):
        s1 = detect_contact(sphere(0, [0.0, 0.0, 0.0]), sphere(1, [1.8, 0.0, 0.0]))
        s2 = detect_contact(sphere(0, [0.0, 0.0, 0.0]), sphere(1, [1.6, 0.0, 0.0]))
        assert np.allclose(elastic_normal_force(s2, self.PARAMS), 2.0 * elastic_normal_force(s1, self.PARAMS))


class TestShearAndFriction:
    def test_shear_rhs(self):
        s = detect_contact(sphere(0, [0.0, 0.0, 0.0]), sphere(1, [1.5, 0.0, 0.0], velocity=[0.0, -1.0, 0.0]))
        p = ElasticContactParams(kappa_n=10.0, kappa_s=2.0)
        assert np.allclose(s.v_a, [0.0, 1.0, 0.0])
        assert np.allclose(shear_rhs(s, p), [0.0, -2.0, 0.0])

    def test_shear_rhs_zero_when_apart_and_state_reset(self):
        p = ElasticContactParams(kappa_n=10.0, kappa_s=2.0)
        s = detect_contact(sphere(0, [0.0, 0.0, 0.0]), sphere(1, [3.0, 0.0, 0.0], velocity=[0.0, 1.0, 0.0]))
        assert np.allclose(shear_rhs(s, p), 0.0)
        state = ShearForceState((0, 1), 3, p, state=np.array([1.0, 2.0, 3.0]))
        state.update(s)
        assert np.allclose(state.state, 0.0)

    def test_shear_rhs_zero_without_sliding(self):
        s = detect_contact(sphere(0, [0.0, 0.0, 0.0]), sphere(1, [1.5, 0.0, 0.0]))
        assert np.allclose(shear_rhs(s, ElasticContactParams(10.0, 2.0)), 0.0)

    def test_cap_below_limit(self):
        assert np.allclose(coulomb_cap([2.0, 0.0, 0.0], [0.0, 10.0, 0.0], 0.3), [2.0, 0.0, 0.0])

    def test_cap_above_limit(self):
        out = coulomb_cap([6.0, 0.0, 0.0], [0.0, 10.0, 0.0], 0.3)
        assert np.allclose(out, [3.0, 0.0, 0.0])
        assert np.linalg.norm(out) == pytest.approx(0.3 * 10.0)

    def test_frictionless(self):
        assert np.allclose(coulomb_cap([6.0, 1.0, 0.0], [0.0, 10.0, 0.0], 0.0), 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
           st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), st.floats(0.0, 2.0))
    def test_cap_bound_and_direction(self, F_s, F_n, mu):
        out = coulomb_cap(F_s, F_n, mu)
        assert np.linalg.norm(out) <= mu * np.linalg.norm(F_n) + 1e-12 or np.allclose(out, F_s)
        if np.linalg.norm(out) > 0.0:
            assert np.allclose(np.cross(out, F_s), 0.0, atol=1e-9 * np.linalg.norm(F_s) ** 2)


class TestViscoelasticForces:
    def test_no_damping_at_rest(self):
        s = detect_contact(sphere(0, [0.0, 0.0, 0.0]), sphere(1, [1.5, 0.0, 0.0]))
        p = ViscoelasticContactParams(10.0, 1.0, 0.5, gamma_n=2.0, gamma_s=1.0)
        F, arm = viscoelastic_forces(s, p)
        assert np.allclose(F, [-5.0, 0.0, 0.0])
        assert np.allclose(arm, [0.75, 0.0, 0.0])

    def test_normal_damping(self):
        s = detect_contact(sphere(0, [0.0, 0.0, 0.0], velocity=[1.0, 0.0, 0.0]), sphere(1, [1.5, 0.0, 0.0]))
        p = ViscoelasticContactParams(10.0, gamma_n=2.0)
        F, _ = viscoelastic_forces(s, p)
        assert np.allclose(F, [-5.0 - 2.0, 0.0, 0.0])

    def test_frictionless_force_parallel_to_bond(self):
        rng = np.random.default_rng(3)
        p = ElasticContactParams(100.0)
        for _ in range(20):
            a = sphere(0, [0.0, 0.0, 0.0], velocity=rng.normal(size=3))
            b = sphere(1, rng.normal(size=3) * 0.5 + [1.2, 0, 0], velocity=rng.normal(size=3))
            s = detect_contact(a, b)
            F, _ = contact_force(s, p)
            if s.penetrating:
                assert np.linalg.norm(np.cross(F, s.xi)) <= 1e-9 * np.linalg.norm(F) * np.linalg.norm(s.xi)

    def test_shear_state_is_capped(self):
        s = detect_contact(sphere(0, [0.0, 0.0, 0.0]), sphere(1, [1.5, 0.0, 0.0]))
        p = ElasticContactParams(10.0, 5.0, 0.2)
        state = ShearForceState((0, 1), 3, p, state=np.array([0.0, 4.0, 0.0]))
        state.update(s)
        state.post_step(0.0)
        assert np.allclose(state.state, [0.0, 1.0, 0.0])
        F, _ = contact_force(s, p, state)
        assert np.allclose(F, [-5.0, 1.0, 0.0])
