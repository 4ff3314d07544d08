import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from sdfdem.geometry import HalfSpaceShape, SphereShape
from sdfdem.neighbors import SpatialIndex, build_index, candidate_pairs, knn_query, radius_query
from sdfdem.rigid_body import RigidBody


def brute_radius(points, ids, center, h, exclude=None):
    d = np.linalg.norm(points - center, axis=1)
    return sorted(int(i) for i in ids[d < h] if i != exclude)


def brute_knn(points, ids, center, k, exclude=None):
    d2 = np.sum((points - center) ** 2, axis=1)
    ranked = sorted((float(dist), int(i)) for dist, i in zip(d2, ids) if i != exclude)
    return [i for _, i in ranked[:k]]


def bodies_at(points):
    return [RigidBody(k, SphereShape(0.1, dim=len(p)), position=p) for k, p in enumerate(points)]


class TestBuildIndex:
    def test_empty(self):
        index = build_index([])
        assert index.n == 0
        assert radius_query(index, [0.0, 0.0, 0.0], 1.0) == []
        assert knn_query(index, [0.0, 0.0, 0.0], 3) == []

    def test_single_body_excluded(self):
        index = build_index(bodies_at([[0.0, 0.0, 0.0]]))
        assert radius_query(index, [0.0, 0.0, 0.0], 1.0, exclude=0) == []

    def test_walls_are_skipped(self):
        bodies = bodies_at([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]])
        bodies.append(RigidBody(7, HalfSpaceShape([0.0, 0.0, 1.0], 0.0)))
        index = build_index(bodies)
        assert sorted(index.ids.tolist()) == [0, 1]

    def test_thousand_bodies(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 10, (1000, 3))
        index = build_index(bodies_at(pts), timestamp=2.5)
        assert index.n == 1000
        assert index.timestamp == 2.5
        assert np.allclose(index.radii, 0.1)
        assert sorted(index.order.tolist()) == list(range(1000))

    def test_snapshot_ignores_later_motion(self):
        bodies = bodies_at([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        index = build_index(bodies)
        bodies[1].position[:] = [50.0, 0.0, 0.0]
        assert radius_query(index, [0.0, 0.0, 0.0], 1.5, exclude=0) == [1]


class TestRadiusQuery:
    def test_collinear(self):
        index = SpatialIndex([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        assert radius_query(index, [0.0, 0.0], 1.5, exclude=0) == [1]

    def test_strict_inequality(self):
        index = SpatialIndex([[0.0, 0.0], [1.0, 0.0]])
        assert radius_query(index, [0.0, 0.0], 1.0, exclude=0) == []

    def test_small_radius_empty(self):
        index = SpatialIndex([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        assert radius_query(index, [0.0, 0.0], 0.5, exclude=0) == []

    def test_nonpositive_radius_rejected(self):
        index = SpatialIndex([[0.0, 0.0]])
        with pytest.raises(ValueError):
            radius_query(index, [0.0, 0.0], 0.0)

    def test_ids_are_reported_sorted(self):
        index = SpatialIndex([[0.0], [0.1], [0.2]], ids=[30, 10, 20])
        assert radius_query(index, [0.0], 1.0) == [10, 20, 30]

    @pytest.mark.parametrize("dim", [2, 3])
    def test_matches_brute_force_and_scipy(self, dim):
        rng = np.random.default_rng(dim)
        pts = rng.uniform(0, 1, (1000, dim))
        ids = np.arange(1000)
        index = SpatialIndex(pts, leaf_size=8)
        tree = cKDTree(pts)
        for _ in range(100):
            q = rng.uniform(0, 1, dim)
            h = rng.uniform(0.01, 0.2)
            got = radius_query(index, q, h)
            assert got == brute_radius(pts, ids, q, h)
            # cKDTree's ball query is inclusive; shrink by an ulp-sized margin
            assert got == sorted(tree.query_ball_point(q, h * (1 - 1e-12)))

    def test_batch_matches_single_queries(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 1, (300, 3))
        index = SpatialIndex(pts)
        centers = rng.uniform(0, 1, (40, 3))
        h = rng.uniform(0.05, 0.3, 40)
        qi, pj = index.radius_query_batch(centers, h)
        for k in range(40):
            assert pj[qi == k].tolist() == radius_query(index, centers[k], h[k])


class TestKnnQuery:
    def test_collinear(self):
        index = SpatialIndex([[0.0], [1.0], [3.0]])
        assert knn_query(index, [0.0], 1, exclude=0) == [1]

    def test_k_covers_everyone(self):
        index = SpatialIndex([[0.0], [1.0], [3.0], [7.0]])
        assert sorted(knn_query(index, [0.0], 10, exclude=0)) == [1, 2, 3]

    def test_ties_prefer_lower_id(self):
        index = SpatialIndex([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]], ids=[0, 9, 4, 6])
        assert knn_query(index, [0.0, 0.0], 2, exclude=0) == [4, 6]

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            knn_query(SpatialIndex([[0.0]]), [0.0], 0)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_matches_brute_force(self, dim):
        rng = np.random.default_rng(10 + dim)
        pts = rng.uniform(0, 1, (1000, dim))
        ids = np.arange(1000)
        index = SpatialIndex(pts)
        for _ in range(100):
            j = int(rng.integers(1000))
            k = int(rng.integers(1, 30))
            assert knn_query(index, pts[j], k, exclude=j) == brute_knn(pts, ids, pts[j], k, exclude=j)

    def test_integer_lattice_ties(self):
        g = np.arange(5.0)
        pts = np.array([[x, y] for x in g for y in g])
        ids = np.arange(len(pts))
        index = SpatialIndex(pts, leaf_size=2)
        for j in range(len(pts)):
            for k in (1, 4, 5, 9):
                assert knn_query(index, pts[j], k, exclude=j) == brute_knn(pts, ids, pts[j], k, exclude=j)


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 200), st.sampled_from([2, 3]), st.floats(0.01, 0.5))
    def test_radius_equals_brute_force(self, seed, n, dim, h):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0, 1, (n, dim))
        index = SpatialIndex(pts, leaf_size=int(rng.integers(1, 20)))
        q = rng.uniform(0, 1, dim)
        assert radius_query(index, q, h) == brute_radius(pts, np.arange(n), q, h)

    def test_query_cost_is_sublinear(self):
        rng = np.random.default_rng(42)
        n = 100_000
        pts = rng.uniform(0, 1, (n, 3))
        index = SpatialIndex(pts)
        visited = []
        for q in rng.uniform(0, 1, (1000, 3)):
            knn_query(index, q, 10)
            visited.append(index.visited)
        assert np.mean(visited) < 0.05 * n


class TestCandidatePairs:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 2, (400, 3))
        radii = rng.uniform(0.02, 0.15, 400)
        got = {tuple(p) for p in candidate_pairs(pts, radii, skin_fraction=0.1).tolist()}
        skin = 0.1 * radii.max()
        want = set()
        for i in range(400):
            for j in range(i + 1, 400):
                if np.linalg.norm(pts[i] - pts[j]) < radii[i] + radii[j] + skin:
                    want.add((i, j))
        assert got == want

    def test_large_and_small_bodies(self):
        pts = np.array([[0.0, 0.0], [1.05, 0.0]])
        radii = np.array([1.0, 0.1])
        assert candidate_pairs(pts, radii).tolist() == [[0, 1]]

    def test_fewer_than_two(self):
        assert candidate_pairs(np.zeros((1, 3)), np.ones(1)).shape == (0, 2)
