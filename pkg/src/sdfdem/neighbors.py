"""k-d tree over body centers for radius and nearest-neighbor queries.

The tree is stored as flat arrays: each node keeps the tight bounding box of
its points and either two children or a contiguous slice of the permuted point
array. Single queries walk the tree with an explicit stack; the batch radius
query advances every (query, node) pair of the frontier at once with numpy.
"""

from __future__ import annotations

import heapq

import numpy as np

LEAF_SIZE = 16


class SpatialIndex:
    """Immutable k-d tree snapshot of body centers.

    ``ids`` label the points (body ids); results are always reported as ids
    sorted ascending. ``radii`` is an optional per-point bounding-radius table
    carried alongside for contact cutoffs.
    """

    def __init__(self, points, ids=None, radii=None, leaf_size: int = LEAF_SIZE, timestamp: float = 0.0):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(0, 0) if pts.size == 0 else pts.reshape(1, -1)
        self.points = pts
        self.n = len(pts)
        self.dim = pts.shape[1] if pts.ndim == 2 and pts.size else 0
        self.ids = np.arange(self.n) if ids is None else np.asarray(ids, dtype=int)
        self.radii = None if radii is None else np.asarray(radii, dtype=float)
        self.timestamp = timestamp
        self.leaf_size = max(1, int(leaf_size))
        self.visited = 0
        self._build()

    # -- construction ------------------------------------------------------------

    def _build(self):
        order = np.arange(self.n)
        lo, hi, left, right, start, stop = [], [], [], [], [], []

        def new_node(idx_lo, idx_hi):
            sub = self.points[order[idx_lo:idx_hi]]
            lo.append(sub.min(axis=0))
            hi.append(sub.max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(idx_lo)
            stop.append(idx_hi)
            return len(lo) - 1

        if self.n:
            stack = [(new_node(0, self.n), 0, self.n)]
            while stack:
                node, a, b = stack.pop()
                if b - a <= self.leaf_size:
                    continue
                axis = int(np.argmax(hi[node] - lo[node]))
                mid = (a + b) // 2
                seg = order[a:b]
                part = np.argpartition(self.points[seg, axis], mid - a)
                order[a:b] = seg[part]
                left[node] = new_node(a, mid)
                right[node] = new_node(mid, b)
                stack.append((left[node], a, mid))
                stack.append((right[node], mid, b))

        self.order = order
        self.node_lo = np.array(lo).reshape(len(lo), self.dim)
        self.node_hi = np.array(hi).reshape(len(hi), self.dim)
        self.left = np.array(left, dtype=int)
        self.right = np.array(right, dtype=int)
        self.start = np.array(start, dtype=int)
        self.stop = np.array(stop, dtype=int)

    # -- helpers -------------------------------------------------------------------

    def _box_dist2(self, node, q):
        gap = np.maximum(self.node_lo[node] - q, 0.0) + np.maximum(q - self.node_hi[node], 0.0)
        return float(gap @ gap)

    def _leaf_members(self, node):
        return self.order[self.start[node]:self.stop[node]]

    # -- queries ---------------------------------------------------------------------

    def radius_query(self, center, h: float, exclude=None):
        q = np.asarray(center, dtype=float)
        found = []
        self.visited = 0
        if self.n == 0:
            return []
        h2 = h * h
        stack = [0]
        while stack:
            node = stack.pop()
            self.visited += 1
            if self._box_dist2(node, q) >= h2:
                continue
            if self.left[node] < 0:
                members = self._leaf_members(node)
                diff = self.points[members] - q
                hit = members[np.einsum("ij,ij->i", diff, diff) < h2]
                found.extend(self.ids[hit].tolist())
            else:
                stack.append(self.left[node])
                stack.append(self.right[node])
        if exclude is not None:
            found = [i for i in found if i != exclude]
        return sorted(found)

    def knn_query(self, center, k: int, exclude=None):
        if k < 1:
            raise ValueError("k must be at least 1")
        q = np.asarray(center, dtype=float)
        self.visited = 0
        if self.n == 0:
            return []
        # max-heap of the best k as (-d2, -id); ties prefer the lower id
        best = []
        frontier = [(0.0, 0)]
        while frontier:
            d2_box, node = heapq.heappop(frontier)
            if len(best) == k and d2_box > -best[0][0]:
                break
            self.visited += 1
            if self.left[node] < 0:
                members = self._leaf_members(node)
                diff = self.points[members] - q
                d2 = np.einsum("ij,ij->i", diff, diff)
                for dist2, member in zip(d2.tolist(), members.tolist()):
                    pid = int(self.ids[member])
                    if pid == exclude:
                        continue
                    item = (-dist2, -pid)
                    if len(best) < k:
                        heapq.heappush(best, item)
                    elif item > best[0]:
                        heapq.heapreplace(best, item)
            else:
                for child in (self.left[node], self.right[node]):
                    heapq.heappush(frontier, (self._box_dist2(child, q), int(child)))
        ranked = sorted((-d2, -nid) for d2, nid in best)
        return [pid for _, pid in ranked]

    def radius_query_batch(self, centers, h):
        """Indices (not ids) of points within ``h[i]`` of ``centers[i]``.

        Returns ``(query_index, point_index)`` arrays covering every hit,
        ordered by query then point index.
        """
        Q = np.asarray(centers, dtype=float).reshape(-1, self.dim if self.dim else 1)
        h = np.broadcast_to(np.asarray(h, dtype=float), (len(Q),))
        if self.n == 0 or len(Q) == 0:
            empty = np.zeros(0, dtype=int)
            return empty, empty
        h2 = h * h
        q_idx = np.arange(len(Q))
        node = np.zeros(len(Q), dtype=int)
        out_q, out_p = [], []
        while len(q_idx):
            gap = np.maximum(self.node_lo[node] - Q[q_idx], 0.0) + np.maximum(Q[q_idx] - self.node_hi[node], 0.0)
            keep = np.einsum("ij,ij->i", gap, gap) < h2[q_idx]
            q_idx, node = q_idx[keep], node[keep]
            leaf = self.left[node] < 0
            if leaf.any():
                lq, ln = q_idx[leaf], node[leaf]
                counts = self.stop[ln] - self.start[ln]
                rep_q = np.repeat(lq, counts)
                offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
                members = self.order[np.repeat(self.start[ln], counts) + offsets]
                diff = self.points[members] - Q[rep_q]
                hit = np.einsum("ij,ij->i", diff, diff) < h2[rep_q]
                out_q.append(rep_q[hit])
                out_p.append(members[hit])
            inner = ~leaf
            q_idx = np.concatenate([q_idx[inner], q_idx[inner]])
            node = np.concatenate([self.left[node[inner]], self.right[node[inner]]])
        qs = np.concatenate(out_q) if out_q else np.zeros(0, dtype=int)
        ps = np.concatenate(out_p) if out_p else np.zeros(0, dtype=int)
        order = np.lexsort((ps, qs))
        return qs[order], ps[order]


def build_index(bodies, timestamp: float = 0.0, leaf_size: int = LEAF_SIZE) -> SpatialIndex:
    """Index the centers of mass of ``bodies`` (objects with ``id``, ``position``,
    ``shape``); bodies with infinite extent are skipped."""
    finite = [b for b in bodies if b.shape.is_finite]
    if not finite:
        return SpatialIndex(np.zeros((0, 0)), ids=np.zeros(0, dtype=int), timestamp=timestamp)
    pts = np.array([b.position for b in finite])
    ids = np.array([b.id for b in finite])
    radii = np.array([b.shape.bounding_radius for b in finite])
    return SpatialIndex(pts, ids, radii, leaf_size=leaf_size, timestamp=timestamp)


def radius_query(index: SpatialIndex, center, h: float, exclude=None):
    if not h > 0.0:
        raise ValueError("query radius must be positive")
    return index.radius_query(center, h, exclude)


def knn_query(index: SpatialIndex, center, k: int, exclude=None):
    return index.knn_query(center, k, exclude)


def candidate_pairs(points, radii, skin_fraction: float = 0.1, index: SpatialIndex = None):
    """Unordered index pairs ``(i, j)``, ``i < j``, whose bounding spheres come
    within a skin distance of each other.

    Each point is queried with ``h_i = r_i + max r + skin`` and the hits are
    then filtered with the pair's own radii.
    """
    points = np.asarray(points, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if len(points) < 2:
        return np.zeros((0, 2), dtype=int)
    skin = skin_fraction * float(radii.max())
    index = index if index is not None else SpatialIndex(points)
    qi, pj = index.radius_query_batch(points, radii + radii.max() + skin)
    keep = qi < pj
    qi, pj = qi[keep], pj[keep]
    d = np.linalg.norm(points[qi] - points[pj], axis=1)
    keep = d < radii[qi] + radii[pj] + skin
    return np.stack([qi[keep], pj[keep]], axis=1)
