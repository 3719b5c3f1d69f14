import heapq
import itertools

import numpy as np
import pytest

from plantnbv.clustering import (
    ClusteringParams,
    cut_ordering,
    diff_clusters,
    extract_clusters,
    optics_order,
)
from plantnbv.semantic_map import CLASS_PEDUNCLE, CLASS_PETIOLE, CLASS_TOMATO

from conftest import small_map


# ---------------------------------------------------------------------------
# brute-force oracles


def pairwise_dist(pts):
    """Distance matrix with the exact float formula the kernel uses."""
    import math

    n = len(pts)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            dz = pts[i, 2] - pts[j, 2]
            d[i, j] = math.sqrt(dx * dx + dy * dy + dz * dz)
    return d


def optics_oracle(pts, eps, min_pts):
    """O(n^2) OPTICS with the same conventions as the implementation:
    neighbourhood includes the point, ties resolve by index."""
    n = len(pts)
    d = pairwise_dist(pts)
    neighbors = [np.nonzero(d[i] <= eps)[0] for i in range(n)]
    core = np.full(n, np.inf)
    for i in range(n):
        if len(neighbors[i]) >= min_pts:
            core[i] = np.sort(d[i][neighbors[i]])[min_pts - 1]
    processed = np.zeros(n, dtype=bool)
    cand = np.full(n, np.inf)
    order, reach = [], []
    for start in range(n):
        if processed[start]:
            continue
        processed[start] = True
        order.append(start)
        reach.append(np.inf)
        heap = []
        expand = start
        while True:
            if core[expand] <= eps:
                for j in neighbors[expand]:
                    if processed[j]:
                        continue
                    newr = max(core[expand], d[expand, j])
                    if newr < cand[j]:
                        cand[j] = newr
                        heapq.heappush(heap, (newr, j))
            nxt = -1
            while heap:
                r, j = heapq.heappop(heap)
                if processed[j] or r != cand[j]:
                    continue
                nxt = j
                break
            if nxt < 0:
                break
            processed[nxt] = True
            order.append(nxt)
            reach.append(cand[nxt])
            expand = nxt
    return np.array(order), np.array(reach), core


def single_linkage_components(pts, threshold):
    """Connected components of the <=threshold graph (union-find oracle)."""
    n = len(pts)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    d = pairwise_dist(pts)
    for i, j in itertools.combinations(range(n), 2):
        if d[i, j] <= threshold:
            parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), set()).add(i)
    return [frozenset(g) for g in groups.values()]


# ---------------------------------------------------------------------------


class TestOpticsOrder:
    def test_tight_ball_all_reachable(self):
        rng = np.random.default_rng(42)
        pts = rng.uniform(0, 0.004, (25, 3))  # diameter << eps
        res = optics_order(pts, eps=0.05, min_pts=5)
        assert len(res.order) == 25
        assert np.isinf(res.reachability[0])
        assert np.all(res.reachability[1:] <= 0.05)

    def test_two_separated_groups_one_jump(self):
        rng = np.random.default_rng(1)
        eps = 0.01
        a = rng.uniform(0, 0.008, (25, 3))
        b = rng.uniform(0, 0.008, (25, 3)) + np.array([10 * eps, 0, 0])
        pts = np.vstack([a, b])
        res = optics_order(pts, eps=eps, min_pts=5)
        inf_positions = np.nonzero(np.isinf(res.reachability))[0]
        assert len(inf_positions) == 2  # the start plus exactly one jump
        jump = inf_positions[1]
        first_group = set(int(i) for i in res.order[:jump])
        assert first_group in ({*range(25)}, {*range(25, 50)})

    def test_single_point(self):
        res = optics_order(np.zeros((1, 3)), eps=0.1, min_pts=2)
        assert len(res.order) == 1
        assert np.isinf(res.reachability[0])

    def test_empty_input(self):
        res = optics_order(np.empty((0, 3)), eps=0.1, min_pts=2)
        assert len(res.order) == 0

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            optics_order(np.zeros((2, 3)), eps=0.0, min_pts=2)
        with pytest.raises(ValueError):
            optics_order(np.zeros((2, 3)), eps=0.1, min_pts=0)

    @pytest.mark.parametrize("seed,n,min_pts", [(0, 40, 2), (1, 80, 4), (2, 120, 5), (3, 60, 3)])
    def test_matches_bruteforce_oracle(self, seed, n, min_pts):
        rng = np.random.default_rng(seed)
        # mixture of two blobs and sparse background to exercise jumps
        pts = np.vstack(
            [
                rng.normal((0, 0, 0), 0.004, (n // 2, 3)),
                rng.normal((0.03, 0.01, 0), 0.004, (n // 4, 3)),
                rng.uniform(-0.05, 0.08, (n - n // 2 - n // 4, 3)),
            ]
        )
        eps = 0.012
        res = optics_order(pts, eps=eps, min_pts=min_pts)
        o_order, o_reach, o_core = optics_oracle(pts, eps, min_pts)
        assert np.array_equal(res.order, o_order)
        finite = np.isfinite(o_reach)
        assert np.array_equal(np.isfinite(res.reachability), finite)
        assert np.allclose(res.reachability[finite], o_reach[finite], atol=1e-12)
        assert np.allclose(
            np.where(np.isfinite(res.core_distance), res.core_distance, -1),
            np.where(np.isfinite(o_core[res.order]), o_core[res.order], -1),
            atol=1e-12,
        )

    def test_reachability_geq_predecessor_core(self):
        rng = np.random.default_rng(9)
        pts = rng.uniform(0, 0.05, (150, 3))
        res = optics_order(pts, eps=0.015, min_pts=4)
        core_by_idx = {int(i): c for i, c in zip(res.order, res.core_distance)}
        for t in range(len(res.order)):
            if np.isfinite(res.reachability[t]):
                pred = int(res.predecessor[t])
                d = np.linalg.norm(pts[int(res.order[t])] - pts[pred])
                expected = max(core_by_idx[pred], d)
                assert res.reachability[t] == pytest.approx(expected, abs=1e-12)

    def test_min_pts_two_reachability_at_least_own_core(self):
        rng = np.random.default_rng(10)
        pts = rng.uniform(0, 0.03, (100, 3))
        res = optics_order(pts, eps=0.02, min_pts=2)
        finite = np.isfinite(res.reachability)
        assert np.all(res.reachability[finite] >= res.core_distance[finite] - 1e-12)


def occupy(vmap, keys, label, p_s=0.8):
    for k in keys:
        vmap.set_voxel(k, p_o=0.9, c_s=label, p_s=p_s)


def block(x0, y0, z0, nx, ny, nz):
    return [(x0 + i, y0 + j, z0 + k) for i in range(nx) for j in range(ny) for k in range(nz)]


class TestExtractClusters:
    def test_contiguous_blob_single_cluster(self):
        vmap = small_map()
        occupy(vmap, block(0, 0, 0, 5, 5, 1), CLASS_PEDUNCLE)
        clusters = extract_clusters(vmap, ClusteringParams(min_cluster_size=20))
        assert len(clusters) == 1
        assert clusters[0].class_label == CLASS_PEDUNCLE
        assert clusters[0].size == 25

    def test_undersized_discarded(self):
        vmap = small_map()
        occupy(vmap, block(0, 0, 0, 5, 2, 1), CLASS_PETIOLE)
        assert extract_clusters(vmap, ClusteringParams(min_cluster_size=20)) == []

    def test_two_distant_blobs(self):
        vmap = small_map(side=0.5)
        occupy(vmap, block(0, 0, 0, 5, 5, 1), CLASS_TOMATO)
        occupy(vmap, block(67, 0, 0, 5, 5, 1), CLASS_TOMATO)  # 0.2m apart
        clusters = extract_clusters(vmap, ClusteringParams(20, 0.03))
        assert len(clusters) == 2
        assert all(c.class_label == CLASS_TOMATO for c in clusters)

    def test_classes_never_merge(self):
        vmap = small_map()
        occupy(vmap, block(0, 0, 0, 5, 5, 1), CLASS_TOMATO)
        occupy(vmap, block(5, 0, 0, 5, 5, 1), CLASS_PEDUNCLE)  # touching blocks
        clusters = extract_clusters(vmap, ClusteringParams(20, 0.03))
        assert sorted(c.class_label for c in clusters) == [CLASS_PEDUNCLE, CLASS_TOMATO]

    def test_center_is_mean_of_member_centers(self):
        vmap = small_map()
        keys = block(2, 3, 4, 4, 5, 1)
        occupy(vmap, keys, CLASS_TOMATO)
        (cluster,) = extract_clusters(vmap, ClusteringParams(20, 0.03))
        expected = np.mean([vmap.voxel_center(k) for k in keys], axis=0)
        assert np.allclose(cluster.center, expected, atol=1e-12)

    def test_only_occupied_voxels_participate(self):
        vmap = small_map()
        occupy(vmap, block(0, 0, 0, 5, 5, 1), CLASS_TOMATO)
        vmap.set_voxel((0, 0, 0), p_o=0.2)  # knocked back to free
        (cluster,) = extract_clusters(vmap, ClusteringParams(20, 0.03))
        assert cluster.size == 24

    def test_insertion_order_invariance(self):
        keys = block(0, 0, 0, 6, 4, 1)
        a = small_map()
        occupy(a, keys, CLASS_TOMATO)
        b = small_map()
        occupy(b, list(reversed(keys)), CLASS_TOMATO)
        ca = extract_clusters(a, ClusteringParams(20, 0.03))
        cb = extract_clusters(b, ClusteringParams(20, 0.03))
        assert len(ca) == len(cb) == 1
        assert np.allclose(ca[0].center, cb[0].center)
        assert {tuple(k) for k in ca[0].member_keys} == {tuple(k) for k in cb[0].member_keys}

    @pytest.mark.parametrize("seed", range(6))
    def test_equals_single_linkage_oracle(self, seed):
        rng = np.random.default_rng(seed)
        vmap = small_map(side=0.2)
        n = int(rng.integers(40, 200))
        keys = {tuple(k) for k in rng.integers(-20, 20, (n, 3))}
        occupy(vmap, keys, CLASS_TOMATO)
        params = ClusteringParams(min_cluster_size=3, max_intra_distance=0.009)
        clusters = extract_clusters(vmap, params)
        centers = np.array([vmap.voxel_center(k) for k in sorted(keys)])
        comps = [
            g
            for g in single_linkage_components(centers, params.max_intra_distance)
            if len(g) >= params.min_cluster_size
        ]
        got = {
            frozenset(tuple(k) for k in c.member_keys): c.class_label for c in clusters
        }
        skeys = sorted(keys)
        expected = {frozenset(skeys[i] for i in g) for g in comps}
        assert set(got.keys()) == expected


class TestDiffClusters:
    def make(self, label, center):
        from plantnbv.clustering import Cluster

        return Cluster(label, np.zeros((21, 3), dtype=np.int64), np.asarray(center, float))

    def test_identity_matching(self):
        prev = [self.make(2, (0, 0, 0)), self.make(1, (0.1, 0, 0))]
        m = diff_clusters(prev, prev, 0.03)
        assert m.matched == [(0, 0), (1, 1)]
        assert m.removed == [] and m.added == []

    def test_all_removed_when_current_empty(self):
        prev = [self.make(2, (0, 0, 0)), self.make(1, (0.1, 0, 0))]
        m = diff_clusters(prev, [], 0.03)
        assert m.removed == [0, 1] and m.matched == []

    def test_small_shift_matches(self):
        prev = [self.make(2, (0, 0, 0))]
        curr = [self.make(2, (0.01, 0, 0))]
        m = diff_clusters(prev, curr, 0.03)
        assert m.matched == [(0, 0)]

    def test_class_mismatch_never_matches(self):
        prev = [self.make(2, (0, 0, 0))]
        curr = [self.make(1, (0, 0, 0))]
        m = diff_clusters(prev, curr, 0.03)
        assert m.matched == [] and m.removed == [0] and m.added == [0]

    def test_injective_nearest_first(self):
        prev = [self.make(2, (0, 0, 0))]
        curr = [self.make(2, (0.02, 0, 0)), self.make(2, (0.005, 0, 0))]
        m = diff_clusters(prev, curr, 0.03)
        assert m.matched == [(0, 1)]
        assert m.added == [0]


class TestCutOrdering:
    def test_groups_split_at_large_reachability(self):
        rng = np.random.default_rng(2)
        eps = 0.01
        a = rng.uniform(0, 0.006, (10, 3))
        b = rng.uniform(0, 0.006, (12, 3)) + np.array([0.5, 0, 0])
        res = optics_order(np.vstack([a, b]), eps=eps, min_pts=2)
        groups = cut_ordering(res, eps)
        assert sorted(len(g) for g in groups) == [10, 12]
