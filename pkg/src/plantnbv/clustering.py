"""Object-level OOI extraction from the semantic map.

Occupied voxels of each OOI class are ordered with OPTICS and the ordering
is cut wherever the reachability exceeds the intra-cluster distance limit;
undersized groups are discarded. With the min_pts used here (2), the cut
ordering yields exactly the single-linkage connected components at the
distance limit, which keeps thin cylindrical objects (petioles, peduncles)
connected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .semantic_map import OOI_CLASSES, SemanticVoxelMap

#: OPTICS neighbourhood size used by extract_clusters. 2 makes the
#: reachability cut equal single-linkage components at the cut distance.
EXTRACT_MIN_PTS = 2


@dataclass(frozen=True)
class ClusteringParams:
    min_cluster_size: int = 20
    max_intra_distance: float = 0.03

    def __post_init__(self):
        if self.min_cluster_size <= 0 or self.max_intra_distance <= 0:
            raise ValueError("clustering parameters must be positive")


@dataclass
class Cluster:
    """One object hypothesis: class, member voxel keys, and their center."""

    class_label: int
    member_keys: np.ndarray
    center: np.ndarray

    @property
    def size(self) -> int:
        return len(self.member_keys)


@dataclass
class OpticsOrdering:
    """OPTICS output, aligned by position in the ordering.

    ``order[t]`` is the index of the t-th processed point; ``reachability[t]``
    and ``core_distance[t]`` belong to that point. Undefined distances are
    ``inf``. The neighbourhood of a point includes the point itself.
    """

    order: np.ndarray
    reachability: np.ndarray
    core_distance: np.ndarray
    predecessor: np.ndarray

    def __len__(self) -> int:
        return len(self.order)


def optics_order(points, eps: float, min_pts: int) -> OpticsOrdering:
    """Order points by density connectivity (Ankerst-style OPTICS).

    eps bounds the neighbourhood radius; a point's core distance is the
    distance to its min_pts-th nearest neighbour (counting itself) and is
    undefined (inf) if fewer than min_pts points lie within eps. Ties in the
    seed queue resolve by point index, so the ordering is deterministic.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    n = len(pts)
    if n == 0:
        e = np.empty(0)
        return OpticsOrdering(np.empty(0, dtype=np.int64), e.copy(), e.copy(), np.empty(0, dtype=np.int64))
    order, reach, core, pred = _optics_kernel(pts, float(eps), int(min_pts))
    return OpticsOrdering(order, reach, core, pred)


def cut_ordering(ordering: OpticsOrdering, threshold: float):
    """Split an OPTICS ordering into groups at reachability > threshold."""
    groups = []
    current = []
    for t in range(len(ordering)):
        if ordering.reachability[t] > threshold:
            if current:
                groups.append(current)
            current = [int(ordering.order[t])]
        else:
            current.append(int(ordering.order[t]))
    if current:
        groups.append(current)
    return groups


def extract_clusters(vmap: SemanticVoxelMap, params: ClusteringParams) -> list[Cluster]:
    """Per-class OPTICS clustering of occupied OOI voxels.

    Deterministic: voxels enter in sorted key order, so the result does not
    depend on the map's insertion history.
    """
    keys, centers, labels, _ = vmap.occupied_info()
    clusters: list[Cluster] = []
    for cls in OOI_CLASSES:
        sel = labels == cls
        if not np.any(sel):
            continue
        pts = centers[sel]
        kk = keys[sel]
        ordering = optics_order(pts, params.max_intra_distance, EXTRACT_MIN_PTS)
        for group in cut_ordering(ordering, params.max_intra_distance):
            if len(group) < params.min_cluster_size:
                continue
            idx = np.array(group, dtype=np.int64)
            clusters.append(Cluster(cls, kk[idx], pts[idx].mean(axis=0)))
    return clusters


@dataclass
class ClusterMatching:
    matched: list
    removed: list
    added: list


def diff_clusters(prev, curr, max_distance: float) -> ClusterMatching:
    """Injectively match clusters across updates by nearest same-class center.

    Greedy on ascending center distance (ties by index); previous clusters
    without a match are flagged removed, current ones without a match added.
    """
    pairs = []
    for i, a in enumerate(prev):
        for j, b in enumerate(curr):
            if a.class_label != b.class_label:
                continue
            d = float(np.linalg.norm(a.center - b.center))
            if d <= max_distance:
                pairs.append((d, i, j))
    pairs.sort()
    used_prev = set()
    used_curr = set()
    matched = []
    for d, i, j in pairs:
        if i in used_prev or j in used_curr:
            continue
        used_prev.add(i)
        used_curr.add(j)
        matched.append((i, j))
    removed = [i for i in range(len(prev)) if i not in used_prev]
    added = [j for j in range(len(curr)) if j not in used_curr]
    return ClusterMatching(matched, removed, added)


# ---------------------------------------------------------------------------
# OPTICS kernel


@njit(cache=True, fastmath=False)
def _optics_kernel(pts, eps, min_pts):
    n = pts.shape[0]

    # Uniform grid (cell = eps) for eps-neighbourhood queries.
    mins = np.empty(3)
    for a in range(3):
        mn = pts[0, a]
        for i in range(1, n):
            if pts[i, a] < mn:
                mn = pts[i, a]
        mins[a] = mn
    gx = np.empty(n, dtype=np.int64)
    gy = np.empty(n, dtype=np.int64)
    gz = np.empty(n, dtype=np.int64)
    dims = np.zeros(3, dtype=np.int64)
    for i in range(n):
        gx[i] = np.int64((pts[i, 0] - mins[0]) / eps)
        gy[i] = np.int64((pts[i, 1] - mins[1]) / eps)
        gz[i] = np.int64((pts[i, 2] - mins[2]) / eps)
        if gx[i] + 1 > dims[0]:
            dims[0] = gx[i] + 1
        if gy[i] + 1 > dims[1]:
            dims[1] = gy[i] + 1
        if gz[i] + 1 > dims[2]:
            dims[2] = gz[i] + 1
    cell = (gx * dims[1] + gy) * dims[2] + gz
    sort_idx = np.argsort(cell, kind="mergesort")
    sorted_cell = cell[sort_idx]

    # Pass 1: neighbour counts (points within eps, self included).
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        cx, cy, cz = gx[i], gy[i], gz[i]
        for ox in range(-1, 2):
            tx = cx + ox
            if tx < 0 or tx >= dims[0]:
                continue
            for oy in range(-1, 2):
                ty = cy + oy
                if ty < 0 or ty >= dims[1]:
                    continue
                for oz in range(-1, 2):
                    tz = cz + oz
                    if tz < 0 or tz >= dims[2]:
                        continue
                    target = (tx * dims[1] + ty) * dims[2] + tz
                    lo = np.searchsorted(sorted_cell, target, side="left")
                    hi = np.searchsorted(sorted_cell, target, side="right")
                    for t in range(lo, hi):
                        j = sort_idx[t]
                        ddx = pts[i, 0] - pts[j, 0]
                        ddy = pts[i, 1] - pts[j, 1]
                        ddz = pts[i, 2] - pts[j, 2]
                        if np.sqrt(ddx * ddx + ddy * ddy + ddz * ddz) <= eps:
                            counts[i] += 1

    offsets = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        offsets[i + 1] = offsets[i] + counts[i]
    nnz = offsets[n]
    nb_idx = np.empty(nnz, dtype=np.int64)
    nb_dist = np.empty(nnz)

    # Pass 2: fill the CSR adjacency (neighbours in sorted-cell order).
    fill = np.zeros(n, dtype=np.int64)
    for i in range(n):
        cx, cy, cz = gx[i], gy[i], gz[i]
        for ox in range(-1, 2):
            tx = cx + ox
            if tx < 0 or tx >= dims[0]:
                continue
            for oy in range(-1, 2):
                ty = cy + oy
                if ty < 0 or ty >= dims[1]:
                    continue
                for oz in range(-1, 2):
                    tz = cz + oz
                    if tz < 0 or tz >= dims[2]:
                        continue
                    target = (tx * dims[1] + ty) * dims[2] + tz
                    lo = np.searchsorted(sorted_cell, target, side="left")
                    hi = np.searchsorted(sorted_cell, target, side="right")
                    for t in range(lo, hi):
                        j = sort_idx[t]
                        ddx = pts[i, 0] - pts[j, 0]
                        ddy = pts[i, 1] - pts[j, 1]
                        ddz = pts[i, 2] - pts[j, 2]
                        d = np.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
                        if d <= eps:
                            pos = offsets[i] + fill[i]
                            nb_idx[pos] = j
                            nb_dist[pos] = d
                            fill[i] += 1

    # Core distances: min_pts-th smallest neighbour distance (self counts).
    core = np.full(n, np.inf)
    for i in range(n):
        if counts[i] >= min_pts:
            buf = nb_dist[offsets[i] : offsets[i + 1]].copy()
            buf.sort()
            core[i] = buf[min_pts - 1]

    order = np.empty(n, dtype=np.int64)
    reach_out = np.empty(n)
    core_out = np.empty(n)
    pred_out = np.empty(n, dtype=np.int64)
    processed = np.zeros(n, dtype=np.bool_)
    cand_reach = np.full(n, np.inf)
    cand_pred = np.full(n, -1, dtype=np.int64)

    # Binary min-heap with lazy deletion; ties resolve by point index.
    cap = nnz + n + 1
    hkey = np.empty(cap)
    hidx = np.empty(cap, dtype=np.int64)
    hsize = 0

    pos = 0
    for start in range(n):
        if processed[start]:
            continue
        processed[start] = True
        order[pos] = start
        reach_out[pos] = np.inf
        core_out[pos] = core[start]
        pred_out[pos] = -1
        pos += 1

        hsize = 0
        expand = start
        while True:
            if core[expand] <= eps:
                for t in range(offsets[expand], offsets[expand + 1]):
                    j = nb_idx[t]
                    if processed[j]:
                        continue
                    newr = core[expand]
                    if nb_dist[t] > newr:
                        newr = nb_dist[t]
                    if newr < cand_reach[j]:
                        cand_reach[j] = newr
                        cand_pred[j] = expand
                        # push (newr, j)
                        hkey[hsize] = newr
                        hidx[hsize] = j
                        c = hsize
                        hsize += 1
                        while c > 0:
                            par = (c - 1) >> 1
                            if hkey[c] < hkey[par] or (hkey[c] == hkey[par] and hidx[c] < hidx[par]):
                                hkey[c], hkey[par] = hkey[par], hkey[c]
                                hidx[c], hidx[par] = hidx[par], hidx[c]
                                c = par
                            else:
                                break
            # pop the next unprocessed seed
            nxt = -1
            while hsize > 0:
                k = hkey[0]
                j = hidx[0]
                hsize -= 1
                hkey[0] = hkey[hsize]
                hidx[0] = hidx[hsize]
                c = 0
                while True:
                    l = 2 * c + 1
                    r = l + 1
                    sm = c
                    if l < hsize and (hkey[l] < hkey[sm] or (hkey[l] == hkey[sm] and hidx[l] < hidx[sm])):
                        sm = l
                    if r < hsize and (hkey[r] < hkey[sm] or (hkey[r] == hkey[sm] and hidx[r] < hidx[sm])):
                        sm = r
                    if sm == c:
                        break
                    hkey[c], hkey[sm] = hkey[sm], hkey[c]
                    hidx[c], hidx[sm] = hidx[sm], hidx[c]
                    c = sm
                if processed[j] or k != cand_reach[j]:
                    continue  # stale entry
                nxt = j
                break
            if nxt < 0:
                break
            processed[nxt] = True
            order[pos] = nxt
            reach_out[pos] = cand_reach[nxt]
            core_out[pos] = core[nxt]
            pred_out[pos] = cand_pred[nxt]
            pos += 1
            expand = nxt

    return order, reach_out, core_out, pred_out
