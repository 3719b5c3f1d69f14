"""Probabilistic semantic voxel map.

Each voxel stores an occupancy probability (as log-odds), a semantic class
label, and a confidence score. Voxels never observed behave as unknown:
p_o = 0.5, label -1 (background), p_s = 0.5.

Storage is a dense grid covering the workspace bounds plus a small margin;
keys are global ``floor(position / resolution)`` integer triples, so the
representation is interchangeable with a sparse key->voxel store. Rays and
points outside the stored region are clipped: the map only represents the
neighbourhood of the workspace, which is the only region the planner and
the evaluation ever query.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .geometry import WorkspaceBounds

CLASS_BACKGROUND = -1
CLASS_PEDUNCLE = 0
CLASS_PETIOLE = 1
CLASS_TOMATO = 2
OOI_CLASSES = (CLASS_PEDUNCLE, CLASS_PETIOLE, CLASS_TOMATO)

DEFAULT_CONFIDENCE = 0.5

# Sentinel for "no semantic observation stored yet" (distinct from an
# explicit background observation, which fuses like any other label).
_NO_SEMANTICS = -128

# Occupancy update defaults of the occupancy-mapping framework this follows:
# hit 0.7, miss 0.4, probability clamped to [0.12, 0.97].
DEFAULT_HIT_PROB = 0.7
DEFAULT_MISS_PROB = 0.4
DEFAULT_CLAMP = (0.12, 0.97)


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def binary_entropy(p):
    """Shannon entropy of a Bernoulli(p), in bits; 0*log0 taken as 0.

    Evaluated on the canonical (min, max) probability pair with the minor
    side recovered as 1 - max (exact for max >= 0.5), so I(p) == I(1 - p)
    holds bit-for-bit even when 1 - p rounds.
    """
    arr = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(arr)
    inner = (arr > 0.0) & (arr < 1.0)
    q = arr[inner]
    b = np.where(q >= 0.5, q, 1.0 - q)
    a = 1.0 - b
    out[inner] = -a * np.log2(a) - b * np.log2(b)
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out


@dataclass(frozen=True)
class SemanticPoint:
    """One observed point: position, class label, and confidence."""

    position: np.ndarray
    class_label: int = CLASS_BACKGROUND
    confidence: float = DEFAULT_CONFIDENCE

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        if self.class_label not in (CLASS_BACKGROUND, *OOI_CLASSES):
            raise ValueError(f"invalid class label {self.class_label}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


class SemanticCloud:
    """Column-oriented collection of semantic points."""

    def __init__(self, positions, labels, confidences):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
        self.labels = np.asarray(labels, dtype=np.int8).reshape(-1)
        self.confidences = np.asarray(confidences, dtype=np.float64).reshape(-1)
        n = len(self.positions)
        if len(self.labels) != n or len(self.confidences) != n:
            raise ValueError("positions, labels, confidences must have equal length")
        if n:
            if self.labels.min() < CLASS_BACKGROUND or self.labels.max() > CLASS_TOMATO:
                raise ValueError("labels must be in {-1, 0, 1, 2}")
            if self.confidences.min() < 0.0 or self.confidences.max() > 1.0:
                raise ValueError("confidences must be in [0, 1]")

    @classmethod
    def empty(cls) -> "SemanticCloud":
        return cls(np.empty((0, 3)), np.empty(0, dtype=np.int8), np.empty(0))

    @classmethod
    def from_points(cls, points) -> "SemanticCloud":
        points = list(points)
        if not points:
            return cls.empty()
        return cls(
            np.array([p.position for p in points]),
            np.array([p.class_label for p in points], dtype=np.int8),
            np.array([p.confidence for p in points]),
        )

    def point(self, i: int) -> SemanticPoint:
        return SemanticPoint(self.positions[i], int(self.labels[i]), float(self.confidences[i]))

    def __len__(self) -> int:
        return len(self.positions)


class SemanticVoxel(NamedTuple):
    p_o: float
    c_s: int
    p_s: float


UNKNOWN_VOXEL = SemanticVoxel(0.5, CLASS_BACKGROUND, 0.5)


def max_fusion(prev, new):
    """Merge stored semantics with a new observation.

    Same label: keep it, average the confidences. Different labels: keep the
    label with the higher confidence and reduce that confidence by 10% as a
    mismatch penalty. Exact confidence ties keep the previous label.
    Returns (label, confidence).
    """
    prev_c, prev_p = int(prev[0]), float(prev[1])
    new_c, new_p = int(new[0]), float(new[1])
    if not (0.0 <= prev_p <= 1.0 and 0.0 <= new_p <= 1.0):
        raise ValueError("confidences must be in [0, 1]")
    if prev_c == new_c:
        return prev_c, 0.5 * (prev_p + new_p)
    if new_p > prev_p:
        return new_c, 0.9 * new_p
    return prev_c, 0.9 * prev_p


def semantic_entropy(voxel: SemanticVoxel) -> float:
    """Entropy of the class confidence; 1 at p_s = 0.5, 0 at certainty."""
    return binary_entropy(voxel.p_s)


def occupancy_entropy(voxel: SemanticVoxel) -> float:
    """Entropy of the occupancy probability."""
    return binary_entropy(voxel.p_o)


@dataclass
class IntegrationSummary:
    n_points: int
    endpoint_voxels: int
    freespace_voxels: int

    @property
    def voxels_touched(self) -> int:
        return self.endpoint_voxels + self.freespace_voxels


class SemanticVoxelMap:
    """Dense-backed semantic occupancy grid over the workspace region."""

    def __init__(
        self,
        bounds: WorkspaceBounds,
        resolution: float = 0.003,
        hit_prob: float = DEFAULT_HIT_PROB,
        miss_prob: float = DEFAULT_MISS_PROB,
        clamp=DEFAULT_CLAMP,
        margin: float = 0.045,
    ):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        if not (0.5 < hit_prob < 1.0 and 0.0 < miss_prob < 0.5):
            raise ValueError("need hit_prob in (0.5, 1) and miss_prob in (0, 0.5)")
        self.resolution = float(resolution)
        self.bounds = bounds
        self.lo_hit = _logit(hit_prob)
        self.lo_miss = _logit(miss_prob)
        self.lo_min = _logit(clamp[0])
        self.lo_max = _logit(clamp[1])

        lo = bounds.min_corner - margin
        hi = bounds.max_corner + margin
        self.key_min = np.floor(lo / self.resolution).astype(np.int64)
        key_max = np.floor(hi / self.resolution).astype(np.int64)
        self.dims = (key_max - self.key_min + 1).astype(np.int64)
        n = int(np.prod(self.dims))

        self._logodds = np.zeros(n, dtype=np.float32)
        self._cs = np.full(n, _NO_SEMANTICS, dtype=np.int8)
        self._ps = np.full(n, 0.5, dtype=np.float32)
        self._stamp = np.zeros(n, dtype=np.int32)
        self._stamp_counter = 0
        self._occupied: set[int] = set()

    # -- keys and indices -------------------------------------------------

    def world_to_key(self, p) -> tuple[int, int, int]:
        """Global voxel key: componentwise floor(position / resolution)."""
        k = np.floor(np.asarray(p, dtype=np.float64) / self.resolution).astype(np.int64)
        return int(k[0]), int(k[1]), int(k[2])

    def keys_for(self, points) -> np.ndarray:
        return np.floor(np.asarray(points, dtype=np.float64) / self.resolution).astype(np.int64)

    def voxel_center(self, key) -> np.ndarray:
        return (np.asarray(key, dtype=np.float64) + 0.5) * self.resolution

    def key_in_store(self, key) -> bool:
        k = np.asarray(key, dtype=np.int64) - self.key_min
        return bool(np.all(k >= 0) and np.all(k < self.dims))

    def _flat(self, key) -> int:
        k = np.asarray(key, dtype=np.int64) - self.key_min
        return int((k[0] * self.dims[1] + k[1]) * self.dims[2] + k[2])

    def _unflat(self, flat_indices) -> np.ndarray:
        flat = np.asarray(flat_indices, dtype=np.int64)
        nz = self.dims[2]
        ny = self.dims[1]
        k2 = flat % nz
        rem = flat // nz
        k1 = rem % ny
        k0 = rem // ny
        return np.stack([k0, k1, k2], axis=-1) + self.key_min

    def next_stamp(self) -> int:
        self._stamp_counter += 1
        return self._stamp_counter

    # -- queries -----------------------------------------------------------

    def voxel(self, key) -> SemanticVoxel:
        """Stored voxel state; unknown default for unobserved or out-of-store."""
        if not self.key_in_store(key):
            return UNKNOWN_VOXEL
        i = self._flat(key)
        p_o = 1.0 / (1.0 + math.exp(-float(self._logodds[i])))
        c = int(self._cs[i])
        if c == _NO_SEMANTICS:
            return SemanticVoxel(p_o, CLASS_BACKGROUND, DEFAULT_CONFIDENCE)
        return SemanticVoxel(p_o, c, float(self._ps[i]))

    @property
    def n_occupied(self) -> int:
        return len(self._occupied)

    def occupied_flat(self) -> np.ndarray:
        """Flat indices of occupied voxels (p_o > 0.5), sorted."""
        return np.fromiter(sorted(self._occupied), dtype=np.int64, count=len(self._occupied))

    def occupied_key_array(self) -> np.ndarray:
        """(n, 3) keys of occupied voxels in deterministic (sorted) order."""
        if not self._occupied:
            return np.empty((0, 3), dtype=np.int64)
        return self._unflat(self.occupied_flat())

    def occupied_info(self):
        """Occupied voxel centers with labels and confidences, sorted by key.

        Returns (keys (n,3), centers (n,3), labels (n,), confidences (n,));
        voxels occupied without a semantic observation report background.
        """
        flat = self.occupied_flat()
        keys = self._unflat(flat)
        centers = (keys + 0.5) * self.resolution
        labels = self._cs[flat].astype(np.int64)
        confs = self._ps[flat].astype(np.float64)
        no_sem = labels == _NO_SEMANTICS
        labels[no_sem] = CLASS_BACKGROUND
        confs[no_sem] = DEFAULT_CONFIDENCE
        return keys, centers, labels, confs

    # -- updates -----------------------------------------------------------

    def set_voxel(self, key, p_o=None, c_s=None, p_s=None):
        """Directly write voxel state (tests, synthetic maps, offline loads)."""
        if not self.key_in_store(key):
            raise KeyError(f"key {tuple(key)} outside stored region")
        i = self._flat(key)
        if p_o is not None:
            p = min(max(float(p_o), 1e-7), 1.0 - 1e-7)
            self._logodds[i] = _logit(p)
            if p_o > 0.5:
                self._occupied.add(i)
            else:
                self._occupied.discard(i)
        if c_s is not None:
            self._cs[i] = int(c_s)
        if p_s is not None:
            self._ps[i] = float(p_s)

    def integrate_cloud(self, cloud: SemanticCloud, sensor_origin, max_range=None) -> IntegrationSummary:
        """Fuse one semantic point cloud observed from sensor_origin.

        Every point applies a hit update to its endpoint voxel (at most one
        occupancy hit per voxel per cloud) and its semantics are merged via
        max fusion, in point order. Every ray applies a miss update to each
        traversed voxel (at most once per cloud; voxels hit by this cloud are
        exempt). Rays passing through a voxel never touch its semantics.
        """
        origin = np.asarray(sensor_origin, dtype=np.float64).reshape(3)
        if len(cloud) == 0:
            return IntegrationSummary(0, 0, 0)
        if max_range is not None:
            d = np.linalg.norm(cloud.positions - origin, axis=1)
            if np.any(d > max_range):
                raise ValueError("cloud contains points beyond max_range of the origin")
        hit_id = self.next_stamp()
        miss_id = self.next_stamp()
        newly_occ, newly_free, n_end, n_free = _integrate_kernel(
            self._logodds,
            self._cs,
            self._ps,
            self._stamp,
            np.int32(hit_id),
            np.int32(miss_id),
            origin,
            cloud.positions,
            cloud.labels,
            cloud.confidences,
            self.key_min,
            self.dims,
            self.resolution,
            self.lo_hit,
            self.lo_miss,
            self.lo_min,
            self.lo_max,
        )
        self._occupied.update(int(i) for i in newly_occ)
        self._occupied.difference_update(int(i) for i in newly_free)
        return IntegrationSummary(len(cloud), int(n_end), int(n_free))

    # -- export ------------------------------------------------------------

    def export_occupied(self) -> SemanticCloud:
        """One point per occupied voxel (p_o > 0.5) at the voxel center."""
        _, centers, labels, confs = self.occupied_info()
        return SemanticCloud(centers, labels.astype(np.int8), confs)

    def save_text(self, path):
        """Write occupied voxels as `x y z p_o c_s p_s` lines."""
        flat = self.occupied_flat()
        keys = self._unflat(flat)
        with open(path, "w") as f:
            for i, key in zip(flat, keys):
                c = (key + 0.5) * self.resolution
                p_o = 1.0 / (1.0 + math.exp(-float(self._logodds[i])))
                cs = int(self._cs[i])
                ps = float(self._ps[i])
                if cs == _NO_SEMANTICS:
                    cs, ps = CLASS_BACKGROUND, DEFAULT_CONFIDENCE
                f.write(f"{c[0]:.6f} {c[1]:.6f} {c[2]:.6f} {p_o:.6f} {cs} {ps:.6f}\n")

    @classmethod
    def from_text(cls, path, resolution: float = 0.003, bounds: WorkspaceBounds | None = None) -> "SemanticVoxelMap":
        """Rebuild a map from a text export (occupied voxels only)."""
        rows = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                x, y, z, p_o, c_s, p_s = line.split()
                rows.append((float(x), float(y), float(z), float(p_o), int(c_s), float(p_s)))
        if bounds is None:
            if not rows:
                raise ValueError("cannot infer bounds from an empty map file")
            pts = np.array([r[:3] for r in rows])
            lo, hi = pts.min(axis=0) - 0.05, pts.max(axis=0) + 0.05
            bounds = WorkspaceBounds.from_corners(lo, hi, 0.5 * (lo + hi))
        m = cls(bounds, resolution=resolution)
        for x, y, z, p_o, c_s, p_s in rows:
            key = m.world_to_key((x, y, z))
            if m.key_in_store(key):
                m.set_voxel(key, p_o=p_o, c_s=c_s, p_s=p_s)
        return m


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True, fastmath=False)
def _clip_segment(ox, oy, oz, dx, dy, dz, t1, gx0, gy0, gz0, gx1, gy1, gz1):
    """Clip parametric segment o + t*d, t in [0, t1], to an AABB (slab test)."""
    tlo = 0.0
    thi = t1
    for axis in range(3):
        if axis == 0:
            o, d, lo, hi = ox, dx, gx0, gx1
        elif axis == 1:
            o, d, lo, hi = oy, dy, gy0, gy1
        else:
            o, d, lo, hi = oz, dz, gz0, gz1
        if d == 0.0:
            if o < lo or o > hi:
                return 1.0, 0.0
        else:
            ta = (lo - o) / d
            tb = (hi - o) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > tlo:
                tlo = ta
            if tb < thi:
                thi = tb
            if tlo > thi:
                return 1.0, 0.0
    return tlo, thi


@njit(cache=True, fastmath=False)
def _integrate_kernel(
    logodds,
    cs,
    ps,
    stamp,
    hit_id,
    miss_id,
    origin,
    points,
    labels,
    confs,
    key_min,
    dims,
    res,
    lo_hit,
    lo_miss,
    lo_min,
    lo_max,
):
    n = points.shape[0]
    nx, ny, nz = dims[0], dims[1], dims[2]
    gx0 = key_min[0] * res
    gy0 = key_min[1] * res
    gz0 = key_min[2] * res
    gx1 = (key_min[0] + nx) * res
    gy1 = (key_min[1] + ny) * res
    gz1 = (key_min[2] + nz) * res

    newly_occ = np.empty(n, dtype=np.int64)
    n_occ = 0
    newly_free = np.empty(n, dtype=np.int64)
    free_cap = n
    n_freed = 0
    n_end = 0
    n_free_vox = 0

    end_idx = np.empty(n, dtype=np.int64)

    # Pass 1: endpoint hits and semantics, in point order.
    for i in range(n):
        ki = np.int64(np.floor(points[i, 0] / res)) - key_min[0]
        kj = np.int64(np.floor(points[i, 1] / res)) - key_min[1]
        kk = np.int64(np.floor(points[i, 2] / res)) - key_min[2]
        if ki < 0 or kj < 0 or kk < 0 or ki >= nx or kj >= ny or kk >= nz:
            end_idx[i] = -1
            continue
        idx = (ki * ny + kj) * nz + kk
        end_idx[i] = idx
        if stamp[idx] != hit_id:
            stamp[idx] = hit_id
            n_end += 1
            was_occ = logodds[idx] > 0.0
            lo = logodds[idx] + lo_hit
            if lo > lo_max:
                lo = lo_max
            logodds[idx] = lo
            if (lo > 0.0) and not was_occ:
                newly_occ[n_occ] = idx
                n_occ += 1
        # Semantics: direct assignment on first observation, max fusion after.
        lab = labels[i]
        conf = confs[i]
        if cs[idx] == _NO_SEMANTICS:
            cs[idx] = lab
            ps[idx] = conf
        else:
            if cs[idx] == lab:
                ps[idx] = 0.5 * (ps[idx] + conf)
            elif conf > ps[idx]:
                cs[idx] = lab
                ps[idx] = 0.9 * conf
            else:
                ps[idx] = 0.9 * ps[idx]

    # Pass 2: free-space carving along each ray, endpoint voxel excluded.
    for i in range(n):
        vx = points[i, 0] - origin[0]
        vy = points[i, 1] - origin[1]
        vz = points[i, 2] - origin[2]
        t_end = math.sqrt(vx * vx + vy * vy + vz * vz)
        if t_end <= 0.0:
            continue
        dx = vx / t_end
        dy = vy / t_end
        dz = vz / t_end
        tlo, thi = _clip_segment(
            origin[0], origin[1], origin[2], dx, dy, dz, t_end, gx0, gy0, gz0, gx1, gy1, gz1
        )
        if tlo > thi:
            continue
        e_idx = end_idx[i]
        px = origin[0] + tlo * dx
        py = origin[1] + tlo * dy
        pz = origin[2] + tlo * dz
        ci = np.int64(np.floor(px / res)) - key_min[0]
        cj = np.int64(np.floor(py / res)) - key_min[1]
        ck = np.int64(np.floor(pz / res)) - key_min[2]
        if ci < 0:
            ci = 0
        if cj < 0:
            cj = 0
        if ck < 0:
            ck = 0
        if ci > nx - 1:
            ci = nx - 1
        if cj > ny - 1:
            cj = ny - 1
        if ck > nz - 1:
            ck = nz - 1
        step_x = 1 if dx > 0 else -1
        step_y = 1 if dy > 0 else -1
        step_z = 1 if dz > 0 else -1
        if dx != 0.0:
            tmax_x = ((key_min[0] + ci + (1 if dx > 0 else 0)) * res - origin[0]) / dx
        else:
            tmax_x = math.inf
        if dy != 0.0:
            tmax_y = ((key_min[1] + cj + (1 if dy > 0 else 0)) * res - origin[1]) / dy
        else:
            tmax_y = math.inf
        if dz != 0.0:
            tmax_z = ((key_min[2] + ck + (1 if dz > 0 else 0)) * res - origin[2]) / dz
        else:
            tmax_z = math.inf

        t = tlo
        first = True
        while first or t < thi:
            first = False
            idx = (ci * ny + cj) * nz + ck
            if idx == e_idx:
                break
            s = stamp[idx]
            if s != hit_id and s != miss_id:
                stamp[idx] = miss_id
                n_free_vox += 1
                was_occ = logodds[idx] > 0.0
                lo = logodds[idx] + lo_miss
                if lo < lo_min:
                    lo = lo_min
                logodds[idx] = lo
                if was_occ and lo <= 0.0:
                    if n_freed >= free_cap:
                        grown = np.empty(free_cap * 2, dtype=np.int64)
                        grown[:free_cap] = newly_free
                        newly_free = grown
                        free_cap *= 2
                    newly_free[n_freed] = idx
                    n_freed += 1
            # advance to the next cell boundary (crossings recomputed from
            # the cell index so exact-boundary ranges stay exact)
            if tmax_x <= tmax_y and tmax_x <= tmax_z:
                t = tmax_x
                ci += step_x
                if ci < 0 or ci >= nx:
                    break
                tmax_x = ((key_min[0] + ci + (1 if dx > 0 else 0)) * res - origin[0]) / dx
            elif tmax_y <= tmax_z:
                t = tmax_y
                cj += step_y
                if cj < 0 or cj >= ny:
                    break
                tmax_y = ((key_min[1] + cj + (1 if dy > 0 else 0)) * res - origin[1]) / dy
            else:
                t = tmax_z
                ck += step_z
                if ck < 0 or ck >= nz:
                    break
                tmax_z = ((key_min[2] + ck + (1 if dz > 0 else 0)) * res - origin[2]) / dz

    return newly_occ[:n_occ], newly_free[:n_freed], n_end, n_free_vox
