"""Procedural labeled plant scenes and the simulated sensing pipeline.

Plants are built from analytic primitives (cylinder segments, spheres,
discs), so depth rendering is exact ray casting and ground-truth object
centers come from the geometry itself. A configurable detection oracle
stands in for a learned instance-segmentation network, corrupting the
rendered labels with false negatives and grown false-positive patches.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from numba import njit

from .geometry import CameraIntrinsics, RandomStream, Viewpoint, camera_ray_directions
from .semantic_map import (
    CLASS_BACKGROUND,
    CLASS_PEDUNCLE,
    CLASS_PETIOLE,
    CLASS_TOMATO,
    DEFAULT_CONFIDENCE,
    SemanticCloud,
)

SHAPE_CYLINDER = "cylinder"
SHAPE_SPHERE = "sphere"
SHAPE_DISC = "disc"
_SHAPE_CODES = {SHAPE_CYLINDER: 0, SHAPE_SPHERE: 1, SHAPE_DISC: 2}
_SHAPE_NAMES = {v: k for k, v in _SHAPE_CODES.items()}

NO_HIT = -1


@dataclass(frozen=True)
class LabeledPrimitive:
    """One analytic solid with a semantic class and a unique instance id.

    Parameter layout: cylinder (x0 y0 z0 x1 y1 z1 r) between two endpoints,
    sphere (cx cy cz r), disc (cx cy cz nx ny nz r).
    """

    shape: str
    params: np.ndarray
    class_label: int
    instance_id: int

    def __post_init__(self):
        if self.shape not in _SHAPE_CODES:
            raise ValueError(f"unknown shape {self.shape!r}")
        p = np.asarray(self.params, dtype=np.float64)
        object.__setattr__(self, "params", p)
        if self.radius <= 0:
            raise ValueError("primitive radius must be positive")

    @property
    def radius(self) -> float:
        return float(self.params[3] if self.shape == SHAPE_SPHERE else self.params[6])

    def center(self) -> np.ndarray:
        """Analytic object center (cylinder midpoint, sphere/disc center)."""
        if self.shape == SHAPE_CYLINDER:
            return 0.5 * (self.params[0:3] + self.params[3:6])
        return self.params[0:3].copy()

    def bounding_sphere(self) -> np.ndarray:
        """(cx, cy, cz, R) fully containing the primitive."""
        if self.shape == SHAPE_CYLINDER:
            c = self.center()
            half = 0.5 * np.linalg.norm(self.params[3:6] - self.params[0:3])
            return np.array([c[0], c[1], c[2], half + self.radius])
        c = self.params[0:3]
        return np.array([c[0], c[1], c[2], self.radius])

    def transformed(self, yaw: float, translation) -> "LabeledPrimitive":
        cy, sy = math.cos(yaw), math.sin(yaw)
        rot = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
        t = np.asarray(translation, dtype=np.float64)
        p = self.params.copy()
        p[0:3] = rot @ p[0:3] + t
        if self.shape == SHAPE_CYLINDER:
            p[3:6] = rot @ p[3:6] + t
        elif self.shape == SHAPE_DISC:
            p[3:6] = rot @ p[3:6]
        return replace(self, params=p)


class LabeledScene:
    """Ground-truth plant: primitives plus analytically derived OOI centers."""

    def __init__(self, primitives, plant_base):
        self.primitives = list(primitives)
        self.plant_base = np.asarray(plant_base, dtype=np.float64)
        ids = [p.instance_id for p in self.primitives]
        if len(set(ids)) != len(ids):
            raise ValueError("instance ids must be unique within a scene")
        oois = [p for p in self.primitives if p.class_label != CLASS_BACKGROUND]
        self.ooi_classes = np.array([p.class_label for p in oois], dtype=np.int64)
        self.ooi_centers = (
            np.array([p.center() for p in oois]) if oois else np.empty((0, 3))
        )
        self.ooi_instance_ids = np.array([p.instance_id for p in oois], dtype=np.int64)
        self._packed = None

    @property
    def n_oois(self) -> int:
        return len(self.ooi_classes)

    def transformed(self, yaw: float, translation) -> "LabeledScene":
        """Rotate about the plant's vertical axis, then translate."""
        prims = [p.transformed(yaw, translation) for p in self.primitives]
        cy, sy = math.cos(yaw), math.sin(yaw)
        rot = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
        base = rot @ self.plant_base + np.asarray(translation, dtype=np.float64)
        return LabeledScene(prims, base)

    def packed(self):
        """Primitive arrays for the render kernel (cached)."""
        if self._packed is None:
            k = len(self.primitives)
            types = np.empty(k, dtype=np.int8)
            params = np.zeros((k, 7), dtype=np.float64)
            labels = np.empty(k, dtype=np.int8)
            inst = np.empty(k, dtype=np.int32)
            bsph = np.empty((k, 4), dtype=np.float64)
            for i, p in enumerate(self.primitives):
                types[i] = _SHAPE_CODES[p.shape]
                params[i, : len(p.params)] = p.params
                labels[i] = p.class_label
                inst[i] = p.instance_id
                bsph[i] = p.bounding_sphere()
            self._packed = (types, params, labels, inst, bsph)
        return self._packed

    def save_text(self, path):
        """One primitive per line: `shape class instance params...`."""
        with open(path, "w") as f:
            for p in self.primitives:
                vals = " ".join(f"{v:.6f}" for v in p.params)
                f.write(f"{p.shape} {p.class_label} {p.instance_id} {vals}\n")

    def save_ground_truth(self, path):
        """One OOI per line: `class x y z`."""
        with open(path, "w") as f:
            for c, ctr in zip(self.ooi_classes, self.ooi_centers):
                f.write(f"{c} {ctr[0]:.6f} {ctr[1]:.6f} {ctr[2]:.6f}\n")

    @classmethod
    def load_text(cls, path, plant_base=(0.0, 0.0, 0.0)) -> "LabeledScene":
        prims = []
        with open(path) as f:
            for line in f:
                parts = line.split()
                if not parts:
                    continue
                shape, label, iid = parts[0], int(parts[1]), int(parts[2])
                params = np.array([float(v) for v in parts[3:]])
                prims.append(LabeledPrimitive(shape, params, label, iid))
        return cls(prims, plant_base)


@dataclass(frozen=True)
class PlantParams:
    """Growth-stage knobs for the procedural plant generator."""

    stem_height: float = 0.7
    n_nodes: int = 6
    leaflets_per_petiole: int = 6
    n_trusses: int = 2
    leaflet_removal: float = 0.0

    def __post_init__(self):
        if not 0.6 <= self.stem_height <= 1.2:
            raise ValueError("stem_height must be within [0.6, 1.2] m")
        if not 4 <= self.n_nodes <= 10:
            raise ValueError("n_nodes must be within [4, 10]")
        if not 4 <= self.leaflets_per_petiole <= 8:
            raise ValueError("leaflets_per_petiole must be within [4, 8]")
        if not 0 <= self.n_trusses <= 4:
            raise ValueError("n_trusses must be within [0, 4]")
        if self.n_trusses >= self.n_nodes:
            raise ValueError("need fewer trusses than nodes")
        if not 0.0 <= self.leaflet_removal <= 1.0:
            raise ValueError("leaflet_removal must be within [0, 1]")


_PHYLLOTAXIS = math.radians(137.5)


def generate_plant(seed: int, params: PlantParams = PlantParams()) -> LabeledScene:
    """Build a labeled tomato plant at base (0, 0, 0), deterministic in seed.

    A gently curved vertical stem carries alternating nodes: petioles with
    leaflet discs, and peduncles with a hanging chain of tomato spheres.
    Stem and leaflets are background; peduncles, petioles, and tomatoes are
    the objects of interest. Node azimuths follow ~137.5 deg phyllotaxis.
    """
    rng = RandomStream(seed)
    prims: list[LabeledPrimitive] = []
    next_id = 0

    def add(shape, p, label):
        nonlocal next_id
        prims.append(LabeledPrimitive(shape, np.asarray(p, dtype=np.float64), label, next_id))
        next_id += 1

    h = params.stem_height
    stem_r = rng.uniform(0.008, 0.012)

    # Curved stem: piecewise cylinder through a gentle lateral random walk.
    n_seg = 6
    zs = np.linspace(0.0, h, n_seg + 1)
    lateral = np.zeros((n_seg + 1, 2))
    for i in range(1, n_seg + 1):
        lateral[i] = lateral[i - 1] + rng.normal(0.0, 0.006, 2)
    ctrl = np.column_stack([lateral, zs])
    for i in range(n_seg):
        add(SHAPE_CYLINDER, [*ctrl[i], *ctrl[i + 1], stem_r], CLASS_BACKGROUND)

    def stem_point(z):
        x = np.interp(z, zs, ctrl[:, 0])
        y = np.interp(z, zs, ctrl[:, 1])
        return np.array([x, y, z])

    # Nodes sit on the lower two thirds of the stem, inside the band a
    # plane-constrained camera can actually inspect.
    n = params.n_nodes
    fracs = np.linspace(0.2, 0.58, n) + rng.uniform(-0.02, 0.02, n)
    node_z = np.clip(fracs, 0.05, 0.98) * h
    az0 = rng.uniform(0.0, 2.0 * math.pi)
    azimuths = az0 + np.arange(n) * _PHYLLOTAXIS + rng.normal(0.0, math.radians(8.0), n)

    # Trusses sit on the lower nodes, as on a fruiting plant.
    lower = list(range(max(params.n_trusses, int(math.ceil(0.6 * n)))))
    truss_nodes = set(int(i) for i in rng.permutation(lower)[: params.n_trusses])

    leaflets = []
    for k in range(n):
        base = stem_point(node_z[k])
        az = float(azimuths[k])
        if k in truss_nodes:
            el = rng.uniform(-0.65, -0.35)
            direction = np.array(
                [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
            )
            length = rng.uniform(0.05, 0.09)
            start = base + direction * (stem_r * 0.8)
            end = start + direction * length
            add(SHAPE_CYLINDER, [*start, *end, rng.uniform(0.004, 0.005)], CLASS_PEDUNCLE)
            n_tom = int(rng.integers(2, 6))
            prev_c, prev_r = end, 0.004
            for t in range(n_tom):
                r = rng.uniform(0.012, 0.017)
                phi = az + t * 2.1 + rng.normal(0.0, 0.3)
                drop = np.array([0.3 * math.cos(phi), 0.3 * math.sin(phi), -1.0])
                drop /= np.linalg.norm(drop)
                c = prev_c + drop * (prev_r + r + 0.036)
                add(SHAPE_SPHERE, [*c, r], CLASS_TOMATO)
                prev_c, prev_r = c, r
        else:
            # The petiole proper is the short stem-to-leaf connector (the cut
            # target); the leaf continues beyond it as a background rachis
            # carrying the leaflet discs.
            el = rng.uniform(-0.3, 0.05)
            direction = np.array(
                [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
            )
            length = rng.uniform(0.04, 0.08)
            start = base + direction * (stem_r * 0.8)
            end = start + direction * length
            add(SHAPE_CYLINDER, [*start, *end, rng.uniform(0.004, 0.006)], CLASS_PETIOLE)
            droop = rng.uniform(0.15, 0.4)
            rdir = np.array(
                [math.cos(el - droop) * math.cos(az), math.cos(el - droop) * math.sin(az), math.sin(el - droop)]
            )
            rachis_len = rng.uniform(0.10, 0.18)
            rachis_end = end + rdir * rachis_len
            add(SHAPE_CYLINDER, [*end, *rachis_end, 0.003], CLASS_BACKGROUND)
            side = np.cross(rdir, np.array([0.0, 0.0, 1.0]))
            side /= np.linalg.norm(side)
            for j, s in enumerate(np.linspace(0.1, 1.0, params.leaflets_per_petiole)):
                leaf_r = rng.uniform(0.035, 0.06)
                sgn = 1.0 if j % 2 == 0 else -1.0
                centre = (
                    end
                    + rdir * (rachis_len * s)
                    + side * (sgn * leaf_r * 0.75)
                    + np.array([0.0, 0.0, rng.uniform(-0.015, 0.0)])
                )
                normal = np.array([0.0, 0.0, 1.0]) + 0.5 * rng.normal(0.0, 1.0, 3)
                normal /= np.linalg.norm(normal)
                leaflets.append((centre, normal, leaf_r))

    # Reduced-complexity scenes drop an exact fraction of the leaflets.
    n_leaf = len(leaflets)
    n_remove = int(round(params.leaflet_removal * n_leaf))
    removed = set(int(i) for i in rng.choice(n_leaf, n_remove, replace=False)) if n_remove else set()
    for i, (centre, normal, leaf_r) in enumerate(leaflets):
        if i in removed:
            continue
        add(SHAPE_DISC, [*centre, *normal, leaf_r], CLASS_BACKGROUND)

    return LabeledScene(prims, np.zeros(3))


@dataclass
class RenderedView:
    """Per-pixel depth (Euclidean hit distance), class labels, instance ids."""

    depth: np.ndarray
    labels: np.ndarray
    instances: np.ndarray
    pose: Viewpoint

    def __post_init__(self):
        if not (self.depth.shape == self.labels.shape == self.instances.shape):
            raise ValueError("depth, labels, instances must have identical shape")

    @property
    def hit_mask(self) -> np.ndarray:
        return np.isfinite(self.depth)


def render_view(scene: LabeledScene, pose: Viewpoint, intr: CameraIntrinsics) -> RenderedView:
    """Exact nearest-hit ray casting of the scene's primitives."""
    dirs_cam = camera_ray_directions(intr, stride=1)
    dirs = dirs_cam @ pose.rotation_matrix().T
    types, params, labels, inst, bsph = scene.packed()
    depth, lab, ins = _render_kernel(
        np.ascontiguousarray(dirs), pose.position, types, params, labels, inst, bsph, intr.max_range
    )
    shape = (intr.height, intr.width)
    return RenderedView(depth.reshape(shape), lab.reshape(shape), ins.reshape(shape), pose)


@dataclass(frozen=True)
class DetectionNoise:
    """Corruption model for the detection oracle."""

    fn_rate: float = 0.1
    fp_rate: float = 0.3
    confidence_range_true: tuple = (0.8, 0.95)
    confidence_range_false: tuple = (0.5, 0.8)
    min_pixels: int = 20

    def __post_init__(self):
        if not 0.0 <= self.fn_rate <= 1.0:
            raise ValueError("fn_rate must be in [0, 1]")
        if self.fp_rate < 0.0:
            raise ValueError("fp_rate must be >= 0")
        for name, (lo, hi) in (
            ("confidence_range_true", self.confidence_range_true),
            ("confidence_range_false", self.confidence_range_false),
        ):
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"{name} must be an ordered range within [0, 1]")
        if self.min_pixels < 0:
            raise ValueError("min_pixels must be >= 0")

    @classmethod
    def noiseless(cls) -> "DetectionNoise":
        return cls(fn_rate=0.0, fp_rate=0.0, min_pixels=0)


@dataclass(frozen=True)
class DetectionRecord:
    instance_id: int
    class_label: int
    n_pixels: int
    confidence: float
    false_positive: bool = False


@dataclass
class Segmentation:
    """Oracle output: per-pixel class and confidence plus the instance list."""

    classes: np.ndarray
    confidences: np.ndarray
    detections: list


def detect(view: RenderedView, noise: DetectionNoise, rng: RandomStream) -> Segmentation:
    """Simulated instance segmentation of a rendered view.

    Visible OOI instances (>= min_pixels) survive with probability
    1 - fn_rate and keep their true mask; false positives are contiguous
    background patches relabeled with a random OOI class. Unlabeled pixels
    carry (-1, 0.5).
    """
    classes = np.full(view.depth.shape, CLASS_BACKGROUND, dtype=np.int8)
    confidences = np.full(view.depth.shape, DEFAULT_CONFIDENCE, dtype=np.float64)
    detections: list[DetectionRecord] = []

    hit = view.hit_mask
    ooi = hit & (view.labels >= 0)
    ids, counts = np.unique(view.instances[ooi], return_counts=True)
    for iid, cnt in zip(ids, counts):
        if cnt < noise.min_pixels:
            continue
        if rng.uniform() < noise.fn_rate:
            continue
        mask = ooi & (view.instances == iid)
        label = int(view.labels[mask][0])
        conf = float(rng.uniform(*noise.confidence_range_true))
        classes[mask] = label
        confidences[mask] = conf
        detections.append(DetectionRecord(int(iid), label, int(cnt), conf))

    n_fp = int(rng.poisson(noise.fp_rate)) if noise.fp_rate > 0 else 0
    for f in range(n_fp):
        background = hit & (classes == CLASS_BACKGROUND)
        candidates = np.flatnonzero(background)
        if len(candidates) == 0:
            break
        seed_pix = int(candidates[rng.integers(len(candidates))])
        target = int(rng.integers(50, 301))
        pixels = _region_grow(background, seed_pix, target)
        label = int(rng.integers(0, 3))
        conf = float(rng.uniform(*noise.confidence_range_false))
        classes.flat[pixels] = label
        confidences.flat[pixels] = conf
        detections.append(DetectionRecord(-1000 - f, label, len(pixels), conf, True))

    return Segmentation(classes, confidences, detections)


def _region_grow(mask: np.ndarray, seed_flat: int, target: int) -> list[int]:
    """4-connected BFS over True pixels, up to target pixels."""
    h, w = mask.shape
    taken = [seed_flat]
    seen = {seed_flat}
    queue = deque([seed_flat])
    while queue and len(taken) < target:
        p = queue.popleft()
        r, c = divmod(p, w)
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w:
                q = rr * w + cc
                if q not in seen and mask.flat[q]:
                    seen.add(q)
                    taken.append(q)
                    queue.append(q)
                    if len(taken) >= target:
                        break
    return taken


def to_semantic_cloud(
    view: RenderedView,
    segmentation: Segmentation,
    intr: CameraIntrinsics,
    stride: int = 1,
    depth_noise_sigma: float = 0.0,
    rng: RandomStream | None = None,
) -> SemanticCloud:
    """Back-project the hit pixels of a view into a world-frame semantic cloud."""
    if segmentation.classes.shape != view.depth.shape:
        raise ValueError("segmentation and view shapes differ")
    sub = (slice(0, intr.height, stride), slice(0, intr.width, stride))
    depth = view.depth[sub]
    mask = np.isfinite(depth)
    if not mask.any():
        return SemanticCloud.empty()
    dirs_cam = camera_ray_directions(intr, stride).reshape(depth.shape + (3,))
    dirs = dirs_cam[mask] @ view.pose.rotation_matrix().T
    d = depth[mask]
    if depth_noise_sigma > 0.0:
        if rng is None:
            raise ValueError("depth noise requires an rng")
        d = np.maximum(d + rng.normal(0.0, depth_noise_sigma, d.shape), 1e-6)
    positions = view.pose.position + dirs * d[:, None]
    labels = segmentation.classes[sub][mask]
    confs = segmentation.confidences[sub][mask]
    return SemanticCloud(positions, labels, confs)


def sample_surface_points(prim: LabeledPrimitive, spacing: float) -> np.ndarray:
    """Deterministic ~spacing-spaced points on the primitive's surface."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if prim.shape == SHAPE_SPHERE:
        c, r = prim.params[0:3], prim.radius
        n = max(8, int(round(4.0 * math.pi * r * r / (spacing * spacing))))
        i = np.arange(n) + 0.5
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        z = 1.0 - 2.0 * i / n
        rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        pts = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z]) * r + c
        return pts
    if prim.shape == SHAPE_CYLINDER:
        p0, p1, r = prim.params[0:3], prim.params[3:6], prim.radius
        axis = p1 - p0
        length = np.linalg.norm(axis)
        axis = axis / length
        helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        e1 = np.cross(axis, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(axis, e1)
        n_ax = max(2, int(round(length / spacing)) + 1)
        n_circ = max(4, int(round(2.0 * math.pi * r / spacing)))
        ss = np.linspace(0.0, length, n_ax)
        th = np.arange(n_circ) * (2.0 * math.pi / n_circ)
        ring = np.outer(np.cos(th), e1) + np.outer(np.sin(th), e2)
        pts = (p0[None, None] + ss[:, None, None] * axis[None, None] + r * ring[None]).reshape(-1, 3)
        return pts
    # disc
    c, nrm, r = prim.params[0:3], prim.params[3:6], prim.radius
    nrm = nrm / np.linalg.norm(nrm)
    helper = np.array([0.0, 0.0, 1.0]) if abs(nrm[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(nrm, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(nrm, e1)
    pts = [c.copy()]
    rho = spacing
    while rho <= r + 1e-12:
        n_ring = max(4, int(round(2.0 * math.pi * rho / spacing)))
        th = np.arange(n_ring) * (2.0 * math.pi / n_ring)
        pts.extend(c + rho * (np.outer(np.cos(th), e1) + np.outer(np.sin(th), e2)))
        rho += spacing
    return np.array(pts)


# ---------------------------------------------------------------------------
# render kernel


@njit(cache=True, fastmath=False)
def _render_kernel(dirs, origin, types, params, labels, inst, bsph, max_range):
    m = dirs.shape[0]
    k = types.shape[0]
    depth = np.full(m, np.inf)
    lab = np.full(m, NO_HIT, dtype=np.int8)
    ins = np.full(m, NO_HIT, dtype=np.int32)
    ox, oy, oz = origin[0], origin[1], origin[2]
    for p in range(m):
        dx, dy, dz = dirs[p, 0], dirs[p, 1], dirs[p, 2]
        best = max_range
        best_j = -1
        for j in range(k):
            # bounding-sphere prescreen
            lx = bsph[j, 0] - ox
            ly = bsph[j, 1] - oy
            lz = bsph[j, 2] - oz
            rr = bsph[j, 3]
            tc = lx * dx + ly * dy + lz * dz
            if tc + rr < 0.0 or tc - rr > best:
                continue
            d2 = lx * lx + ly * ly + lz * lz - tc * tc
            if d2 > rr * rr:
                continue
            t = -1.0
            if types[j] == 1:  # sphere
                r = params[j, 3]
                disc = tc * tc - (lx * lx + ly * ly + lz * lz) + r * r
                if disc >= 0.0:
                    sq = math.sqrt(disc)
                    t0 = tc - sq
                    t1 = tc + sq
                    if t0 > 0.0:
                        t = t0
                    elif t1 > 0.0:
                        t = t1
            elif types[j] == 0:  # finite cylinder, lateral surface
                ax = params[j, 3] - params[j, 0]
                ay = params[j, 4] - params[j, 1]
                az = params[j, 5] - params[j, 2]
                ln = math.sqrt(ax * ax + ay * ay + az * az)
                if ln > 0.0:
                    ax /= ln
                    ay /= ln
                    az /= ln
                    mx = ox - params[j, 0]
                    my = oy - params[j, 1]
                    mz = oz - params[j, 2]
                    da = dx * ax + dy * ay + dz * az
                    ma = mx * ax + my * ay + mz * az
                    px = dx - da * ax
                    py = dy - da * ay
                    pz = dz - da * az
                    qx = mx - ma * ax
                    qy = my - ma * ay
                    qz = mz - ma * az
                    a2 = px * px + py * py + pz * pz
                    r = params[j, 6]
                    if a2 > 1e-18:
                        b2 = px * qx + py * qy + pz * qz
                        c2 = qx * qx + qy * qy + qz * qz - r * r
                        disc = b2 * b2 - a2 * c2
                        if disc >= 0.0:
                            sq = math.sqrt(disc)
                            for root in range(2):
                                tt = (-b2 - sq) / a2 if root == 0 else (-b2 + sq) / a2
                                if tt > 0.0:
                                    s = ma + tt * da
                                    if 0.0 <= s <= ln:
                                        t = tt
                                        break
            else:  # disc
                nx = params[j, 3]
                ny = params[j, 4]
                nz = params[j, 5]
                dn = dx * nx + dy * ny + dz * nz
                if abs(dn) > 1e-12:
                    tt = ((params[j, 0] - ox) * nx + (params[j, 1] - oy) * ny + (params[j, 2] - oz) * nz) / dn
                    if tt > 0.0:
                        hx = ox + tt * dx - params[j, 0]
                        hy = oy + tt * dy - params[j, 1]
                        hz = oz + tt * dz - params[j, 2]
                        r = params[j, 6]
                        if hx * hx + hy * hy + hz * hz <= r * r:
                            t = tt
            if 0.0 < t < best:
                best = t
                best_j = j
        if best_j >= 0:
            depth[p] = best
            lab[p] = labels[best_j]
            ins[p] = inst[best_j]
    return depth, lab, ins
