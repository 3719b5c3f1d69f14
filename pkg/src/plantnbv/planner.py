"""Viewpoint sampling, expected-gain evaluation, and next-best-view selection.

Candidate viewpoints are scored by the entropy expected to be visible from
them: rays are cast evenly across the camera frustum, each ray traverses
the voxel grid until it hits an occupied voxel or runs out of range, and
the entropies of the traversed voxels inside the attention regions are
summed. Utility discounts that gain by the travel distance.

Besides the semantic planner this module provides the comparison planners:
a volumetric twin (occupancy entropy, main-stem attention only), two
predefined zig-zag scanners, and a random picker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .attention import MASK_OOI_BIT, MASK_STEM_BIT, AttentionState, build_attention_mask
from .semantic_map import _clip_segment
from .geometry import (
    CameraIntrinsics,
    RandomStream,
    Viewpoint,
    camera_ray_directions,
    quat_from_axis_angle,
    quat_multiply,
)
from .semantic_map import SemanticVoxelMap

PLANNER_KINDS = ("semantic-nbv", "volumetric-nbv", "predefined-narrow", "predefined-wide", "random")

#: Shared initial viewpoint of all planners: on the sampling plane, slightly
#: off-center and yawed toward the plant.
INITIAL_VIEWPOINT = Viewpoint(
    np.array([0.35, 0.22, 0.90]),
    np.array([0.0, 0.0, -0.26, 0.97]) / np.linalg.norm([0.0, 0.0, -0.26, 0.97]),
)

_Z_AXIS = np.array([0.0, 0.0, 1.0])
_Y_AXIS = np.array([0.0, 1.0, 0.0])


class PlannerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplingConstraint:
    """Region the planner may sample candidate viewpoints from.

    Angles are stored in radians. The planar constraint is a vertical plane
    facing +x (toward the plant); the cylindrical sector faces its axis.
    """

    kind: str
    center: np.ndarray = None
    width: float = 0.7
    height: float = 0.7
    pan_limit: float = math.radians(15.0)
    tilt_limit: float = math.radians(15.0)
    radius: float = 0.4
    sector: float = math.radians(90.0)
    viewpoints: tuple = ()

    def __post_init__(self):
        if self.kind not in ("planar", "cylindrical-sector", "discrete-set"):
            raise ValueError(f"unknown sampling constraint kind {self.kind!r}")
        if self.kind != "discrete-set":
            if self.center is None:
                raise ValueError("center required")
            object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
            if min(self.width, self.height, self.radius) <= 0:
                raise ValueError("constraint extents must be positive")

    @classmethod
    def planar(cls, center=(0.35, 0.0, 0.8), width=0.7, height=0.7,
               pan_limit=math.radians(15.0), tilt_limit=math.radians(15.0)) -> "SamplingConstraint":
        return cls("planar", center=center, width=width, height=height,
                   pan_limit=pan_limit, tilt_limit=tilt_limit)

    @classmethod
    def cylindrical_sector(cls, center=(0.7, 0.0, 0.8), height=0.7, radius=0.4,
                           sector=math.radians(90.0)) -> "SamplingConstraint":
        return cls("cylindrical-sector", center=center, height=height, radius=radius, sector=sector)

    @classmethod
    def discrete(cls, viewpoints) -> "SamplingConstraint":
        return cls("discrete-set", viewpoints=tuple(viewpoints))


def sample_candidates(constraint: SamplingConstraint, n: int, rng: RandomStream) -> list[Viewpoint]:
    """Stratified pseudo-random candidate viewpoints.

    The sampling area is split into a ceil(sqrt(n)) grid and one jittered
    sample is drawn in each of the first n cells, which spreads candidates
    evenly while staying random. Discrete sets are sampled without
    replacement.
    """
    if n < 1:
        raise ValueError("need at least one candidate")
    if constraint.kind == "discrete-set":
        if n > len(constraint.viewpoints):
            raise PlannerError(f"requested {n} of {len(constraint.viewpoints)} discrete viewpoints")
        idx = rng.choice(len(constraint.viewpoints), size=n, replace=False)
        return [constraint.viewpoints[int(i)] for i in idx]

    g = math.ceil(math.sqrt(n))
    out = []
    if constraint.kind == "planar":
        cw = constraint.width / g
        ch = constraint.height / g
        y0 = constraint.center[1] - 0.5 * constraint.width
        z0 = constraint.center[2] - 0.5 * constraint.height
        for i in range(n):
            row, col = divmod(i, g)
            y = y0 + (col + rng.uniform()) * cw
            z = z0 + (row + rng.uniform()) * ch
            pan = rng.uniform(-constraint.pan_limit, constraint.pan_limit)
            tilt = rng.uniform(-constraint.tilt_limit, constraint.tilt_limit)
            q = quat_multiply(quat_from_axis_angle(_Z_AXIS, pan), quat_from_axis_angle(_Y_AXIS, -tilt))
            out.append(Viewpoint(np.array([constraint.center[0], y, z]), q))
    else:  # cylindrical-sector, facing the cylinder axis
        caz = constraint.sector / g
        cz = constraint.height / g
        az0 = math.pi - 0.5 * constraint.sector
        z0 = constraint.center[2] - 0.5 * constraint.height
        for i in range(n):
            row, col = divmod(i, g)
            az = az0 + (col + rng.uniform()) * caz
            z = z0 + (row + rng.uniform()) * cz
            pos = np.array(
                [
                    constraint.center[0] + constraint.radius * math.cos(az),
                    constraint.center[1] + constraint.radius * math.sin(az),
                    z,
                ]
            )
            q = quat_from_axis_angle(_Z_AXIS, az + math.pi)
            out.append(Viewpoint(pos, q))
    return out


def utility(gain: float, current: Viewpoint, candidate: Viewpoint) -> float:
    """Gain discounted by the Euclidean travel distance: gain * exp(-d)."""
    if gain < 0:
        raise ValueError("gain must be non-negative")
    return gain * math.exp(-current.distance_to(candidate))


@dataclass(frozen=True)
class GainReport:
    viewpoint: Viewpoint
    gain: float
    distance: float
    utility: float

    def __post_init__(self):
        if abs(self.utility - self.gain * math.exp(-self.distance)) > 1e-12:
            raise ValueError("utility must equal gain * exp(-distance)")

    @classmethod
    def evaluate(cls, viewpoint: Viewpoint, gain: float, current: Viewpoint) -> "GainReport":
        d = current.distance_to(viewpoint)
        return cls(viewpoint, gain, d, gain * math.exp(-d))


def select_best(reports) -> Viewpoint:
    """Viewpoint of maximum utility; ties go to the lowest index."""
    reports = list(reports)
    if not reports:
        raise PlannerError("no candidate reports to select from")
    return reports[_argmax_utility(reports)].viewpoint


def _argmax_utility(reports) -> int:
    best = 0
    for i in range(1, len(reports)):
        if reports[i].utility > reports[best].utility:
            best = i
    return best


def predefined_sequence(
    kind: str,
    plant_distance: float = 0.35,
    plane_height: float = 0.7,
    plane_center=(0.35, 0.0, 0.8),
) -> list[Viewpoint]:
    """Ten fixed viewpoints scanning bottom to top in a 5x2 serpentine.

    The two columns subtend the given angular range (narrow 18 deg, wide
    54 deg) at the plant; orientations stay identity, facing the plant.
    """
    if kind not in ("narrow", "wide"):
        raise ValueError("kind must be 'narrow' or 'wide'")
    if plant_distance <= 0:
        raise ValueError("plant_distance must be positive")
    half_angle = math.radians(9.0 if kind == "narrow" else 27.0)
    span = plant_distance * math.tan(half_angle)
    cx, cy, cz = np.asarray(plane_center, dtype=np.float64)
    zs = np.linspace(cz - 0.5 * plane_height, cz + 0.5 * plane_height, 5)
    out = []
    for r, z in enumerate(zs):
        cols = (-span, span) if r % 2 == 0 else (span, -span)
        for y in cols:
            out.append(Viewpoint(np.array([cx, cy + y, z])))
    return out


# ---------------------------------------------------------------------------
# visibility and expected gain


def cast_ray(vmap: SemanticVoxelMap, origin, direction, max_range: float) -> np.ndarray:
    """Keys of voxels traversed by one ray, in traversal order.

    The ray stops after the first occupied voxel (p_o > 0.5), which is
    included; a voxel counts if the ray enters it strictly before max_range.
    """
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    flat, n = _collect_kernel(
        vmap._logodds,
        vmap._stamp,
        np.int32(vmap.next_stamp()),
        np.asarray(origin, dtype=np.float64),
        d.reshape(1, 3),
        vmap.key_min,
        vmap.dims,
        vmap.resolution,
        float(max_range),
    )
    return vmap._unflat(flat[:n])


def visible_voxels(
    vmap: SemanticVoxelMap, pose: Viewpoint, intr: CameraIntrinsics, ray_stride: int = 8
) -> np.ndarray:
    """Voxel keys expected visible from a pose (union over frustum rays).

    One ray per ray_stride-th pixel; every ray contributes each traversed
    voxel up to and including the first occupied one. Returned sorted, each
    key once.
    """
    if ray_stride < 1:
        raise ValueError("ray_stride must be >= 1")
    dirs = camera_ray_directions(intr, ray_stride) @ pose.rotation_matrix().T
    flat, n = _collect_kernel(
        vmap._logodds,
        vmap._stamp,
        np.int32(vmap.next_stamp()),
        pose.position,
        np.ascontiguousarray(dirs),
        vmap.key_min,
        vmap.dims,
        vmap.resolution,
        intr.max_range,
    )
    keys = vmap._unflat(np.sort(flat[:n]))
    return keys


def expected_gain(
    vmap: SemanticVoxelMap,
    pose: Viewpoint,
    attention: AttentionState | None,
    intr: CameraIntrinsics,
    mode: str = "semantic",
    ray_stride: int = 8,
    mask: np.ndarray | None = None,
    attention_enabled: bool = True,
) -> float:
    """Expected information gain of moving the camera to a pose.

    Semantic mode sums the class-confidence entropy of visible attended
    voxels that are not confidently free (p_o >= 0.5 or unknown); the
    volumetric mode sums occupancy entropy and considers only main-stem
    attention regions. A prebuilt mask may be passed to amortize region
    rasterization over many candidates.
    """
    if mode not in ("semantic", "volumetric"):
        raise ValueError(f"unknown gain mode {mode!r}")
    if attention_enabled and mask is None:
        mask = build_attention_mask(vmap, attention)
    use_mask = attention_enabled and mask is not None
    if not use_mask:
        mask = _DUMMY_MASK
    need_bits = MASK_STEM_BIT if mode == "volumetric" else (MASK_STEM_BIT | MASK_OOI_BIT)
    dirs = camera_ray_directions(intr, ray_stride) @ pose.rotation_matrix().T
    gain, _ = _gain_kernel(
        vmap._logodds,
        vmap._ps,
        mask,
        use_mask,
        np.uint8(need_bits),
        vmap._stamp,
        np.int32(vmap.next_stamp()),
        pose.position,
        np.ascontiguousarray(dirs),
        vmap.key_min,
        vmap.dims,
        vmap.resolution,
        intr.max_range,
        mode == "semantic",
    )
    return float(gain)


_DUMMY_MASK = np.zeros(1, dtype=np.uint8)


# ---------------------------------------------------------------------------
# planners


@dataclass(frozen=True)
class PlannerConfig:
    planner_kind: str = "semantic-nbv"
    constraint: SamplingConstraint = None
    n_candidates: int = 27
    a_max: int = 10
    initial_viewpoint: Viewpoint = INITIAL_VIEWPOINT
    attention_enabled: bool = True
    ray_stride: int = 8
    plant_distance: float = 0.35

    def __post_init__(self):
        if self.planner_kind not in PLANNER_KINDS:
            raise ValueError(f"unknown planner kind {self.planner_kind!r}")
        if self.n_candidates < 1 or self.a_max < 1 or self.ray_stride < 1:
            raise ValueError("n_candidates, a_max, ray_stride must be >= 1")
        if self.constraint is None:
            object.__setattr__(self, "constraint", SamplingConstraint.planar())


@dataclass(frozen=True)
class PlanStep:
    viewpoint: Viewpoint
    n_candidates: int
    chosen_index: int
    gain: float
    distance: float
    utility: float


def plan_next(
    vmap: SemanticVoxelMap,
    attention: AttentionState | None,
    current: Viewpoint,
    config: PlannerConfig,
    rng: RandomStream,
    intr: CameraIntrinsics | None = None,
    step: int = 0,
) -> Viewpoint:
    """Next viewpoint under the configured planner (see plan_next_detailed)."""
    return plan_next_detailed(vmap, attention, current, config, rng, intr, step).viewpoint


def plan_next_detailed(
    vmap: SemanticVoxelMap,
    attention: AttentionState | None,
    current: Viewpoint,
    config: PlannerConfig,
    rng: RandomStream,
    intr: CameraIntrinsics | None = None,
    step: int = 0,
) -> PlanStep:
    """One planning decision.

    NBV kinds sample candidates, score them on a frozen map snapshot, and
    take the utility argmax; the random planner picks uniformly from the
    same candidate set; predefined planners replay their fixed sequence
    (step indexes it) and never read the map.
    """
    kind = config.planner_kind
    if kind in ("predefined-narrow", "predefined-wide"):
        seq = predefined_sequence(
            kind.split("-")[1],
            config.plant_distance,
            config.constraint.height,
            config.constraint.center,
        )
        if step >= len(seq):
            raise PlannerError(f"predefined sequence exhausted at step {step}")
        vp = seq[step]
        return PlanStep(vp, len(seq), step, 0.0, current.distance_to(vp), 0.0)

    candidates = sample_candidates(config.constraint, config.n_candidates, rng)
    if kind == "random":
        i = int(rng.integers(len(candidates)))
        vp = candidates[i]
        return PlanStep(vp, len(candidates), i, 0.0, current.distance_to(vp), 0.0)

    if intr is None:
        intr = CameraIntrinsics.default()
    mode = "semantic" if kind == "semantic-nbv" else "volumetric"
    mask = build_attention_mask(vmap, attention) if config.attention_enabled else None
    reports = []
    for vp in candidates:
        g = expected_gain(
            vmap,
            vp,
            attention,
            intr,
            mode=mode,
            ray_stride=config.ray_stride,
            mask=mask,
            attention_enabled=config.attention_enabled and mask is not None,
        )
        reports.append(GainReport.evaluate(vp, g, current))
    best = _argmax_utility(reports)
    r = reports[best]
    return PlanStep(r.viewpoint, len(candidates), best, r.gain, r.distance, r.utility)


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, fastmath=False)
def _walk_setup(origin, dx, dy, dz, tlo, key_min, dims, res):
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
    if ci > dims[0] - 1:
        ci = dims[0] - 1
    if cj > dims[1] - 1:
        cj = dims[1] - 1
    if ck > dims[2] - 1:
        ck = dims[2] - 1
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
    return ci, cj, ck, tmax_x, tmax_y, tmax_z


@njit(cache=True, fastmath=False)
def _collect_kernel(logodds, stamp, stamp_id, origin, dirs, key_min, dims, res, max_range):
    m = dirs.shape[0]
    nx, ny, nz = dims[0], dims[1], dims[2]
    gx0 = key_min[0] * res
    gy0 = key_min[1] * res
    gz0 = key_min[2] * res
    gx1 = (key_min[0] + nx) * res
    gy1 = (key_min[1] + ny) * res
    gz1 = (key_min[2] + nz) * res
    cap = 1024
    out = np.empty(cap, dtype=np.int64)
    count = 0
    for rix in range(m):
        dx, dy, dz = dirs[rix, 0], dirs[rix, 1], dirs[rix, 2]
        tlo, thi = _clip_segment(
            origin[0], origin[1], origin[2], dx, dy, dz, max_range, gx0, gy0, gz0, gx1, gy1, gz1
        )
        if tlo > thi:
            continue
        ci, cj, ck, tmax_x, tmax_y, tmax_z = _walk_setup(
            origin, dx, dy, dz, tlo, key_min, dims, res
        )
        t = tlo
        first = True
        while first or t < thi:
            first = False
            idx = (ci * ny + cj) * nz + ck
            if stamp[idx] != stamp_id:
                stamp[idx] = stamp_id
                if count >= cap:
                    grown = np.empty(cap * 2, dtype=np.int64)
                    grown[:cap] = out
                    out = grown
                    cap *= 2
                out[count] = idx
                count += 1
            if logodds[idx] > 0.0:
                break
            if tmax_x <= tmax_y and tmax_x <= tmax_z:
                t = tmax_x
                ci += 1 if dx > 0 else -1
                if ci < 0 or ci >= nx:
                    break
                tmax_x = ((key_min[0] + ci + (1 if dx > 0 else 0)) * res - origin[0]) / dx
            elif tmax_y <= tmax_z:
                t = tmax_y
                cj += 1 if dy > 0 else -1
                if cj < 0 or cj >= ny:
                    break
                tmax_y = ((key_min[1] + cj + (1 if dy > 0 else 0)) * res - origin[1]) / dy
            else:
                t = tmax_z
                ck += 1 if dz > 0 else -1
                if ck < 0 or ck >= nz:
                    break
                tmax_z = ((key_min[2] + ck + (1 if dz > 0 else 0)) * res - origin[2]) / dz
    return out, count


@njit(cache=True, fastmath=False)
def _gain_kernel(
    logodds,
    ps,
    mask,
    use_mask,
    need_bits,
    stamp,
    stamp_id,
    origin,
    dirs,
    key_min,
    dims,
    res,
    max_range,
    semantic_mode,
):
    m = dirs.shape[0]
    nx, ny, nz = dims[0], dims[1], dims[2]
    gx0 = key_min[0] * res
    gy0 = key_min[1] * res
    gz0 = key_min[2] * res
    gx1 = (key_min[0] + nx) * res
    gy1 = (key_min[1] + ny) * res
    gz1 = (key_min[2] + nz) * res
    gain = 0.0
    n_vis = 0
    for rix in range(m):
        dx, dy, dz = dirs[rix, 0], dirs[rix, 1], dirs[rix, 2]
        tlo, thi = _clip_segment(
            origin[0], origin[1], origin[2], dx, dy, dz, max_range, gx0, gy0, gz0, gx1, gy1, gz1
        )
        if tlo > thi:
            continue
        ci, cj, ck, tmax_x, tmax_y, tmax_z = _walk_setup(
            origin, dx, dy, dz, tlo, key_min, dims, res
        )
        t = tlo
        first = True
        while first or t < thi:
            first = False
            idx = (ci * ny + cj) * nz + ck
            if stamp[idx] != stamp_id:
                stamp[idx] = stamp_id
                n_vis += 1
                attended = True
                if use_mask:
                    attended = (mask[idx] & need_bits) != 0
                if attended:
                    if semantic_mode:
                        if logodds[idx] >= 0.0:
                            p = ps[idx]
                            if 0.0 < p < 1.0:
                                gain += -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)
                    else:
                        p = 1.0 / (1.0 + math.exp(-logodds[idx]))
                        if 0.0 < p < 1.0:
                            gain += -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)
            if logodds[idx] > 0.0:
                break
            if tmax_x <= tmax_y and tmax_x <= tmax_z:
                t = tmax_x
                ci += 1 if dx > 0 else -1
                if ci < 0 or ci >= nx:
                    break
                tmax_x = ((key_min[0] + ci + (1 if dx > 0 else 0)) * res - origin[0]) / dx
            elif tmax_y <= tmax_z:
                t = tmax_y
                cj += 1 if dy > 0 else -1
                if cj < 0 or cj >= ny:
                    break
                tmax_y = ((key_min[1] + cj + (1 if dy > 0 else 0)) * res - origin[1]) / dy
            else:
                t = tmax_z
                ck += 1 if dz > 0 else -1
                if ck < 0 or ck >= nz:
                    break
                tmax_z = ((key_min[2] + ck + (1 if dz > 0 else 0)) * res - origin[2]) / dz
    return gain, n_vis
