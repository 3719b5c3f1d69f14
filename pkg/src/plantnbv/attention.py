"""Attention regions gating which voxels contribute to viewpoint gain.

The region set combines main-stem boxes (estimated from whatever is known
about the plant so far) and fixed-size cubes around detected OOI clusters.
Estimation advances through four phases as information accumulates and
never regresses within an episode:

* no-info: nothing observed; planning runs unrestricted.
* visible-region: stem box centered on the mean of occupied voxels.
* tomato-centered: stem box centered on the mean of tomato clusters.
* ooi-segmented: oriented boxes tiling consecutive stem-attached clusters
  plus caps to the top and bottom of the workspace.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import njit

from .clustering import Cluster
from .geometry import OrientedBox, WorkspaceBounds, box_contains, quat_between, quat_to_matrix
from .semantic_map import CLASS_PEDUNCLE, CLASS_PETIOLE, CLASS_TOMATO, SemanticVoxelMap

TAG_MAIN_STEM = "main-stem"
TAG_OOI = "ooi"

MASK_STEM_BIT = 1
MASK_OOI_BIT = 2

_STEM_ATTACHED = (CLASS_PEDUNCLE, CLASS_PETIOLE)


class AttentionPhase(IntEnum):
    NO_INFO = 0
    VISIBLE_REGION = 1
    TOMATO_CENTERED = 2
    OOI_SEGMENTED = 3


@dataclass(frozen=True)
class AttentionParams:
    stem_box_height: float = 0.7
    stem_box_breadth: float = 0.05
    ooi_box_size: float = 0.03

    def __post_init__(self):
        if min(self.stem_box_height, self.stem_box_breadth, self.ooi_box_size) <= 0:
            raise ValueError("attention parameters must be positive")


@dataclass(frozen=True)
class AttentionState:
    phase: AttentionPhase
    regions: tuple  # of (tag, OrientedBox)

    def boxes(self, tag=None):
        return [box for t, box in self.regions if tag is None or t == tag]

    @property
    def n_regions(self) -> int:
        return len(self.regions)


EMPTY_ATTENTION = AttentionState(AttentionPhase.NO_INFO, ())


def _stem_box(center, params: AttentionParams) -> OrientedBox:
    half = np.array(
        [0.5 * params.stem_box_breadth, 0.5 * params.stem_box_breadth, 0.5 * params.stem_box_height]
    )
    return OrientedBox(np.asarray(center, dtype=np.float64), half)


def _ooi_cubes(clusters, params: AttentionParams):
    half = np.full(3, 0.5 * params.ooi_box_size)
    return [(TAG_OOI, OrientedBox(c.center.copy(), half)) for c in clusters]


def update_attention(
    vmap: SemanticVoxelMap,
    clusters: list,
    bounds: WorkspaceBounds,
    params: AttentionParams,
    prev: AttentionState | None = None,
) -> AttentionState:
    """Rebuild the attention regions from the current map and clusters.

    Passing the previous state keeps the phase monotone: if clusters vanish
    momentarily, the last main-stem estimate is retained (OOI cubes always
    track the current clusters, so a lost cluster loses its cube).
    """
    _, centers, _, _ = vmap.occupied_info()
    lo, hi = bounds.min_corner, bounds.max_corner
    if len(centers):
        in_bounds = np.all((centers >= lo) & (centers <= hi), axis=1)
        occupied = centers[in_bounds]
    else:
        occupied = centers

    stem_clusters = [c for c in clusters if c.class_label in _STEM_ATTACHED]
    tomato_clusters = [c for c in clusters if c.class_label == CLASS_TOMATO]

    if stem_clusters:
        phase = AttentionPhase.OOI_SEGMENTED
        stem_regions = _stem_tiling(stem_clusters, bounds, params)
    elif tomato_clusters:
        phase = AttentionPhase.TOMATO_CENTERED
        centre = np.mean([c.center for c in tomato_clusters], axis=0)
        stem_regions = [(TAG_MAIN_STEM, _stem_box(centre, params))]
    elif len(occupied):
        phase = AttentionPhase.VISIBLE_REGION
        stem_regions = [(TAG_MAIN_STEM, _stem_box(occupied.mean(axis=0), params))]
    else:
        phase = AttentionPhase.NO_INFO
        stem_regions = []

    if prev is not None and prev.phase > phase:
        phase = prev.phase
        stem_regions = [(t, b) for t, b in prev.regions if t == TAG_MAIN_STEM]

    regions = tuple(stem_regions) + tuple(_ooi_cubes(clusters, params))
    if phase == AttentionPhase.NO_INFO:
        regions = ()
    return AttentionState(phase, regions)


def _stem_tiling(stem_clusters, bounds: WorkspaceBounds, params: AttentionParams):
    """Oriented boxes joining consecutive stem-attached clusters, plus caps."""
    ordered = sorted(
        stem_clusters, key=lambda c: (c.center[2], c.center[0], c.center[1], c.class_label)
    )
    b = 0.5 * params.stem_box_breadth
    regions = []
    for a, c in zip(ordered[:-1], ordered[1:]):
        d = c.center - a.center
        dist = float(np.linalg.norm(d))
        if dist < 1e-9:
            continue
        q = quat_between(np.array([0.0, 0.0, 1.0]), d / dist)
        box = OrientedBox(0.5 * (a.center + c.center), np.array([b, b, 0.5 * dist]), q)
        regions.append((TAG_MAIN_STEM, box))
    # Caps keep the planner exploring the stem line to the workspace limits.
    z_hi = bounds.max_corner[2]
    z_lo = bounds.min_corner[2]
    top = ordered[-1].center
    bot = ordered[0].center
    top_h = max(z_hi - top[2], 0.01)
    bot_h = max(bot[2] - z_lo, 0.01)
    regions.append(
        (TAG_MAIN_STEM, OrientedBox(np.array([top[0], top[1], top[2] + 0.5 * top_h]), np.array([b, b, 0.5 * top_h])))
    )
    regions.append(
        (TAG_MAIN_STEM, OrientedBox(np.array([bot[0], bot[1], bot[2] - 0.5 * bot_h]), np.array([b, b, 0.5 * bot_h])))
    )
    return regions


def in_attention(state: AttentionState, p) -> bool:
    """Union membership over the regions; always true before any information."""
    if state.phase == AttentionPhase.NO_INFO:
        return True
    return any(box_contains(box, p) for _, box in state.regions)


def known_ooi_attention(
    state: AttentionState, ooi_centers, params: AttentionParams
) -> AttentionState:
    """Attention state for the known-OOI-positions ablation.

    With every OOI position given there is nothing left to search for, so
    the ground-truth cubes are the whole attention set: they replace both
    the cluster-derived cubes and the exploratory main-stem boxes, and are
    active from the first action (phase forced to ooi-segmented).
    """
    half = np.full(3, 0.5 * params.ooi_box_size)
    gt_cubes = tuple(
        (TAG_OOI, OrientedBox(np.asarray(c, dtype=np.float64), half)) for c in ooi_centers
    )
    return AttentionState(AttentionPhase.OOI_SEGMENTED, gt_cubes)


def build_attention_mask(vmap: SemanticVoxelMap, state: AttentionState | None):
    """Rasterize the regions onto the map grid (bit 1 stem, bit 2 ooi).

    Returns None when attention does not restrict gain (no state yet or
    no-info phase), which callers treat as an all-pass mask.
    """
    if state is None or state.phase == AttentionPhase.NO_INFO:
        return None
    mask = np.zeros(int(np.prod(vmap.dims)), dtype=np.uint8)
    for tag, box in state.regions:
        bit = MASK_STEM_BIT if tag == TAG_MAIN_STEM else MASK_OOI_BIT
        rot = quat_to_matrix(box.orientation)
        lo, hi = box.world_aabb()
        k0 = np.maximum(np.floor(lo / vmap.resolution).astype(np.int64) - vmap.key_min, 0)
        k1 = np.minimum(
            np.floor(hi / vmap.resolution).astype(np.int64) - vmap.key_min, vmap.dims - 1
        )
        if np.any(k0 > k1):
            continue
        _fill_box_mask(
            mask,
            vmap.key_min,
            vmap.dims,
            vmap.resolution,
            box.center,
            box.half_extents,
            np.ascontiguousarray(rot),
            k0,
            k1,
            np.uint8(bit),
        )
    return mask


def format_regions(state: AttentionState) -> str:
    """Region dump: `tag cx cy cz hx hy hz qx qy qz qw` per line."""
    lines = []
    for tag, box in state.regions:
        c, h, q = box.center, box.half_extents, box.orientation
        lines.append(
            f"{tag} {c[0]:.6f} {c[1]:.6f} {c[2]:.6f} "
            f"{h[0]:.6f} {h[1]:.6f} {h[2]:.6f} "
            f"{q[0]:.6f} {q[1]:.6f} {q[2]:.6f} {q[3]:.6f}"
        )
    return "\n".join(lines) + ("\n" if lines else "")


@njit(cache=True)
def _fill_box_mask(mask, key_min, dims, res, center, half, rot, k0, k1, bit):
    ny, nz = dims[1], dims[2]
    for i in range(k0[0], k1[0] + 1):
        cx = (key_min[0] + i + 0.5) * res - center[0]
        for j in range(k0[1], k1[1] + 1):
            cy = (key_min[1] + j + 0.5) * res - center[1]
            for k in range(k0[2], k1[2] + 1):
                cz = (key_min[2] + k + 0.5) * res - center[2]
                # local = R^T (c - center)
                lx = rot[0, 0] * cx + rot[1, 0] * cy + rot[2, 0] * cz
                if abs(lx) > half[0]:
                    continue
                ly = rot[0, 1] * cx + rot[1, 1] * cy + rot[2, 1] * cz
                if abs(ly) > half[1]:
                    continue
                lz = rot[0, 2] * cx + rot[1, 2] * cy + rot[2, 2] * cz
                if abs(lz) > half[2]:
                    continue
                mask[(i * ny + j) * nz + k] |= bit
    return mask
