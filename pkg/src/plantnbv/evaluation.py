"""Reconstruction scoring: per-OOI surface F1 and the percentage of
correctly-detected objects (PCO).

The protocol mirrors the simulation evaluation: the ground-truth scene is
converted to a surface point cloud at the map resolution, both clouds are
voxel-grid downsampled, per-OOI points are cut out with a fixed-size box at
the true object center, and precision/recall are computed under a distance
tolerance. An object counts as detected when its class is confirmed by a
cluster near the true center and at least the F1 threshold of it has been
reconstructed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .scene_sim import LabeledScene, sample_surface_points
from .semantic_map import SemanticVoxelMap


@dataclass(frozen=True)
class EvalParams:
    f1_threshold: float = 0.5
    match_tolerance: float = 0.003
    ooi_box_size: float = 0.03
    downsample_resolution: float = 0.003

    def __post_init__(self):
        if min(self.match_tolerance, self.ooi_box_size, self.downsample_resolution) <= 0:
            raise ValueError("tolerances and sizes must be positive")
        if not 0.0 < self.f1_threshold <= 1.0:
            raise ValueError("f1_threshold must be in (0, 1]")

    @classmethod
    def real_scale(cls) -> "EvalParams":
        """Protocol used for larger, noisier reconstructions."""
        return cls(f1_threshold=0.625, match_tolerance=0.006, ooi_box_size=0.04,
                   downsample_resolution=0.006)


@dataclass(frozen=True)
class OoiScore:
    ooi_id: int
    class_label: int
    gt_center: np.ndarray
    f1: float
    class_confirmed: bool
    detected: bool


def voxel_downsample(points, resolution: float) -> np.ndarray:
    """One representative point (cell centroid) per occupied grid cell."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return pts
    keys = np.floor(pts / resolution).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, pts)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    return sums / counts[:, None]


def extract_ooi_points(points, center, box_size: float) -> np.ndarray:
    """Points inside the axis-aligned cube of side box_size around center."""
    if box_size <= 0:
        raise ValueError("box_size must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return pts
    c = np.asarray(center, dtype=np.float64)
    mask = np.all(np.abs(pts - c) <= 0.5 * box_size, axis=1)
    return pts[mask]


def f1_score(reconstructed, ground_truth, tolerance: float) -> float:
    """Surface F1: precision and recall of point sets under a tolerance.

    Precision is the fraction of reconstructed points within tolerance of
    some ground-truth point; recall the converse. Empty sets score 0.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    recon = np.asarray(reconstructed, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(ground_truth, dtype=np.float64).reshape(-1, 3)
    if len(recon) == 0 or len(gt) == 0:
        return 0.0
    d_r, _ = cKDTree(gt).query(recon)
    d_g, _ = cKDTree(recon).query(gt)
    precision = float(np.mean(d_r <= tolerance))
    recall = float(np.mean(d_g <= tolerance))
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class OoiGroundTruth:
    ooi_id: int
    class_label: int
    center: np.ndarray
    points: np.ndarray


def build_ground_truth(scene: LabeledScene, params: EvalParams) -> list[OoiGroundTruth]:
    """Per-OOI ground-truth point sets, following the scoring protocol.

    The whole scene's surface is sampled at the downsample resolution,
    voxel-grid filtered, and cut per OOI by the evaluation box, so stray
    surfaces of neighbouring parts end up in the box for ground truth and
    reconstruction alike.
    """
    full = np.vstack(
        [sample_surface_points(p, params.downsample_resolution) for p in scene.primitives]
    )
    full = voxel_downsample(full, params.downsample_resolution)
    out = []
    for i in range(scene.n_oois):
        pts = extract_ooi_points(full, scene.ooi_centers[i], params.ooi_box_size)
        out.append(
            OoiGroundTruth(
                int(scene.ooi_instance_ids[i]),
                int(scene.ooi_classes[i]),
                scene.ooi_centers[i].copy(),
                pts,
            )
        )
    return out


def score_episode(
    vmap: SemanticVoxelMap,
    scene: LabeledScene,
    clusters,
    params: EvalParams,
    ground_truth: list[OoiGroundTruth] | None = None,
):
    """Score the current reconstruction; returns (per-OOI scores, PCO).

    Class confirmation requires a cluster of the OOI's class whose center
    lies within ooi_box_size of the true center. ground_truth may be passed
    to amortize surface sampling across an episode.
    """
    if scene.n_oois == 0:
        raise ValueError("scene contains no objects of interest")
    if ground_truth is None:
        ground_truth = build_ground_truth(scene, params)
    recon = voxel_downsample(vmap.export_occupied().positions, params.downsample_resolution)
    by_class: dict[int, list[np.ndarray]] = {}
    for c in clusters:
        by_class.setdefault(c.class_label, []).append(c.center)

    scores = []
    n_detected = 0
    for gt in ground_truth:
        recon_pts = extract_ooi_points(recon, gt.center, params.ooi_box_size)
        f1 = f1_score(recon_pts, gt.points, params.match_tolerance)
        confirmed = any(
            np.linalg.norm(center - gt.center) <= params.ooi_box_size
            for center in by_class.get(gt.class_label, ())
        )
        detected = bool(confirmed and f1 >= params.f1_threshold)
        n_detected += detected
        scores.append(OoiScore(gt.ooi_id, gt.class_label, gt.center, f1, confirmed, detected))
    pco = 100.0 * n_detected / len(ground_truth)
    return scores, pco


def format_scores(action: int, scores, pco: float) -> str:
    """CSV rows `action,ooi_id,class,f1,detected,pco` for one viewing action."""
    lines = []
    for s in scores:
        lines.append(f"{action},{s.ooi_id},{s.class_label},{s.f1:.6f},{int(s.detected)},{pco:.4f}")
    return "\n".join(lines) + ("\n" if lines else "")
