"""Fuse noisy detections from several viewpoints into the semantic map.

Shows how occupancy and class confidence evolve: each view is rendered,
passed through the detection oracle, back-projected, and max-fused into
the voxel map. Prints per-view statistics and saves the final map export.
"""

import os

import numpy as np

from plantnbv import (
    CameraIntrinsics,
    DetectionNoise,
    RandomStream,
    SemanticVoxelMap,
    Viewpoint,
    detect,
    generate_plant,
    render_view,
    to_semantic_cloud,
)
from plantnbv.harness import DEFAULT_BOUNDS

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

scene = generate_plant(42).transformed(0.0, (0.7, 0.0, 0.8))
intr = CameraIntrinsics.default()
noise = DetectionNoise()  # default false-negative / false-positive rates
rng = RandomStream(7)

vmap = SemanticVoxelMap(DEFAULT_BOUNDS, resolution=0.003)

# a small manual arc of viewpoints across the sampling plane
viewpoints = [
    Viewpoint(np.array([0.35, y, z]))
    for y, z in [(-0.2, 0.9), (-0.1, 1.05), (0.0, 0.95), (0.1, 1.1), (0.2, 0.9)]
]

for i, pose in enumerate(viewpoints, 1):
    view = render_view(scene, pose, intr)
    seg = detect(view, noise, rng)
    cloud = to_semantic_cloud(view, seg, intr, stride=2)
    summary = vmap.integrate_cloud(cloud, pose.position)
    occupied = vmap.export_occupied()
    n_ooi = int((occupied.labels >= 0).sum())
    print(
        f"view {i}: {len(cloud):6d} points, {summary.voxels_touched:7d} voxels touched, "
        f"{vmap.n_occupied:6d} occupied ({n_ooi} with an OOI label)"
    )

path = os.path.join(OUT, "fused_map.txt")
vmap.save_text(path)
print(f"wrote {path} (format: x y z p_o c_s p_s)")
