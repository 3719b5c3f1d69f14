"""Object-level clustering and the attention regions built from it.

After a few fused views, occupied OOI voxels are clustered per class and
the attention set is derived: main-stem boxes tiling the stem-attached
clusters plus a fixed-size cube per detected object.
"""

import os

import numpy as np

from plantnbv import (
    AttentionParams,
    CameraIntrinsics,
    ClusteringParams,
    DetectionNoise,
    RandomStream,
    SemanticVoxelMap,
    Viewpoint,
    detect,
    extract_clusters,
    generate_plant,
    render_view,
    to_semantic_cloud,
    update_attention,
)
from plantnbv.attention import format_regions
from plantnbv.harness import DEFAULT_BOUNDS

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

CLASS_NAMES = {0: "peduncle", 1: "petiole", 2: "tomato"}

scene = generate_plant(23).transformed(0.5, (0.72, -0.05, 0.8))
intr = CameraIntrinsics.default()
rng = RandomStream(3)
vmap = SemanticVoxelMap(DEFAULT_BOUNDS, resolution=0.003)

attention = None
for i, (y, z) in enumerate([(-0.15, 0.95), (0.0, 1.0), (0.15, 1.05)], 1):
    pose = Viewpoint(np.array([0.35, y, z]))
    view = render_view(scene, pose, intr)
    seg = detect(view, DetectionNoise(), rng)
    cloud = to_semantic_cloud(view, seg, intr, stride=2)
    vmap.integrate_cloud(cloud, pose.position)

    clusters = extract_clusters(vmap, ClusteringParams())
    attention = update_attention(vmap, clusters, DEFAULT_BOUNDS, AttentionParams(), prev=attention)
    print(f"after view {i}: {len(clusters)} clusters, attention phase {attention.phase.name}")
    for c in clusters:
        print(
            f"  {CLASS_NAMES[c.class_label]:>9}: {c.size:4d} voxels "
            f"at ({c.center[0]:.3f}, {c.center[1]:.3f}, {c.center[2]:.3f})"
        )

print(f"\ntrue OOI count: {scene.n_oois}")
path = os.path.join(OUT, "attention_regions.txt")
with open(path, "w") as f:
    f.write(format_regions(attention))
print(f"wrote {path} (format: tag cx cy cz hx hy hz qx qy qz qw)")
