"""Generate procedural tomato plants and render labeled views.

Builds three plants of increasing complexity, renders each from a frontal
camera, and writes depth / class-label images to demos/out/.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from plantnbv import CameraIntrinsics, PlantParams, Viewpoint, generate_plant, render_view

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

stages = [
    ("young", PlantParams(stem_height=0.62, n_nodes=4, n_trusses=1, leaflets_per_petiole=4)),
    ("mid", PlantParams(stem_height=0.70, n_nodes=6, n_trusses=2, leaflets_per_petiole=6)),
    ("mature", PlantParams(stem_height=0.80, n_nodes=8, n_trusses=3, leaflets_per_petiole=8)),
]

intr = CameraIntrinsics.default()
fig, axes = plt.subplots(2, len(stages), figsize=(4 * len(stages), 7))

for col, (name, params) in enumerate(stages):
    scene = generate_plant(seed=100 + col, params=params).transformed(0.0, (0.7, 0.0, 0.8))
    print(f"{name}: {len(scene.primitives)} primitives, {scene.n_oois} objects of interest")

    # camera on the sampling plane, looking straight at the plant
    pose = Viewpoint(np.array([0.25, 0.0, 1.0]))
    view = render_view(scene, pose, intr)

    depth = np.where(np.isfinite(view.depth), view.depth, np.nan)
    axes[0, col].imshow(depth, cmap="viridis")
    axes[0, col].set_title(f"{name}: depth")
    axes[1, col].imshow(view.labels, cmap="tab10", vmin=-1, vmax=3)
    axes[1, col].set_title("class labels (-1 bg, 0 peduncle, 1 petiole, 2 tomato)")
    for ax in (axes[0, col], axes[1, col]):
        ax.set_xticks([])
        ax.set_yticks([])

fig.tight_layout()
path = os.path.join(OUT, "plants.png")
fig.savefig(path, dpi=110)
print(f"wrote {path}")
