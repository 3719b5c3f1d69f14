"""Semantics-aware next-best-view planning at desk scale.

The package closes the loop sense -> semantic fusion -> clustering ->
attention -> viewpoint selection against a procedural plant simulator, and
ships the experiment harness used to compare planners.
"""

from .geometry import (
    CameraIntrinsics,
    OrientedBox,
    RandomStream,
    Viewpoint,
    WorkspaceBounds,
    box_contains,
    pixel_to_ray,
    transform_point,
)
from .semantic_map import (
    CLASS_BACKGROUND,
    CLASS_PEDUNCLE,
    CLASS_PETIOLE,
    CLASS_TOMATO,
    OOI_CLASSES,
    SemanticCloud,
    SemanticPoint,
    SemanticVoxel,
    SemanticVoxelMap,
    binary_entropy,
    max_fusion,
    occupancy_entropy,
    semantic_entropy,
)
from .scene_sim import (
    DetectionNoise,
    LabeledPrimitive,
    LabeledScene,
    PlantParams,
    RenderedView,
    Segmentation,
    detect,
    generate_plant,
    render_view,
    sample_surface_points,
    to_semantic_cloud,
)
from .clustering import (
    Cluster,
    ClusteringParams,
    OpticsOrdering,
    diff_clusters,
    extract_clusters,
    optics_order,
)
from .attention import (
    AttentionParams,
    AttentionPhase,
    AttentionState,
    build_attention_mask,
    in_attention,
    update_attention,
)
from .planner import (
    INITIAL_VIEWPOINT,
    GainReport,
    PlannerConfig,
    PlannerError,
    SamplingConstraint,
    cast_ray,
    expected_gain,
    plan_next,
    predefined_sequence,
    sample_candidates,
    select_best,
    utility,
    visible_voxels,
)
from .evaluation import (
    EvalParams,
    OoiScore,
    extract_ooi_points,
    f1_score,
    score_episode,
    voxel_downsample,
)
from .harness import (
    EpisodeRecord,
    ExperimentConfig,
    false_positive_count,
    run_episode,
    run_sweep,
)

__version__ = "0.1.0"
