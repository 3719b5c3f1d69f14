"""Experiment driver: seeded episodes, planner sweeps, and CSV results.

One episode runs the full loop at a placed plant: render -> detect ->
semantic cloud -> map fusion -> clustering -> attention -> scoring ->
plan the next viewpoint, until PCO reaches 100 or a_max actions are spent.
A sweep crosses plants x rotations x planners, with the plant placement
shared across planners so they face identical conditions, and aggregates
the per-action PCO statistics used for planner comparison.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from .attention import AttentionParams, known_ooi_attention, update_attention
from .clustering import ClusteringParams, extract_clusters
from .evaluation import EvalParams, build_ground_truth, score_episode
from .geometry import CameraIntrinsics, RandomStream, Viewpoint, WorkspaceBounds
from .planner import (
    INITIAL_VIEWPOINT,
    PlannerConfig,
    SamplingConstraint,
    plan_next_detailed,
)
from .scene_sim import (
    DetectionNoise,
    LabeledScene,
    PlantParams,
    detect,
    generate_plant,
    render_view,
    to_semantic_cloud,
)
from .semantic_map import SemanticVoxelMap

RESULTS_HEADER = "scene,rotation,planner,seed,action,pco,n_clusters,n_fp,gain,distance,utility"
SUMMARY_HEADER = "planner,action,mean_pco,ci95,median_pco,mean_fp,n"

#: Default workspace: generous enough for the base-position uncertainty and
#: petiole reach of the default plants, tight enough to keep the map small.
DEFAULT_BOUNDS = WorkspaceBounds.from_corners(
    (0.33, -0.62, 0.75), (1.07, 0.62, 1.42), (0.7, 0.0, 0.8)
)

#: Eight default plants of varying growth stage and structural complexity.
DEFAULT_PLANTS = (
    (101, PlantParams(stem_height=0.62, n_nodes=5, leaflets_per_petiole=5, n_trusses=1)),
    (102, PlantParams(stem_height=0.70, n_nodes=6, leaflets_per_petiole=6, n_trusses=2)),
    (103, PlantParams(stem_height=0.78, n_nodes=7, leaflets_per_petiole=6, n_trusses=2)),
    (104, PlantParams(stem_height=0.66, n_nodes=6, leaflets_per_petiole=7, n_trusses=3)),
    (105, PlantParams(stem_height=0.74, n_nodes=5, leaflets_per_petiole=8, n_trusses=1)),
    (106, PlantParams(stem_height=0.80, n_nodes=8, leaflets_per_petiole=6, n_trusses=3)),
    (107, PlantParams(stem_height=0.63, n_nodes=7, leaflets_per_petiole=7, n_trusses=2)),
    (108, PlantParams(stem_height=0.72, n_nodes=8, leaflets_per_petiole=5, n_trusses=2)),
)

DEFAULT_PLANNERS = (
    "semantic-nbv",
    "volumetric-nbv",
    "predefined-wide",
    "predefined-narrow",
    "random",
)


@dataclass(frozen=True)
class ExperimentConfig:
    plants: tuple = DEFAULT_PLANTS
    n_rotations: int = 12
    planners: tuple = DEFAULT_PLANNERS
    base_position: tuple = (0.7, 0.0, 0.8)
    uncertainty_x: float = 0.1
    uncertainty_y: float = 0.3
    bounds: WorkspaceBounds = DEFAULT_BOUNDS
    map_resolution: float = 0.003
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics.default)
    noise: DetectionNoise = field(default_factory=DetectionNoise)
    eval_params: EvalParams = field(default_factory=EvalParams)
    clustering: ClusteringParams = field(default_factory=ClusteringParams)
    attention_params: AttentionParams = field(default_factory=AttentionParams)
    n_candidates: int = 27
    a_max: int = 10
    ray_stride: int = 8
    cloud_stride: int = 2
    attention_enabled: bool = True
    known_ooi_positions: bool = False
    sampling_kind: str = "planar"
    leaflet_removal: float | None = None
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if not self.plants:
            raise ValueError("need at least one plant")
        if self.n_rotations < 1 or (360 % self.n_rotations) != 0:
            raise ValueError("rotations must divide 360 degrees")
        if self.sampling_kind not in ("planar", "cylindrical-sector"):
            raise ValueError(f"unknown sampling kind {self.sampling_kind!r}")

    def sampling_constraint(self) -> SamplingConstraint:
        # Built from the *nominal* base: the planner does not know the
        # sampled plant placement.
        bx, by, bz = self.base_position
        if self.sampling_kind == "planar":
            return SamplingConstraint.planar(center=(bx - 0.35, by, bz))
        return SamplingConstraint.cylindrical_sector(center=(bx, by, bz))

    def planner_config(self, kind: str) -> PlannerConfig:
        return PlannerConfig(
            planner_kind=kind,
            constraint=self.sampling_constraint(),
            n_candidates=self.n_candidates,
            a_max=self.a_max,
            initial_viewpoint=INITIAL_VIEWPOINT,
            attention_enabled=self.attention_enabled,
            ray_stride=self.ray_stride,
        )

    def plant_scene(self, index: int) -> LabeledScene:
        seed, params = self.plants[index]
        if self.leaflet_removal is not None:
            params = replace(params, leaflet_removal=self.leaflet_removal)
        return generate_plant(seed, params)


@dataclass
class ActionRecord:
    action: int
    pco: float
    n_clusters: int
    n_fp: int
    gain: float
    distance: float
    utility: float
    n_candidates: int
    chosen_index: int
    wall_time: float


@dataclass
class EpisodeRecord:
    planner: str
    scene_seed: int
    rotation: int
    actions: list

    @property
    def final_pco(self) -> float:
        return self.actions[-1].pco if self.actions else 0.0

    def pco_at(self, action: int) -> float:
        """PCO after `action` viewing actions (carried forward past early stop)."""
        value = 0.0
        for rec in self.actions:
            if rec.action <= action:
                value = rec.pco
        return value

    @property
    def travel_distance(self) -> float:
        return sum(rec.distance for rec in self.actions)


def false_positive_count(clusters, scene: LabeledScene, tolerance: float) -> int:
    """Clusters farther than tolerance from every same-class true center."""
    n = 0
    for c in clusters:
        same = scene.ooi_centers[scene.ooi_classes == c.class_label]
        if len(same) == 0 or np.min(np.linalg.norm(same - c.center, axis=1)) > tolerance:
            n += 1
    return n


@dataclass
class EpisodeState:
    """Final in-memory artifacts of an episode, for dumps and inspection."""

    vmap: SemanticVoxelMap
    clusters: list
    attention: object
    viewpoints: list


def run_episode(
    scene: LabeledScene,
    config: ExperimentConfig,
    rng: RandomStream,
    planner_kind: str | None = None,
    scene_seed: int = -1,
    rotation: int = -1,
    return_state: bool = False,
):
    """One seeded episode of at most a_max viewing actions on a placed scene.

    Deterministic in (scene, rng stream). Scoring runs after every action as
    instrumentation; the planner itself never sees the scores. The gain,
    distance, and utility recorded for an action describe the planning
    decision that produced its viewpoint (zeros for the initial one).
    """
    kind = planner_kind or config.planners[0]
    pconfig = config.planner_config(kind)
    vmap = SemanticVoxelMap(config.bounds, resolution=config.map_resolution)
    ground_truth = build_ground_truth(scene, config.eval_params)
    current = pconfig.initial_viewpoint
    attention = None
    clusters = []
    viewpoints = [current]
    records: list[ActionRecord] = []
    pending = None  # PlanStep that produced the upcoming action's viewpoint

    for action in range(1, config.a_max + 1):
        t0 = time.perf_counter()
        view = render_view(scene, current, config.intrinsics)
        seg = detect(view, config.noise, rng)
        cloud = to_semantic_cloud(view, seg, config.intrinsics, stride=config.cloud_stride)
        if len(cloud):
            vmap.integrate_cloud(cloud, current.position)
        clusters = extract_clusters(vmap, config.clustering)
        attention = update_attention(
            vmap, clusters, config.bounds, config.attention_params, prev=attention
        )
        planning_attention = attention
        if config.known_ooi_positions:
            planning_attention = known_ooi_attention(
                attention, scene.ooi_centers, config.attention_params
            )
        _, pco = score_episode(vmap, scene, clusters, config.eval_params, ground_truth)
        n_fp = false_positive_count(clusters, scene, config.eval_params.ooi_box_size)
        records.append(
            ActionRecord(
                action=action,
                pco=pco,
                n_clusters=len(clusters),
                n_fp=n_fp,
                gain=pending.gain if pending else 0.0,
                distance=pending.distance if pending else 0.0,
                utility=pending.utility if pending else 0.0,
                n_candidates=pending.n_candidates if pending else 0,
                chosen_index=pending.chosen_index if pending else -1,
                wall_time=time.perf_counter() - t0,
            )
        )
        if pco >= 100.0 or action == config.a_max:
            break
        pending = plan_next_detailed(
            vmap, planning_attention, current, pconfig, rng, config.intrinsics, step=action - 1
        )
        current = pending.viewpoint
        viewpoints.append(current)

    record = EpisodeRecord(kind, scene_seed, rotation, records)
    if return_state:
        return record, EpisodeState(vmap, clusters, attention, viewpoints)
    return record


def _episode_stream(config: ExperimentConfig, si: int, ri: int, pi: int) -> RandomStream:
    return RandomStream(config.seed).child(si).child(ri).child(1 + pi)


def _placed_scene(config: ExperimentConfig, si: int, ri: int) -> LabeledScene:
    scene = config.plant_scene(si)
    place = RandomStream(config.seed).child(si).child(ri).child(0)
    dx = place.uniform(-config.uncertainty_x, config.uncertainty_x)
    dy = place.uniform(-config.uncertainty_y, config.uncertainty_y)
    yaw = ri * (2.0 * math.pi / config.n_rotations)
    base = np.asarray(config.base_position, dtype=np.float64) + np.array([dx, dy, 0.0])
    return scene.transformed(yaw, base)


def _run_one(config: ExperimentConfig, si: int, ri: int, pi: int) -> EpisodeRecord:
    scene = _placed_scene(config, si, ri)
    rng = _episode_stream(config, si, ri, pi)
    return run_episode(
        scene,
        config,
        rng,
        planner_kind=config.planners[pi],
        scene_seed=config.plants[si][0],
        rotation=ri,
    )


@dataclass
class SweepResult:
    config: ExperimentConfig
    episodes: list

    @property
    def n_episodes(self) -> int:
        return len(self.episodes)

    def rows(self):
        """Per-action result rows, carried forward to a_max after early stop.

        Rows past an episode's termination repeat its final state with zero
        gain/distance/utility (the camera no longer moves).
        """
        out = []
        for ep in self.episodes:
            last = None
            by_action = {rec.action: rec for rec in ep.actions}
            for action in range(1, self.config.a_max + 1):
                rec = by_action.get(action)
                if rec is not None:
                    last = rec
                    out.append(
                        (ep.scene_seed, ep.rotation, ep.planner, self.config.seed, action,
                         rec.pco, rec.n_clusters, rec.n_fp, rec.gain, rec.distance, rec.utility)
                    )
                else:
                    out.append(
                        (ep.scene_seed, ep.rotation, ep.planner, self.config.seed, action,
                         last.pco, last.n_clusters, last.n_fp, 0.0, 0.0, 0.0)
                    )
        return out

    def results_csv(self) -> str:
        lines = [RESULTS_HEADER]
        for r in self.rows():
            lines.append(
                f"{r[0]},{r[1]},{r[2]},{r[3]},{r[4]},"
                f"{r[5]:.4f},{r[6]},{r[7]},{r[8]:.6f},{r[9]:.6f},{r[10]:.6f}"
            )
        return "\n".join(lines) + "\n"

    def summary(self):
        """Mean PCO with 95% CI, median PCO, and mean false positives per
        (planner, action), pooled over all episodes of that planner."""
        table = []
        planners = list(dict.fromkeys(ep.planner for ep in self.episodes))
        for planner in planners:
            eps = [ep for ep in self.episodes if ep.planner == planner]
            for action in range(1, self.config.a_max + 1):
                pcos = np.array([ep.pco_at(action) for ep in eps])
                fps = np.array([_carried(ep, action).n_fp for ep in eps], dtype=np.float64)
                n = len(pcos)
                mean = float(pcos.mean())
                ci = float(1.96 * pcos.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
                table.append(
                    {
                        "planner": planner,
                        "action": action,
                        "mean_pco": mean,
                        "ci95": ci,
                        "median_pco": float(np.median(pcos)),
                        "mean_fp": float(fps.mean()),
                        "n": n,
                    }
                )
        return table

    def summary_csv(self) -> str:
        lines = [SUMMARY_HEADER]
        for row in self.summary():
            lines.append(
                f"{row['planner']},{row['action']},{row['mean_pco']:.4f},{row['ci95']:.4f},"
                f"{row['median_pco']:.4f},{row['mean_fp']:.4f},{row['n']}"
            )
        return "\n".join(lines) + "\n"

    def mean_pco(self, planner: str, action: int) -> float:
        for row in self.summary():
            if row["planner"] == planner and row["action"] == action:
                return row["mean_pco"]
        raise KeyError(f"no summary row for {planner!r} action {action}")

    def save(self, out_dir):
        import os

        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "results.csv"), "w") as f:
            f.write(self.results_csv())
        with open(os.path.join(out_dir, "summary.csv"), "w") as f:
            f.write(self.summary_csv())


def _carried(ep: EpisodeRecord, action: int) -> ActionRecord:
    rec = ep.actions[0]
    for r in ep.actions:
        if r.action <= action:
            rec = r
    return rec


def run_sweep(config: ExperimentConfig) -> SweepResult:
    """Cross product plants x rotations x planners, optionally in parallel.

    Episodes use derived random streams keyed by (plant, rotation, planner),
    so the result is byte-identical regardless of n_jobs or execution order.
    """
    tasks = [
        (si, ri, pi)
        for si in range(len(config.plants))
        for ri in range(config.n_rotations)
        for pi in range(len(config.planners))
    ]
    if config.n_jobs == 1:
        episodes = [_run_one(config, *t) for t in tasks]
    else:
        episodes = Parallel(n_jobs=config.n_jobs)(
            delayed(_run_one)(config, *t) for t in tasks
        )
    return SweepResult(config, list(episodes))
