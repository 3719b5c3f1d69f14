"""Command line entry points.

Subcommands: generate-plant (write a scene file), run (one episode),
sweep (full experiment grid), score (offline rescoring of a map export).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .attention import format_regions
from .clustering import extract_clusters
from .config import load_config
from .evaluation import format_scores, score_episode
from .harness import ExperimentConfig, run_episode, run_sweep, _placed_scene, _episode_stream
from .scene_sim import LabeledScene, PlantParams, generate_plant
from .semantic_map import SemanticVoxelMap


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    from dataclasses import replace

    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "planner", None):
        cfg = replace(cfg, planners=(args.planner,))
    return cfg


def _cmd_generate_plant(args) -> int:
    params = PlantParams(
        stem_height=args.stem_height,
        n_nodes=args.nodes,
        leaflets_per_petiole=args.leaflets,
        n_trusses=args.trusses,
        leaflet_removal=args.leaflet_removal,
    )
    scene = generate_plant(args.seed, params)
    scene.save_text(args.out)
    scene.save_ground_truth(args.out + ".gt")
    print(f"wrote {len(scene.primitives)} primitives to {args.out} "
          f"({scene.n_oois} OOIs listed in {args.out}.gt)")
    return 0


def _cmd_run(args) -> int:
    cfg = _load(args)
    scene = _placed_scene(cfg, 0, 0)
    rng = _episode_stream(cfg, 0, 0, 0)
    record, state = run_episode(scene, cfg, rng, planner_kind=cfg.planners[0],
                                scene_seed=cfg.plants[0][0], rotation=0, return_state=True)
    os.makedirs(args.out, exist_ok=True)
    for rec in record.actions:
        print(f"action {rec.action}: pco={rec.pco:.1f} clusters={rec.n_clusters} fp={rec.n_fp}")

    scores, pco = score_episode(state.vmap, scene, state.clusters, cfg.eval_params)
    with open(os.path.join(args.out, "episode_scores.csv"), "w") as f:
        f.write("action,ooi_id,class,f1,detected,pco\n")
        f.write(format_scores(len(record.actions), scores, pco))
    with open(os.path.join(args.out, "regions.txt"), "w") as f:
        f.write(format_regions(state.attention) if state.attention else "")
    if args.dump_map:
        state.vmap.save_text(os.path.join(args.out, "map.txt"))
    if args.dump_clusters:
        with open(os.path.join(args.out, "clusters.txt"), "w") as f:
            for c in state.clusters:
                f.write(f"{c.class_label} {c.center[0]:.6f} {c.center[1]:.6f} "
                        f"{c.center[2]:.6f} {c.size}\n")
    print(f"final pco {record.final_pco:.1f} after {len(record.actions)} actions -> {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    result = run_sweep(cfg)
    result.save(args.out)
    for row in result.summary():
        if row["action"] == cfg.a_max:
            print(f"{row['planner']:>18}: mean PCO {row['mean_pco']:6.2f} "
                  f"+- {row['ci95']:.2f} (median {row['median_pco']:.1f}) at action {cfg.a_max}")
    print(f"{result.n_episodes} episodes -> {args.out}/results.csv, {args.out}/summary.csv")
    return 0


def _cmd_score(args) -> int:
    cfg = _load(args)
    scene = LabeledScene.load_text(args.scene)
    vmap = SemanticVoxelMap.from_text(args.map, resolution=cfg.map_resolution, bounds=cfg.bounds)
    clusters = extract_clusters(vmap, cfg.clustering)
    scores, pco = score_episode(vmap, scene, clusters, cfg.eval_params)
    out = args.out or "-"
    text = "action,ooi_id,class,f1,detected,pco\n" + format_scores(0, scores, pco)
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as f:
            f.write(text)
    print(f"pco {pco:.1f} over {len(scores)} OOIs", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plantnbv",
                                     description="semantics-aware next-best-view planning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-plant", help="write a procedural labeled plant scene")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stem-height", type=float, default=0.7, dest="stem_height")
    p.add_argument("--nodes", type=int, default=6)
    p.add_argument("--leaflets", type=int, default=6)
    p.add_argument("--trusses", type=int, default=2)
    p.add_argument("--leaflet-removal", type=float, default=0.0, dest="leaflet_removal")
    p.set_defaults(func=_cmd_generate_plant)

    p = sub.add_parser("run", help="run one planning episode")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--planner")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-clusters", action="store_true", dest="dump_clusters")
    p.add_argument("--dump-map", action="store_true", dest="dump_map")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run the full experiment grid")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("score", help="rescore a dumped map against a scene file")
    p.add_argument("--map", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_score)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
