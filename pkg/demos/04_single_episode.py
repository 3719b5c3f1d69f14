"""One full next-best-view episode, step by step.

Runs the semantic planner on a placed plant and prints the per-action
trace: detection score (PCO), cluster count, and the utility of each
planned move.
"""

from plantnbv.harness import ExperimentConfig, _episode_stream, _placed_scene, run_episode

cfg = ExperimentConfig(seed=11)
scene = _placed_scene(cfg, 0, 2)
print(
    f"plant seed {cfg.plants[0][0]} at base ({scene.plant_base[0]:.2f}, "
    f"{scene.plant_base[1]:.2f}, {scene.plant_base[2]:.2f}) with {scene.n_oois} OOIs"
)

record, state = run_episode(
    scene,
    cfg,
    _episode_stream(cfg, 0, 2, 0),
    planner_kind="semantic-nbv",
    return_state=True,
)

print(f"\n{'action':>6} {'pco':>6} {'clusters':>8} {'fp':>3} {'gain':>9} {'move':>6} {'utility':>9}")
for a in record.actions:
    print(
        f"{a.action:6d} {a.pco:6.1f} {a.n_clusters:8d} {a.n_fp:3d} "
        f"{a.gain:9.1f} {a.distance:6.3f} {a.utility:9.1f}"
    )

print(f"\nfinal PCO {record.final_pco:.1f} after {len(record.actions)} viewing actions")
print(f"camera travelled {record.travel_distance:.2f} m over {len(state.viewpoints)} viewpoints")
print(f"final map: {state.vmap.n_occupied} occupied voxels, {len(state.clusters)} clusters")
