"""Desk-scale planner comparison: mean PCO per viewing action.

Runs a reduced sweep (3 plants x 4 rotations x all five planners) and
plots the mean PCO curves with 95% confidence bands, the desk-scale
counterpart of the full planner-comparison experiment. The full grid is
`plantnbv sweep` or ExperimentConfig() with all 8 plants x 12 rotations.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from plantnbv.harness import DEFAULT_PLANTS, ExperimentConfig, run_sweep

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

cfg = ExperimentConfig(plants=DEFAULT_PLANTS[:3], n_rotations=4, n_jobs=2, seed=5)
print(f"running {len(cfg.plants) * cfg.n_rotations * len(cfg.planners)} episodes...")
result = run_sweep(cfg)

result.save(OUT)
print(f"wrote {OUT}/results.csv and {OUT}/summary.csv")

colors = {
    "semantic-nbv": "#2c7fb8",
    "volumetric-nbv": "#7fcdbb",
    "predefined-wide": "#fdae61",
    "predefined-narrow": "#d7191c",
    "random": "#999999",
}
fig, ax = plt.subplots(figsize=(7, 4.5))
summary = result.summary()
for planner in cfg.planners:
    rows = [r for r in summary if r["planner"] == planner]
    actions = [r["action"] for r in rows]
    means = [r["mean_pco"] for r in rows]
    ci = [r["ci95"] for r in rows]
    ax.plot(actions, means, label=planner, color=colors[planner])
    ax.fill_between(
        actions,
        [m - c for m, c in zip(means, ci)],
        [m + c for m, c in zip(means, ci)],
        color=colors[planner],
        alpha=0.15,
    )
    print(f"{planner:>18}: mean PCO {means[-1]:5.1f} at action {actions[-1]}")

ax.set_xlabel("viewing action")
ax.set_ylabel("mean PCO [%]")
ax.set_ylim(0, 100)
ax.legend(loc="lower right", fontsize=8)
ax.grid(alpha=0.3)
fig.tight_layout()
path = os.path.join(OUT, "planner_comparison.png")
fig.savefig(path, dpi=120)
print(f"wrote {path}")
