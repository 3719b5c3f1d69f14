"""Flat key-value experiment config files.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Unknown keys are errors. Keys:

    seed, n_jobs, a_max, n_candidates, ray_stride, cloud_stride, rotations,
    attention, known_ooi, leaflet_removal,
    uncertainty.x, uncertainty.y,
    planner.kind, planners, sampling.kind, plant.seeds,
    noise.fn_rate, noise.fp_rate, noise.min_pixels,
    noise.conf_true_lo, noise.conf_true_hi, noise.conf_false_lo, noise.conf_false_hi,
    eval.f1_threshold, eval.match_tolerance, eval.ooi_box_size, eval.downsample_resolution,
    map.resolution, cluster.min_size, cluster.max_intra,
    attention.stem_height, attention.stem_breadth, attention.ooi_box
"""

from __future__ import annotations

from dataclasses import replace

from .attention import AttentionParams
from .clustering import ClusteringParams
from .evaluation import EvalParams
from .harness import DEFAULT_PLANTS, ExperimentConfig
from .planner import PLANNER_KINDS
from .scene_sim import DetectionNoise


def _parse_bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base if base is not None else ExperimentConfig()
    noise = cfg.noise
    evalp = cfg.eval_params
    clus = cfg.clustering
    attn = cfg.attention_params
    simple = {}

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))

        if key == "seed":
            simple["seed"] = int(value)
        elif key == "n_jobs":
            simple["n_jobs"] = int(value)
        elif key == "a_max":
            simple["a_max"] = int(value)
        elif key == "n_candidates":
            simple["n_candidates"] = int(value)
        elif key == "ray_stride":
            simple["ray_stride"] = int(value)
        elif key == "cloud_stride":
            simple["cloud_stride"] = int(value)
        elif key == "rotations":
            simple["n_rotations"] = int(value)
        elif key == "attention":
            simple["attention_enabled"] = _parse_bool(value)
        elif key == "known_ooi":
            simple["known_ooi_positions"] = _parse_bool(value)
        elif key == "leaflet_removal":
            simple["leaflet_removal"] = float(value)
        elif key == "uncertainty.x":
            simple["uncertainty_x"] = float(value)
        elif key == "uncertainty.y":
            simple["uncertainty_y"] = float(value)
        elif key == "planner.kind":
            if value not in PLANNER_KINDS:
                raise ValueError(f"line {lineno}: unknown planner {value!r}")
            simple["planners"] = (value,)
        elif key == "planners":
            kinds = tuple(v.strip() for v in value.split(","))
            for k in kinds:
                if k not in PLANNER_KINDS:
                    raise ValueError(f"line {lineno}: unknown planner {k!r}")
            simple["planners"] = kinds
        elif key == "sampling.kind":
            simple["sampling_kind"] = value
        elif key == "plant.seeds":
            seeds = [int(v) for v in value.split(",")]
            params = {s: p for s, p in DEFAULT_PLANTS}
            simple["plants"] = tuple(
                (s, params.get(s, DEFAULT_PLANTS[i % len(DEFAULT_PLANTS)][1]))
                for i, s in enumerate(seeds)
            )
        elif key == "map.resolution":
            simple["map_resolution"] = float(value)
        elif key == "noise.fn_rate":
            noise = replace(noise, fn_rate=float(value))
        elif key == "noise.fp_rate":
            noise = replace(noise, fp_rate=float(value))
        elif key == "noise.min_pixels":
            noise = replace(noise, min_pixels=int(value))
        elif key == "noise.conf_true_lo":
            noise = replace(noise, confidence_range_true=(float(value), noise.confidence_range_true[1]))
        elif key == "noise.conf_true_hi":
            noise = replace(noise, confidence_range_true=(noise.confidence_range_true[0], float(value)))
        elif key == "noise.conf_false_lo":
            noise = replace(noise, confidence_range_false=(float(value), noise.confidence_range_false[1]))
        elif key == "noise.conf_false_hi":
            noise = replace(noise, confidence_range_false=(noise.confidence_range_false[0], float(value)))
        elif key == "eval.f1_threshold":
            evalp = replace(evalp, f1_threshold=float(value))
        elif key == "eval.match_tolerance":
            evalp = replace(evalp, match_tolerance=float(value))
        elif key == "eval.ooi_box_size":
            evalp = replace(evalp, ooi_box_size=float(value))
        elif key == "eval.downsample_resolution":
            evalp = replace(evalp, downsample_resolution=float(value))
        elif key == "cluster.min_size":
            clus = replace(clus, min_cluster_size=int(value))
        elif key == "cluster.max_intra":
            clus = replace(clus, max_intra_distance=float(value))
        elif key == "attention.stem_height":
            attn = replace(attn, stem_box_height=float(value))
        elif key == "attention.stem_breadth":
            attn = replace(attn, stem_box_breadth=float(value))
        elif key == "attention.ooi_box":
            attn = replace(attn, ooi_box_size=float(value))
        else:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")

    return replace(
        cfg, noise=noise, eval_params=evalp, clustering=clus, attention_params=attn, **simple
    )


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path) as f:
        return parse_config_text(f.read(), base)
