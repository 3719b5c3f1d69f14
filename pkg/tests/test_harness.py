import math
from dataclasses import replace

import numpy as np
import pytest

from plantnbv.clustering import Cluster
from plantnbv.geometry import WorkspaceBounds
from plantnbv.harness import (
    DEFAULT_PLANTS,
    ActionRecord,
    EpisodeRecord,
    ExperimentConfig,
    SweepResult,
    _episode_stream,
    _placed_scene,
    false_positive_count,
    run_episode,
    run_sweep,
)
from plantnbv.scene_sim import (
    SHAPE_DISC,
    DetectionNoise,
    LabeledPrimitive,
    LabeledScene,
)
from plantnbv.semantic_map import CLASS_PEDUNCLE, CLASS_TOMATO


def quick_config(**kw):
    defaults = dict(plants=DEFAULT_PLANTS[:1], n_rotations=1, planners=("random",), n_jobs=1)
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestRunEpisode:
    def test_a_max_one_records_one_action(self):
        cfg = quick_config(a_max=1)
        scene = _placed_scene(cfg, 0, 0)
        rec = run_episode(scene, cfg, _episode_stream(cfg, 0, 0, 0))
        assert len(rec.actions) == 1
        assert rec.actions[0].action == 1
        assert rec.actions[0].distance == 0.0

    def test_bit_identical_repeats(self):
        cfg = quick_config(planners=("semantic-nbv",), a_max=4)
        scene = _placed_scene(cfg, 0, 0)
        r1 = run_episode(scene, cfg, _episode_stream(cfg, 0, 0, 0))
        r2 = run_episode(scene, cfg, _episode_stream(cfg, 0, 0, 0))
        assert len(r1.actions) == len(r2.actions)
        for a, b in zip(r1.actions, r2.actions):
            assert (a.pco, a.n_clusters, a.n_fp) == (b.pco, b.n_clusters, b.n_fp)
            assert (a.gain, a.distance, a.utility) == (b.gain, b.distance, b.utility)
            assert (a.n_candidates, a.chosen_index) == (b.n_candidates, b.chosen_index)

    def test_predefined_wide_detects_trivial_scene(self):
        # single forward-facing OOI disc straight ahead of the scan plane
        disc = LabeledPrimitive(
            SHAPE_DISC, np.array([0.7, 0.0, 0.8, 1.0, 0.0, 0.0, 0.012]), CLASS_TOMATO, 0
        )
        scene = LabeledScene([disc], np.array([0.7, 0.0, 0.8]))
        cfg = quick_config(
            planners=("predefined-wide",),
            noise=DetectionNoise.noiseless(),
        )
        rec = run_episode(scene, cfg, _episode_stream(cfg, 0, 0, 0))
        assert rec.final_pco == 100.0
        assert len(rec.actions) <= 10

    def test_terminates_early_at_full_pco(self):
        disc = LabeledPrimitive(
            SHAPE_DISC, np.array([0.7, 0.0, 0.8, 1.0, 0.0, 0.0, 0.012]), CLASS_TOMATO, 0
        )
        scene = LabeledScene([disc], np.array([0.7, 0.0, 0.8]))
        cfg = quick_config(planners=("semantic-nbv",), noise=DetectionNoise.noiseless())
        rec = run_episode(scene, cfg, _episode_stream(cfg, 0, 0, 0))
        assert rec.final_pco == 100.0
        assert rec.actions[-1].action == len(rec.actions)

    def test_noiseless_pco_monotone(self):
        cfg = quick_config(planners=("semantic-nbv",), noise=DetectionNoise.noiseless(), a_max=6)
        scene = _placed_scene(cfg, 0, 0)
        rec = run_episode(scene, cfg, _episode_stream(cfg, 0, 0, 0))
        pcos = [a.pco for a in rec.actions]
        assert all(b >= a - 1e-9 for a, b in zip(pcos, pcos[1:]))

    def test_travel_distance_matches_viewpoints(self):
        cfg = quick_config(planners=("random",), a_max=5)
        scene = _placed_scene(cfg, 0, 0)
        rec, state = run_episode(
            scene, cfg, _episode_stream(cfg, 0, 0, 0), return_state=True
        )
        hops = [
            np.linalg.norm(a.position - b.position)
            for a, b in zip(state.viewpoints[:-1], state.viewpoints[1:])
        ]
        assert rec.travel_distance == pytest.approx(sum(hops), abs=1e-12)

    def test_pco_at_carries_forward(self):
        rec = EpisodeRecord(
            "random",
            0,
            0,
            [
                ActionRecord(1, 20.0, 1, 0, 0, 0, 0, 0, -1, 0.0),
                ActionRecord(2, 50.0, 2, 0, 0, 0, 0, 0, -1, 0.0),
            ],
        )
        assert rec.pco_at(1) == 20.0
        assert rec.pco_at(2) == 50.0
        assert rec.pco_at(9) == 50.0


class TestFalsePositiveCount:
    def setup_method(self):
        disc = LabeledPrimitive(
            SHAPE_DISC, np.array([0.7, 0.0, 0.8, 1.0, 0.0, 0.0, 0.012]), CLASS_TOMATO, 0
        )
        self.scene = LabeledScene([disc], np.array([0.7, 0.0, 0.8]))

    def cluster(self, label, center):
        return Cluster(label, np.zeros((21, 3), dtype=np.int64), np.asarray(center, float))

    def test_exact_match_not_fp(self):
        clusters = [self.cluster(CLASS_TOMATO, (0.7, 0.0, 0.8))]
        assert false_positive_count(clusters, self.scene, 0.03) == 0

    def test_distant_cluster_is_fp(self):
        clusters = [self.cluster(CLASS_TOMATO, (1.7, 0.0, 0.8))]
        assert false_positive_count(clusters, self.scene, 0.03) == 1

    def test_wrong_class_at_gt_center_is_fp(self):
        clusters = [self.cluster(CLASS_PEDUNCLE, (0.7, 0.0, 0.8))]
        assert false_positive_count(clusters, self.scene, 0.03) == 1


class TestSweep:
    def test_episode_count_is_grid_product(self):
        cfg = quick_config(
            plants=DEFAULT_PLANTS[:2], n_rotations=2, planners=("random", "predefined-wide"), a_max=2
        )
        res = run_sweep(cfg)
        assert res.n_episodes == 2 * 2 * 2
        rows = res.rows()
        assert len(rows) == res.n_episodes * cfg.a_max
        for action in (1, 2):
            assert sum(1 for r in rows if r[4] == action) == res.n_episodes

    def test_empty_planner_list_empty_table(self):
        cfg = quick_config(planners=(), a_max=1)
        res = run_sweep(cfg)
        assert res.n_episodes == 0
        assert res.rows() == []
        assert res.summary() == []

    def test_parallel_matches_serial(self):
        cfg = quick_config(
            plants=DEFAULT_PLANTS[:2], n_rotations=2, planners=("random",), a_max=2
        )
        serial = run_sweep(cfg).results_csv()
        parallel = run_sweep(replace(cfg, n_jobs=2)).results_csv()
        assert serial == parallel

    def test_results_csv_schema(self):
        cfg = quick_config(a_max=2)
        res = run_sweep(cfg)
        lines = res.results_csv().strip().splitlines()
        assert lines[0] == "scene,rotation,planner,seed,action,pco,n_clusters,n_fp,gain,distance,utility"
        assert len(lines) == 1 + res.n_episodes * cfg.a_max
        assert all(len(l.split(",")) == 11 for l in lines[1:])

    def test_summary_of_constant_pco(self):
        # synthetic episodes with constant PCO: mean equals it, CI width 0
        actions = [ActionRecord(a, 75.0, 3, 1, 0, 0, 0, 0, -1, 0.0) for a in (1, 2)]
        episodes = [EpisodeRecord("random", 1, r, list(actions)) for r in range(4)]
        cfg = quick_config(a_max=2)
        res = SweepResult(cfg, episodes)
        for row in res.summary():
            assert row["mean_pco"] == 75.0
            assert row["ci95"] == 0.0
            assert row["median_pco"] == 75.0

    def test_same_placement_shared_across_planners(self):
        cfg = quick_config(plants=DEFAULT_PLANTS[:1], n_rotations=2)
        a = _placed_scene(cfg, 0, 1)
        b = _placed_scene(cfg, 0, 1)
        assert np.allclose(a.plant_base, b.plant_base)
        assert np.allclose(a.ooi_centers, b.ooi_centers)

    def test_rotation_changes_scene(self):
        cfg = quick_config(n_rotations=12)
        a = _placed_scene(cfg, 0, 0)
        b = _placed_scene(cfg, 0, 3)
        assert not np.allclose(a.ooi_centers, b.ooi_centers)

    def test_zero_uncertainty_fixes_base(self):
        cfg = quick_config(uncertainty_x=0.0, uncertainty_y=0.0)
        scene = _placed_scene(cfg, 0, 0)
        assert np.allclose(scene.plant_base, (0.7, 0.0, 0.8))

    def test_save_writes_files(self, tmp_path):
        cfg = quick_config(a_max=1)
        res = run_sweep(cfg)
        res.save(tmp_path)
        assert (tmp_path / "results.csv").exists()
        assert (tmp_path / "summary.csv").exists()
        header = (tmp_path / "summary.csv").read_text().splitlines()[0]
        assert header == "planner,action,mean_pco,ci95,median_pco,mean_fp,n"


class TestExperimentConfig:
    def test_rotations_must_divide_circle(self):
        with pytest.raises(ValueError):
            quick_config(n_rotations=7)

    def test_sampling_kind_validated(self):
        with pytest.raises(ValueError):
            quick_config(sampling_kind="spherical")

    def test_leaflet_removal_override(self):
        cfg = quick_config(leaflet_removal=0.55)
        full = quick_config().plant_scene(0)
        reduced = cfg.plant_scene(0)
        n_full = sum(1 for p in full.primitives if p.shape == SHAPE_DISC)
        n_red = sum(1 for p in reduced.primitives if p.shape == SHAPE_DISC)
        assert 0.5 <= 1 - n_red / n_full <= 0.6

    def test_cylindrical_constraint_centered_on_nominal_base(self):
        cfg = quick_config(sampling_kind="cylindrical-sector")
        c = cfg.sampling_constraint()
        assert c.kind == "cylindrical-sector"
        assert np.allclose(c.center, (0.7, 0.0, 0.8))

    def test_planar_constraint_offset_from_base(self):
        c = quick_config().sampling_constraint()
        assert c.kind == "planar"
        assert np.allclose(c.center, (0.35, 0.0, 0.8))
        assert (c.width, c.height) == (0.7, 0.7)
        assert c.pan_limit == pytest.approx(math.radians(15))
