import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from plantnbv.geometry import (
    CameraIntrinsics,
    OrientedBox,
    RandomStream,
    Viewpoint,
    WorkspaceBounds,
    box_contains,
    camera_ray_directions,
    pixel_to_ray,
    quat_between,
    quat_from_axis_angle,
    quat_to_matrix,
    transform_point,
)


def rand_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


class TestTransformPoint:
    def test_identity(self):
        assert np.allclose(transform_point(Viewpoint(np.zeros(3)), [1, 2, 3]), [1, 2, 3])

    def test_pure_translation(self):
        vp = Viewpoint(np.array([1.0, 0, 0]))
        assert np.allclose(transform_point(vp, [0, 0, 0]), [1, 0, 0])

    def test_rotation_90_about_z(self):
        s = math.sqrt(0.5)
        vp = Viewpoint(np.zeros(3), np.array([0, 0, s, s]))
        assert np.allclose(transform_point(vp, [1, 0, 0]), [0, 1, 0], atol=1e-12)

    def test_matches_scipy_rotation_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            q = rand_quat(rng)
            t = rng.normal(size=3)
            p = rng.normal(size=3)
            expected = Rotation.from_quat(q).apply(p) + t
            got = transform_point(Viewpoint(t, q), p)
            assert np.allclose(got, expected, atol=1e-12)

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            vp = Viewpoint(rng.normal(size=3), rand_quat(rng))
            p = rng.normal(size=3)
            back = transform_point(vp, transform_point(vp.inverse(), p))
            assert np.allclose(back, p, atol=1e-9)


class TestQuaternions:
    def test_normalized_on_construction(self):
        vp = Viewpoint(np.zeros(3), np.array([0, 0, 0, 1 + 5e-7]))
        assert abs(np.linalg.norm(vp.orientation) - 1.0) < 1e-9

    def test_rejects_far_from_unit(self):
        with pytest.raises(ValueError):
            Viewpoint(np.zeros(3), np.array([0, 0, 0, 1.1]))

    def test_quat_between_shortest_arc(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a = rng.normal(size=3)
            b = rng.normal(size=3)
            a /= np.linalg.norm(a)
            b /= np.linalg.norm(b)
            q = quat_between(a, b)
            assert np.allclose(quat_to_matrix(q) @ a, b, atol=1e-9)

    def test_axis_angle_matches_scipy(self):
        q = quat_from_axis_angle([0, 0, 1], 0.7)
        expected = Rotation.from_rotvec([0, 0, 0.7]).as_quat()
        assert np.allclose(q, expected, atol=1e-12)


class TestBoxContains:
    def test_center_inside(self):
        box = OrientedBox(np.zeros(3), np.ones(3))
        assert box_contains(box, [0, 0, 0])

    def test_just_outside(self):
        box = OrientedBox(np.zeros(3), np.ones(3))
        assert not box_contains(box, [1.001, 0, 0])

    def test_boundary_counts_inside(self):
        box = OrientedBox(np.zeros(3), np.ones(3))
        assert box_contains(box, [1.0, 0, 0])

    def test_rotated_45_degrees(self):
        q = quat_from_axis_angle([0, 0, 1], math.radians(45))
        box = OrientedBox(np.zeros(3), np.array([1.0, 0.1, 0.1]), q)
        # rotating (0.7, 0.7, 0) back by -45 deg lands on (~0.99, 0, 0)
        assert box_contains(box, [0.7, 0.7, 0])
        assert not box_contains(box, [0.7, 0.9, 0])

    def test_invariant_under_rigid_transform(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            box = OrientedBox(rng.normal(size=3), rng.uniform(0.1, 2, 3), rand_quat(rng))
            p = rng.normal(size=3) * 2
            pose = Viewpoint(rng.normal(size=3), rand_quat(rng))
            moved_box = OrientedBox(
                transform_point(pose, box.center),
                box.half_extents,
                _quat_mul(pose.orientation, box.orientation),
            )
            assert box_contains(box, p) == box_contains(moved_box, transform_point(pose, p))


def _quat_mul(a, b):
    from plantnbv.geometry import quat_multiply

    return quat_multiply(a, b)


class TestPixelToRay:
    def setup_method(self):
        self.intr = CameraIntrinsics.default()
        self.pose = Viewpoint(np.zeros(3))

    def test_principal_point_is_optical_axis(self):
        _, d = pixel_to_ray(self.intr, self.intr.cx, self.intr.cy, self.pose)
        assert np.allclose(d, [1, 0, 0], atol=1e-12)

    def test_one_focal_length_right(self):
        # wide sensor so that cx + fx is a valid column
        intr = CameraIntrinsics(640, 240, 277.0, 277.0, 160.0, 120.0, 1.5)
        _, d = pixel_to_ray(intr, intr.cx + intr.fx, intr.cy, self.pose)
        assert np.allclose(d, np.array([1, -1, 0]) / math.sqrt(2), atol=1e-12)

    def test_unit_norm(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            u = rng.uniform(0, self.intr.width)
            v = rng.uniform(0, self.intr.height)
            _, d = pixel_to_ray(self.intr, u, v, self.pose)
            assert abs(np.linalg.norm(d) - 1.0) < 1e-12

    def test_out_of_bounds_errors(self):
        with pytest.raises(ValueError):
            pixel_to_ray(self.intr, -1.0, 0, self.pose)
        with pytest.raises(ValueError):
            pixel_to_ray(self.intr, 0, self.intr.height + 0.5, self.pose)

    def test_origin_is_camera_position(self):
        pose = Viewpoint(np.array([0.3, -0.1, 0.9]))
        o, _ = pixel_to_ray(self.intr, 5, 5, pose)
        assert np.allclose(o, pose.position)

    def test_corner_rays_subtend_frustum_angles(self):
        # cx at the exact image center so the corners are symmetric
        intr = CameraIntrinsics(320, 240, 277.0, 277.0, 160.0, 120.0, 1.5)
        _, left = pixel_to_ray(intr, 0.0, intr.cy, self.pose)
        _, right = pixel_to_ray(intr, float(intr.width), intr.cy, self.pose)
        angle = math.acos(np.clip(np.dot(left, right), -1, 1))
        assert abs(angle - 2.0 * math.atan(intr.width / (2.0 * intr.fx))) < 1e-9
        _, top = pixel_to_ray(intr, intr.cx, 0.0, self.pose)
        _, bot = pixel_to_ray(intr, intr.cx, float(intr.height), self.pose)
        angle_v = math.acos(np.clip(np.dot(top, bot), -1, 1))
        assert abs(angle_v - 2.0 * math.atan(intr.height / (2.0 * intr.fy))) < 1e-9

    def test_ray_grid_matches_pixel_to_ray(self):
        dirs = camera_ray_directions(self.intr, stride=16)
        k = 0
        pose = Viewpoint(np.zeros(3))
        for v in range(0, self.intr.height, 16):
            for u in range(0, self.intr.width, 16):
                _, d = pixel_to_ray(self.intr, u, v, pose)
                assert np.allclose(dirs[k], d, atol=1e-12)
                k += 1


class TestWorkspaceBounds:
    def test_plant_base_must_be_inside(self):
        with pytest.raises(ValueError):
            WorkspaceBounds.from_corners((0, 0, 0), (1, 1, 1), (2, 0, 0))

    def test_contains(self):
        b = WorkspaceBounds.from_corners((0, 0, 0), (1, 1, 1), (0.5, 0.5, 0.5))
        assert b.contains((0.2, 0.9, 0.01))
        assert not b.contains((1.2, 0.5, 0.5))


class TestRandomStream:
    def test_same_seed_same_sequence(self):
        a = RandomStream(42)
        b = RandomStream(42)
        assert np.allclose(a.uniform(size=10), b.uniform(size=10))

    def test_children_independent_of_parent_consumption(self):
        a = RandomStream(42)
        a.uniform(size=100)
        b = RandomStream(42)
        assert np.allclose(a.child(3).uniform(size=5), b.child(3).uniform(size=5))

    def test_distinct_children_differ(self):
        r = RandomStream(42)
        assert not np.allclose(r.child(0).uniform(size=5), r.child(1).uniform(size=5))

    def test_nested_paths(self):
        r = RandomStream(7).child(1).child(2)
        s = RandomStream(7).child(1).child(2)
        assert np.allclose(r.normal(size=4), s.normal(size=4))
