"""Tests for sampling, grouping, Chamfer, rotation and augmentation kernels."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drfer.errors import InvalidArgumentError
from drfer.geometry import (
    PointCloud,
    augment,
    ball_query,
    chamfer_distance,
    chamfer_distance_bruteforce,
    fps_sample,
    refill_to_size,
    rotate_cloud,
)

LINE = PointCloud([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])


def _pairwise(points: np.ndarray) -> np.ndarray:
    return np.linalg.norm(points[:, None] - points[None], axis=-1)


class TestFarthestPointSampling:
    def test_two_points_reach_the_far_end(self):
        assert fps_sample(LINE, 2, 0) == [0, 3]

    def test_ties_go_to_lowest_index(self):
        assert fps_sample(LINE, 3, 0) == [0, 3, 1]

    def test_exhaustion_is_a_permutation(self, rng):
        cloud = PointCloud(rng.normal(size=(40, 3)))
        order = fps_sample(cloud, 40, 5)
        assert order[0] == 5
        assert sorted(order) == list(range(40))

    def test_no_duplicates_with_coincident_points(self):
        cloud = PointCloud(np.zeros((6, 3)))
        order = fps_sample(cloud, 6, 0)
        assert len(set(order)) == 6

    def test_k_two_picks_a_farthest_point(self, rng):
        cloud = PointCloud(rng.normal(size=(30, 3)))
        _, far = fps_sample(cloud, 2, 4)
        d = np.linalg.norm(cloud.points - cloud.points[4], axis=1)
        assert d[far] == pytest.approx(d.max())

    @pytest.mark.parametrize("k,start", [(0, 0), (5, 0), (2, 4), (2, -1)])
    def test_out_of_range_arguments(self, k, start):
        with pytest.raises(InvalidArgumentError):
            fps_sample(LINE, k, start)


class TestBallQuery:
    def test_small_radius_keeps_only_the_center(self):
        groups = ball_query(LINE, [0, 1, 2, 3], radius=0.5, cap=4)
        assert groups == [[0], [1], [2], [3]]

    def test_grid_corner_neighbours(self):
        grid = PointCloud(list(itertools.product([0.0, 1.0], repeat=3)))
        assert ball_query(grid, [0], radius=1.0, cap=8) == [[0, 1, 2, 4]]

    def test_cap_one_is_the_center(self, rng):
        cloud = PointCloud(rng.normal(size=(20, 3)))
        assert ball_query(cloud, [3, 7], radius=10.0, cap=1) == [[3], [7]]

    def test_center_first_among_duplicates(self):
        cloud = PointCloud([[0, 0, 0], [0, 0, 0], [0.5, 0, 0]])
        assert ball_query(cloud, [1], radius=1.0, cap=3) == [[1, 0, 2]]

    def test_nearest_first_and_capped(self):
        assert ball_query(LINE, [1], radius=2.0, cap=3) == [[1, 0, 2]]

    def test_empty_centers(self):
        assert ball_query(LINE, [], radius=1.0, cap=2) == []

    def test_invalid_radius(self):
        with pytest.raises(InvalidArgumentError):
            ball_query(LINE, [0], radius=0.0, cap=2)


class TestChamfer:
    def test_identical_clouds(self, rng):
        cloud = PointCloud(rng.normal(size=(25, 3)))
        assert chamfer_distance(cloud, cloud) == 0.0

    def test_single_points(self):
        assert chamfer_distance(PointCloud([0, 0, 0]), PointCloud([1, 0, 0])) == pytest.approx(2.0)

    def test_two_against_one(self):
        a = PointCloud([[0, 0, 0], [2, 0, 0]])
        b = PointCloud([1, 0, 0])
        assert chamfer_distance(a, b) == pytest.approx(2.0)

    @settings(max_examples=200, deadline=None)
    @given(
        n=st.integers(min_value=1, max_value=64),
        m=st.integers(min_value=1, max_value=64),
        seed=st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_matches_bruteforce_and_is_symmetric(self, n, m, seed):
        gen = np.random.default_rng(seed)
        a = PointCloud(gen.normal(size=(n, 3)))
        b = PointCloud(gen.normal(size=(m, 3)))
        fast = chamfer_distance(a, b)
        assert fast >= 0.0
        assert fast == pytest.approx(chamfer_distance_bruteforce(a, b), abs=1e-9)
        assert fast == pytest.approx(chamfer_distance(b, a), abs=1e-9)


class TestRotation:
    def test_zero_rotation_is_identity(self, rng):
        cloud = PointCloud(rng.normal(size=(10, 3)))
        assert rotate_cloud(cloud, 0.0, 0.0).allclose(cloud, atol=0.0)

    def test_yaw_half_turn(self):
        cloud = PointCloud([[1, 0, 0], [-1, 0, 0]])
        rotated = rotate_cloud(cloud, 0.0, 180.0)
        np.testing.assert_allclose(rotated.points[0], [-1, 0, 0], atol=1e-12)

    def test_pitch_and_back(self, rng):
        cloud = PointCloud(rng.normal(size=(15, 3)))
        back = rotate_cloud(rotate_cloud(cloud, 90.0, 0.0), -90.0, 0.0)
        assert back.allclose(cloud, atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(
        pitch=st.floats(min_value=-180, max_value=180),
        yaw=st.floats(min_value=-180, max_value=180),
        seed=st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_isometry(self, pitch, yaw, seed):
        cloud = PointCloud(np.random.default_rng(seed).normal(scale=50.0, size=(12, 3)))
        rotated = rotate_cloud(cloud, pitch, yaw)
        np.testing.assert_allclose(
            _pairwise(rotated.points), _pairwise(cloud.points), atol=1e-9
        )


class TestAugment:
    def test_zero_dropout_is_identity(self, rng):
        cloud = PointCloud(rng.normal(size=(32, 3)), canonical=True)
        assert augment(cloud, "dropout", 3, dropout_rate=0.0) == cloud

    def test_unit_scale_is_identity(self, rng):
        cloud = PointCloud(rng.normal(size=(32, 3)))
        assert augment(cloud, "scale", 3, scale_range=(1.0, 1.0)) == cloud

    def test_fixed_scale(self):
        cloud = PointCloud([[1, 0, 0], [-1, 0, 0]])
        out = augment(cloud, "scale", 0, scale_range=(1.25, 1.25))
        np.testing.assert_allclose(out.points[0], [1.25, 0, 0])

    def test_dropout_keeps_size_and_clears_canonical(self, rng):
        cloud = PointCloud(rng.normal(size=(256, 3)), canonical=True)
        seeds = range(20)
        outs = [augment(cloud, "dropout", s, dropout_rate=0.875) for s in seeds]
        changed = [o for o in outs if o != cloud]
        assert changed
        for out in changed:
            assert out.size == cloud.size
            assert not out.canonical

    @pytest.mark.parametrize("mode", ["dropout", "scale"])
    def test_same_seed_is_bit_identical(self, rng, mode):
        cloud = PointCloud(rng.normal(size=(64, 3)))
        a = augment(cloud, mode, 99)
        b = augment(cloud, mode, 99)
        assert np.array_equal(a.points, b.points)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"mode": "dropout", "dropout_rate": 0.9},
            {"mode": "scale", "scale_range": (0.7, 1.0)},
            {"mode": "scale", "scale_range": (1.2, 1.1)},
            {"mode": "jitter"},
        ],
    )
    def test_out_of_range(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            augment(LINE, rng_seed=0, **kwargs)


class TestRefill:
    def test_thins_larger_clouds(self, rng):
        cloud = PointCloud(rng.normal(size=(50, 3)))
        assert refill_to_size(cloud, 20).size == 20

    def test_repeats_smaller_clouds(self):
        out = refill_to_size(LINE, 10)
        assert out.size == 10
        assert {tuple(p) for p in out.points} == {tuple(p) for p in LINE.points}
