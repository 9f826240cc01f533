import dataclasses
import math
import unittest

import numpy
import pytest
from hypothesis import given, settings, strategies as st

from spatio_semantic_priors.errors import SampleSetError, UnknownLabelError
from spatio_semantic_priors.geometry import (
    CameraIntrinsics,
    Frustum,
    LabeledPointCloud,
    RigidTransform,
)
from spatio_semantic_priors.priors import (
    Configuration,
    RobotFootprint,
    SampleSet,
    SemanticQuery,
    WorkspaceSample,
    collision_indicator,
    collision_matrix,
    densify,
    densify_segment,
    detection_mask,
    detection_probability,
    full_mask,
    path_collision_probability,
    path_free_mask,
    path_success_mask,
    path_success_probability,
    popcount,
    prior_estimate,
    prior_grid,
    prior_mask,
    target_indicator,
    to_mask,
    wrap_angle,
)

FLOOR = 11
TARGET = 5
ABSENT = 7


def _floor(rng):
    xy = rng.uniform([-1.0, -3.0], [6.0, 3.0], (200, 2))
    return LabeledPointCloud(
        numpy.column_stack([xy, numpy.zeros(len(xy))]), numpy.full(len(xy), FLOOR)
    )


def _sample(i, observed, obstacle, target):
    parts = [observed]
    if obstacle:
        parts.append(LabeledPointCloud([[2.0, 0.0, 0.5]], [0]))
    if target:
        parts.append(LabeledPointCloud([[3.0, 0.0, 1.6]], [TARGET]))
    return WorkspaceSample(LabeledPointCloud.concatenate(parts), i)


def _four_samples():
    """Four samples: an obstacle at (2, 0) in samples 0 and 1, a target above
    the obstacle band at (3, 0) in samples 0 and 2."""
    observed = _floor(numpy.random.default_rng(0))
    samples = [
        _sample(0, observed, True, True),
        _sample(1, observed, True, False),
        _sample(2, observed, False, True),
        _sample(3, observed, False, False),
    ]
    support = Frustum(CameraIntrinsics(640, 480, math.pi / 2), -0.2, 5.0, 0.0)
    return SampleSet(
        tuple(samples),
        observed,
        support,
        RigidTransform.from_camera_pose([0.0, 0.0, 1.45], 0.0),
        {FLOOR: "floor", TARGET: "seat", ABSENT: "bed"},
    )


@pytest.fixture
def sample_set():
    return _four_samples()


@pytest.fixture
def fp():
    return RobotFootprint()


class MaskTest(unittest.TestCase):
    def test_to_mask(self):
        self.assertEqual(to_mask([True, False, True]), 0b101)
        self.assertEqual(to_mask([]), 0)
        self.assertEqual(to_mask([False] * 9 + [True]), 1 << 9)

    def test_popcount(self):
        self.assertEqual(popcount(0), 0)
        self.assertEqual(popcount(full_mask(70)), 70)
        self.assertEqual(popcount(0b1011), 3)


@given(st.lists(st.booleans(), max_size=300))
def test_to_mask_bits(flags):
    mask = to_mask(flags)
    assert popcount(mask) == sum(flags)
    assert all(bool(mask >> i & 1) == flag for i, flag in enumerate(flags))


class ConfigurationTest(unittest.TestCase):
    def test_wrap(self):
        self.assertAlmostEqual(wrap_angle(3 * math.pi / 2), -math.pi / 2)
        self.assertEqual(wrap_angle(math.pi), -math.pi)
        self.assertAlmostEqual(Configuration(0, 0, 2 * math.pi + 0.1).theta, 0.1)

    def test_non_finite(self):
        with self.assertRaises(ValueError):
            Configuration(float("nan"), 0.0)

    def test_footprint(self):
        with self.assertRaises(ValueError):
            RobotFootprint(radius=0.0)
        with self.assertRaises(ValueError):
            RobotFootprint(z_min=1.0, z_max=0.5)
        self.assertEqual(RobotFootprint().obstacle_height_band, (0.2, 1.5))

    def test_query(self):
        with self.assertRaises(ValueError):
            SemanticQuery.target(None)
        with self.assertRaises(ValueError):
            SemanticQuery(SemanticQuery.obstacle().kind, 3)


def test_empty_sample_set():
    with pytest.raises(SampleSetError):
        SampleSet((), LabeledPointCloud.empty(), Frustum(CameraIntrinsics(4, 4, 1.0)))


def test_obstacle_prior(sample_set, fp):
    q = Configuration(2.1, 0.0)
    assert prior_mask(q, sample_set, SemanticQuery.obstacle(), fp) == 0b0011
    assert prior_estimate(q, sample_set, SemanticQuery.obstacle(), fp) == 0.5
    # floor points lie below the obstacle band
    origin = Configuration(0.0, 0.0)
    assert prior_estimate(origin, sample_set, SemanticQuery.obstacle(), fp) == 0.0


def test_collision_is_strict(sample_set, fp):
    """an obstacle point exactly at the footprint radius does not collide"""
    at_radius = Configuration(2.25, 0.0)
    assert prior_mask(at_radius, sample_set, SemanticQuery.obstacle(), fp) == 0
    for s in sample_set.samples:
        assert not collision_indicator(at_radius, s, fp)
    assert collision_indicator(Configuration(2.2, 0.0), sample_set.samples[0], fp)


def test_obstacle_height_band(fp):
    cloud = LabeledPointCloud([[0.0, 0.0, 1.6], [1.0, 0.0, 0.2], [2.0, 0.0, 0.19]])
    sample = WorkspaceSample(cloud, 0)
    assert not collision_indicator(Configuration(0.0, 0.0), sample, fp)
    assert collision_indicator(Configuration(1.0, 0.0), sample, fp)
    assert not collision_indicator(Configuration(2.0, 0.0), sample, fp)


def test_target_prior(sample_set, fp):
    q = Configuration(2.5, 0.0)
    assert prior_mask(q, sample_set, SemanticQuery.target(TARGET), fp) == 0b0101
    # reached at exactly the acquisition radius
    edge = Configuration(2.0, 0.0)
    assert prior_mask(edge, sample_set, SemanticQuery.target(TARGET), fp) == 0b0101
    assert prior_estimate(
        q, sample_set, SemanticQuery.target(TARGET), fp, target_radius=0.4
    ) == 0.0


def test_obstacle_free_and_target_prior(sample_set, fp):
    query = SemanticQuery.obstacle_free_and_target(TARGET)
    assert prior_mask(Configuration(2.1, 0.0), sample_set, query, fp) == 0b0100
    assert prior_mask(Configuration(2.5, 0.0), sample_set, query, fp) == 0b0101


_positions = st.tuples(
    st.floats(min_value=0.0, max_value=4.0), st.floats(min_value=-1.0, max_value=1.0)
)
_points = st.lists(
    st.tuples(
        st.floats(min_value=-1.0, max_value=6.0),
        st.floats(min_value=-3.0, max_value=3.0),
        st.floats(min_value=0.0, max_value=2.5),
    ),
    min_size=1,
    max_size=20,
)


@settings(max_examples=50, deadline=None)
@given(_positions, _points)
def test_more_obstacles_never_lower_obstacle_prior(position, points):
    base = _four_samples()
    extra = LabeledPointCloud(points, numpy.zeros(len(points), dtype=int))
    crowded = dataclasses.replace(
        base,
        samples=tuple(
            dataclasses.replace(
                s, cloud=LabeledPointCloud.concatenate([s.cloud, extra])
            )
            for s in base.samples
        ),
    )
    q = Configuration(*position)
    fp = RobotFootprint()
    before = prior_mask(q, base, SemanticQuery.obstacle(), fp)
    after = prior_mask(q, crowded, SemanticQuery.obstacle(), fp)
    assert before & ~after == 0
    assert popcount(after) >= popcount(before)


@settings(max_examples=50, deadline=None)
@given(_positions, st.floats(min_value=0.1, max_value=2.0))
def test_joint_mask_within_free_and_target_masks(position, radius):
    sample_set = _four_samples()
    q = Configuration(*position)
    fp = RobotFootprint()
    both = prior_mask(
        q, sample_set, SemanticQuery.obstacle_free_and_target(TARGET), fp, radius
    )
    obstacle = prior_mask(q, sample_set, SemanticQuery.obstacle(), fp, radius)
    target = prior_mask(q, sample_set, SemanticQuery.target(TARGET), fp, radius)
    assert both & obstacle == 0
    assert both & ~target == 0
    assert both == target & ~obstacle & full_mask(sample_set.n)


def test_unknown_label(sample_set, fp):
    with pytest.raises(UnknownLabelError):
        prior_estimate(Configuration(0, 0), sample_set, SemanticQuery.target(42), fp)
    with pytest.raises(KeyError):
        detection_probability(sample_set, 42)
    with pytest.raises(UnknownLabelError):
        target_indicator(
            Configuration(0, 0), sample_set.samples[0], 42, vocabulary=[5, 11]
        )


def test_target_indicator(sample_set):
    s = sample_set.samples[0]
    assert target_indicator(Configuration(2.0, 0.0), s, TARGET)
    assert not target_indicator(Configuration(1.9, 0.0), s, TARGET)
    assert not target_indicator(Configuration(3.0, 0.0), s, ABSENT)


def test_matrices_agree_with_indicators(sample_set, fp):
    rng = numpy.random.default_rng(1)
    xy = rng.uniform([0.0, -1.0], [4.0, 1.0], (100, 2))
    matrix = collision_matrix(xy, sample_set, fp)
    assert matrix.shape == (100, 4)
    for i in range(0, 100, 7):
        q = Configuration(*xy[i])
        for j, s in enumerate(sample_set.samples):
            assert matrix[i, j] == collision_indicator(q, s, fp)


def test_detection(sample_set):
    assert detection_mask(sample_set, TARGET) == 0b0101
    assert detection_probability(sample_set, TARGET) == 0.5
    assert detection_probability(sample_set, ABSENT) == 0.0
    assert detection_probability(sample_set, FLOOR) == 1.0


class DensifyTest(unittest.TestCase):
    def test_endpoints_and_spacing(self):
        points = densify_segment((0.0, 0.0), (1.0, 0.0), 0.3)
        self.assertEqual(len(points), 5)
        numpy.testing.assert_array_equal(points[0], [0.0, 0.0])
        numpy.testing.assert_array_equal(points[-1], [1.0, 0.0])
        gaps = numpy.linalg.norm(numpy.diff(points, axis=0), axis=1)
        self.assertTrue(numpy.all(gaps <= 0.3))

    def test_direction_independent(self):
        a, b = (0.1, 2.3), (-1.7, 0.4)
        numpy.testing.assert_array_equal(
            densify_segment(a, b, 0.05), densify_segment(b, a, 0.05)
        )

    def test_degenerate(self):
        self.assertEqual(len(densify_segment((1.0, 1.0), (1.0, 1.0), 0.05)), 2)
        self.assertEqual(len(densify([Configuration(1.0, 2.0)], 0.05)), 1)
        with self.assertRaises(ValueError):
            densify([Configuration(0, 0), Configuration(1, 0)], 0.0)


def test_path_probabilities(sample_set, fp):
    path = [Configuration(0.0, 0.0), Configuration(4.0, 0.0)]
    assert path_free_mask(path, sample_set, fp) == 0b1100
    assert path_collision_probability(path, sample_set, fp) == 0.5
    assert path_success_mask(path, sample_set, TARGET, fp) == 0b0100
    assert path_success_probability(path, sample_set, TARGET, fp) == 0.25
    # going around the obstacle
    detour = [Configuration(0.0, 0.0), Configuration(2.0, 0.5), Configuration(3.5, 0.0)]
    assert path_success_mask(detour, sample_set, TARGET, fp) == 0b0101
    with pytest.raises(ValueError):
        path_free_mask([], sample_set, fp)


def test_support(sample_set):
    polygon = sample_set.support_polygon()
    # apex 0.2 m behind the camera, far corners 5 m ahead, 5.2 m to each side
    assert polygon.area == pytest.approx(0.5 * 10.4 * 5.2)
    start = sample_set.start_configuration()
    assert (start.x, start.y, start.theta) == pytest.approx((0.0, 0.0, 0.0))


def test_index_cached(sample_set, fp):
    assert sample_set.index(fp) is sample_set.index(RobotFootprint())
    assert sample_set.index(fp) is not sample_set.index(RobotFootprint(radius=0.3))


def test_prior_grid(sample_set, fp):
    query = SemanticQuery.obstacle()
    xs, ys, grid = prior_grid(sample_set, query, fp, resolution=0.25)
    assert grid.shape == (len(ys), len(xs))
    inside = ~numpy.isnan(grid)
    assert inside.any() and (~inside).any()
    assert numpy.all((grid[inside] >= 0.0) & (grid[inside] <= 1.0))
    for i in range(0, len(ys), 5):
        for j in range(0, len(xs), 5):
            if inside[i, j]:
                q = Configuration(xs[j], ys[i])
                assert grid[i, j] == prior_estimate(q, sample_set, query, fp)
    # the cell next to the obstacle
    j = int(numpy.argmin(numpy.abs(xs - 2.0)))
    i = int(numpy.argmin(numpy.abs(ys - 0.0)))
    assert grid[i, j] == 0.5
