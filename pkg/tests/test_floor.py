import math
import unittest

import numpy
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from spatio_semantic_priors.errors import FloorEstimationError
from spatio_semantic_priors.floor import (
    PlaneModel,
    camera_height,
    floor_alignment,
    floor_points,
    ransac_plane,
    trim_above_floor,
)
from spatio_semantic_priors.geometry import LabeledPointCloud, RigidTransform

CAMERA_HEIGHT = 1.45


def _noisy_floor(seed, size=500, outlier_ratio=0.3, sigma=0.003):
    """Camera frame floor (y = -CAMERA_HEIGHT) with gaussian noise and
    uniformly spread outliers."""
    rng = numpy.random.default_rng(seed)
    n_outliers = int(size * outlier_ratio)
    n_floor = size - n_outliers
    floor = numpy.column_stack(
        [
            rng.uniform(-3.0, 3.0, n_floor),
            -CAMERA_HEIGHT + rng.normal(0.0, sigma, n_floor),
            rng.uniform(0.5, 8.0, n_floor),
        ]
    )
    outliers = rng.uniform(
        [-3.0, -CAMERA_HEIGHT, 0.5], [3.0, 1.0, 8.0], (n_outliers, 3)
    )
    return LabeledPointCloud(numpy.concatenate([floor, outliers]))


def _angle(a, b):
    return math.degrees(math.acos(min(1.0, abs(float(numpy.dot(a, b))))))


def test_ransac_recovers_noisy_floor():
    """normal within 0.5 degree and inlier rmse within 1 cm on 95+ seeds"""
    successes = 0
    for seed in range(100):
        plane = ransac_plane(_noisy_floor(seed), seed=seed)
        if _angle(plane.normal, [0.0, 1.0, 0.0]) <= 0.5 and plane.rmse <= 0.01:
            successes += 1
    assert successes >= 95


def test_ransac_orientation_and_offset():
    plane = ransac_plane(_noisy_floor(0), seed=1)
    # camera (origin) on the positive side
    assert plane.offset <= 0.0
    assert plane.normal[1] > 0.99
    assert plane.offset == pytest.approx(-CAMERA_HEIGHT, abs=0.01)
    assert plane.inlier_ratio == pytest.approx(0.7, abs=0.05)


def test_ransac_deterministic():
    cloud = _noisy_floor(4)
    a = ransac_plane(cloud, seed=9)
    b = ransac_plane(cloud, seed=9)
    numpy.testing.assert_array_equal(a.normal, b.normal)
    assert a.offset == b.offset


def test_ransac_degenerate():
    with pytest.raises(FloorEstimationError):
        ransac_plane(LabeledPointCloud([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
    line = LabeledPointCloud(numpy.outer(numpy.arange(10.0), [1.0, 2.0, 3.0]))
    with pytest.raises(FloorEstimationError):
        ransac_plane(line, max_iters=50)


class AlignmentTest(unittest.TestCase):
    def _aligned(self, tilt):
        # camera pitched by tilt: the floor seen in the camera frame
        pitch = RigidTransform.from_rotation(Rotation.from_euler("x", tilt))
        cloud = _noisy_floor(2, outlier_ratio=0.0)
        cloud = cloud.with_points(pitch.apply(cloud.points))
        plane = ransac_plane(cloud, seed=0)
        alignment = floor_alignment(plane)
        return cloud, alignment

    def test_floor_on_z0(self):
        for tilt in (0.0, 0.2, -0.35):
            cloud, alignment = self._aligned(tilt)
            aligned = alignment.apply(cloud.points)
            self.assertLess(numpy.max(numpy.abs(aligned[:, 2])), 0.02)
            self.assertAlmostEqual(camera_height(alignment), CAMERA_HEIGHT, delta=0.01)

    def test_upside_down_normal(self):
        plane = PlaneModel([0.0, 0.0, -1.0], -2.0, 1.0, 0.0)
        alignment = floor_alignment(plane)
        # the plane -z = -2 (z = 2) goes to z = 0, the origin above it
        numpy.testing.assert_allclose(
            alignment.apply([[1.0, 1.0, 2.0], [0.0, 0.0, 0.0]])[:, 2],
            [0.0, 2.0],
            atol=1e-12,
        )


@settings(max_examples=100, deadline=None)
@given(
    polar=st.floats(min_value=0.0, max_value=math.pi),
    azimuth=st.floats(min_value=-math.pi, max_value=math.pi),
    offset=st.floats(min_value=-5.0, max_value=5.0),
)
def test_alignment_maps_normal_to_z(polar, azimuth, offset):
    normal = numpy.array(
        [
            math.sin(polar) * math.cos(azimuth),
            math.sin(polar) * math.sin(azimuth),
            math.cos(polar),
        ]
    )
    normal /= numpy.linalg.norm(normal)
    alignment = floor_alignment(PlaneModel(normal, offset, 1.0, 0.0))
    numpy.testing.assert_allclose(
        alignment.rotation @ normal, [0.0, 0.0, 1.0], rtol=0.0, atol=1e-9
    )
    # points of the plane land on z = 0
    on_plane = offset * normal
    assert abs(alignment.apply([on_plane])[0, 2]) <= 1e-9


class PlaneModelTest(unittest.TestCase):
    def test_text(self):
        plane = PlaneModel([0.0, 0.6, 0.8], -1.5, 0.75, 0.004)
        text = plane.to_text()
        self.assertEqual(len(text.splitlines()), 5)
        self.assertTrue(text.startswith("plane v1\n"))
        back = PlaneModel.from_text(text)
        numpy.testing.assert_array_equal(back.normal, plane.normal)
        self.assertEqual(
            (back.offset, back.inlier_ratio, back.rmse), (-1.5, 0.75, 0.004)
        )

    def test_invalid(self):
        with self.assertRaises(ValueError):
            PlaneModel([0.0, 0.0, 2.0], 0.0, 1.0, 0.0)
        with self.assertRaises(ValueError):
            PlaneModel([0.0, 0.0, 1.0], 0.0, 1.5, 0.0)
        with self.assertRaises(ValueError):
            PlaneModel.from_text("plane v1\nnormal 0 0 1\n")

    def test_distance(self):
        plane = PlaneModel([0.0, 0.0, 1.0], 1.0, 1.0, 0.0)
        numpy.testing.assert_array_equal(
            plane.distance([[0.0, 0.0, 3.0], [5.0, 5.0, 0.0]]), [2.0, -1.0]
        )


def test_floor_points_and_trim():
    cloud = LabeledPointCloud(
        [[0.0, 0.0, -0.05], [0.0, 0.0, 0.1], [0.0, 0.0, 0.2], [0.0, 0.0, 1.0]],
        labels=[11, 11, 3, 3],
    )
    assert len(floor_points(cloud, [11])) == 2
    assert len(floor_points(cloud, [11, 3])) == 4
    trimmed = trim_above_floor(cloud)
    assert trimmed.points[:, 2].tolist() == [0.2, 1.0]


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    band=st.floats(min_value=0.0, max_value=1.0),
    labels=st.sets(st.integers(min_value=0, max_value=5), max_size=6),
)
def test_trim_idempotent_and_label_independent(seed, band, labels):
    rng = numpy.random.default_rng(seed)
    cloud = LabeledPointCloud(
        rng.uniform([-3.0, -3.0, -0.5], [3.0, 3.0, 2.0], (200, 3)),
        rng.integers(0, 6, 200),
    )
    trimmed = trim_above_floor(cloud, band)
    again = trim_above_floor(trimmed, band)
    numpy.testing.assert_array_equal(again.points, trimmed.points)
    numpy.testing.assert_array_equal(again.labels, trimmed.labels)

    a = trim_above_floor(cloud.with_labels(labels), band)
    b = trim_above_floor(cloud, band).with_labels(labels)
    numpy.testing.assert_array_equal(a.points, b.points)
    numpy.testing.assert_array_equal(a.labels, b.labels)
