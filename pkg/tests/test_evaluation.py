import math
import unittest

import numpy
import pytest
from hypothesis import given, strategies as st

from spatio_semantic_priors.errors import InputError
from spatio_semantic_priors.evaluation import (
    EvalReport,
    REFERENCE_LABELS,
    SceneDistribution,
    emit_report,
    kl_divergence,
    load_ground_truth,
    load_report,
    scene_distribution,
)
from spatio_semantic_priors.geometry import CameraIntrinsics, Frustum, LabeledPointCloud
from spatio_semantic_priors.planner import PlanResult
from spatio_semantic_priors.priors import (
    Configuration,
    SampleSet,
    WorkspaceSample,
)


class SceneDistributionTest(unittest.TestCase):
    def test_invalid(self):
        with self.assertRaises(ValueError):
            SceneDistribution((1, 2), [0.5, 0.6])
        with self.assertRaises(ValueError):
            SceneDistribution((1, 1), [0.5, 0.5])
        with self.assertRaises(ValueError):
            SceneDistribution((1, 2), [1.5, -0.5])
        with self.assertRaises(ValueError):
            SceneDistribution((1,), [0.5, 0.5])

    def test_from_detection(self):
        d = SceneDistribution.from_detection((1, 2, 3), [0.5, 0.25, 0.25])
        self.assertFalse(d.smoothed)
        self.assertEqual(d.mass(1), 0.5)

    def test_smoothing(self):
        d = SceneDistribution.from_detection((1, 2), [1.0, 0.0], epsilon=0.5)
        self.assertTrue(d.smoothed)
        numpy.testing.assert_allclose(d.masses, [0.75, 0.25])
        with self.assertRaises(ValueError):
            SceneDistribution.from_detection((1, 2), [0.0, 0.0], smoothing=False)
        plain = SceneDistribution.from_detection((1, 2), [1.0, 0.0], smoothing=False)
        self.assertEqual(plain.mass(2), 0.0)

    def test_reordered(self):
        d = SceneDistribution((1, 2), [0.25, 0.75])
        self.assertEqual(d.reordered((2, 1)).masses.tolist(), [0.75, 0.25])
        with self.assertRaises(ValueError):
            d.reordered((1, 3))


class KLTest(unittest.TestCase):
    def test_reference_value(self):
        gt = SceneDistribution((1, 2), [0.75, 0.25])
        pred = SceneDistribution((1, 2), [0.5, 0.5])
        expected = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
        self.assertAlmostEqual(kl_divergence(gt, pred), expected, delta=1e-9)
        self.assertAlmostEqual(
            kl_divergence(gt, pred, base=2.0), expected / math.log(2.0), delta=1e-9
        )

    def test_identical(self):
        d = SceneDistribution((1, 2, 3), [0.2, 0.3, 0.5])
        self.assertEqual(kl_divergence(d, d), 0.0)

    def test_label_order(self):
        gt = SceneDistribution((1, 2), [0.75, 0.25])
        pred = SceneDistribution((2, 1), [0.5, 0.5])
        self.assertAlmostEqual(
            kl_divergence(gt, pred),
            kl_divergence(gt, SceneDistribution((1, 2), [0.5, 0.5])),
        )

    def test_support(self):
        gt = SceneDistribution((1, 2), [1.0, 0.0])
        pred = SceneDistribution((1, 2), [0.5, 0.5])
        self.assertAlmostEqual(kl_divergence(gt, pred), math.log(2.0))
        with self.assertRaises(ValueError):
            kl_divergence(pred, gt)
        with self.assertRaises(ValueError):
            kl_divergence(gt, SceneDistribution((1, 3), [0.5, 0.5]))


_weights = st.lists(
    st.floats(min_value=1e-3, max_value=1.0), min_size=2, max_size=10
)


@given(_weights, _weights)
def test_kl_non_negative(a, b):
    n = min(len(a), len(b))
    labels = tuple(range(1, n + 1))
    gt = SceneDistribution(labels, numpy.array(a[:n]) / math.fsum(a[:n]))
    pred = SceneDistribution(labels, numpy.array(b[:n]) / math.fsum(b[:n]))
    assert kl_divergence(gt, pred) >= 0.0


def test_scene_distribution():
    support = Frustum(CameraIntrinsics(4, 4, 1.0))
    samples = [
        WorkspaceSample(LabeledPointCloud([[0.0, 0.0, 0.5]], [label]), i)
        for i, label in enumerate([1, 1, 2, 1])
    ]
    sample_set = SampleSet(
        tuple(samples),
        LabeledPointCloud.empty(),
        support,
        label_vocabulary={1: "table", 2: "bottle", 3: "plant"},
    )
    d = scene_distribution(sample_set, (1, 2))
    numpy.testing.assert_allclose(d.masses, [0.75, 0.25])
    smoothed = scene_distribution(sample_set, (1, 2, 3), epsilon=1e-6)
    assert smoothed.smoothed
    assert smoothed.mass(3) == pytest.approx(1e-6 / 1.000003)


def test_load_ground_truth(tmp_path):
    path = tmp_path / "gt.txt"
    path.write_text("# living room\ntable, 2\n5, 1.0\n\nbed , 1 # comment\n")
    gt = load_ground_truth(path, REFERENCE_LABELS)
    assert gt.labels == (1, 5, 7)
    numpy.testing.assert_allclose(gt.masses, [0.5, 0.25, 0.25])


@pytest.mark.parametrize(
    "content",
    ["table 0.5\n", "sofa, 0.5\n", "42, 0.5\n", "table, much\n", "table, 0\n", ""],
)
def test_load_ground_truth_errors(tmp_path, content):
    path = tmp_path / "gt.txt"
    path.write_text(content)
    with pytest.raises(InputError):
        load_ground_truth(path, REFERENCE_LABELS)


def test_load_ground_truth_missing(tmp_path):
    with pytest.raises(InputError):
        load_ground_truth(tmp_path / "gt.txt", REFERENCE_LABELS)


@pytest.fixture
def report():
    report = EvalReport()
    report.add_results(
        "bedroom",
        [
            PlanResult(
                [Configuration(0.0, 0.0), Configuration(21.8, 0.0)],
                0.32,
                1.0,
                21.8,
                0b1,
                7,
                3,
            ),
            PlanResult([], 0.0, 0.0, 0.0, 0, 10, 3),
        ],
        REFERENCE_LABELS,
    )
    report.add_results(
        "kitchen", [PlanResult([], 0.0, 0.0, 0.0, 0, 42, 3)], REFERENCE_LABELS
    )
    report.add_kl("bedroom", 0.123456)
    report.add_kl("bedroom", 1.5, "plan")
    report.note("kitchen: no ground truth")
    return report


def test_emit_csv(tmp_path, report):
    path = tmp_path / "report.csv"
    emit_report(report, path)
    assert path.read_text().splitlines() == [
        "scene,label,p_det,p_plan,length,kl_det,kl_plan",
        "bedroom,bed,1.00,0.32,21.80,0.12,1.50",
        "bedroom,oven,0.00,0.00,0.00,0.12,1.50",
        "kitchen,42,0.00,0.00,0.00,,",
    ]


def test_emit_json(tmp_path, report):
    path = tmp_path / "report.json"
    emit_report(report, path, format="json")
    again = load_report(path)
    assert again == report
    assert again.kl["bedroom"]["det"] == 0.123456
    with pytest.raises(ValueError):
        emit_report(report, path, format="xml")


def test_load_report_errors(tmp_path):
    with pytest.raises(InputError):
        load_report(tmp_path / "none.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 99, "rows": [], "kl": {}, "notes": []}')
    with pytest.raises(InputError):
        load_report(bad)
    with pytest.raises(InputError):
        emit_report(EvalReport(), tmp_path / "missing" / "report.csv")
