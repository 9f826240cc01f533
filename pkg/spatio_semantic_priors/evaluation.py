"""Evaluation metrics: scene level object distributions, their KL divergence
to a ground truth, and the detection / planning report."""
import csv
import dataclasses
import json
import logging
import math
import os
import pathlib
import typing

import numpy
from scipy.special import rel_entr

from .errors import InputError
from .planner import PlanResult
from .priors import SampleSet, detection_probability


logger = logging.getLogger(__name__)

# the ten object groups of the reference evaluation
REFERENCE_LABELS = {
    1: "table",
    2: "bottle",
    3: "plant",
    4: "storage",
    5: "seat",
    6: "book",
    7: "bed",
    8: "screen",
    9: "pillow",
    10: "oven",
}
FLOOR_LABEL = 11

DEFAULT_EPSILON = 1e-6

REPORT_SCHEMA_VERSION = 1

DEFAULT_ABLATION = "det"

_SUM_TOLERANCE = 1e-12


@dataclasses.dataclass(frozen=True, eq=False)
class SceneDistribution:
    """Probability masses over object labels."""

    labels: typing.Tuple[int, ...]
    masses: numpy.ndarray
    smoothed: bool = False

    def __post_init__(self):
        labels = tuple(int(label) for label in self.labels)
        masses = numpy.array(self.masses, dtype=numpy.float64).reshape(-1)
        if len(labels) != len(masses):
            raise ValueError(
                "{} labels but {} masses".format(len(labels), len(masses))
            )
        if len(set(labels)) != len(labels):
            raise ValueError("duplicated labels in {}".format(labels))
        if numpy.any(masses < 0.0) or not numpy.all(numpy.isfinite(masses)):
            raise ValueError("masses must be finite and non negative")
        if abs(math.fsum(masses) - 1.0) > _SUM_TOLERANCE:
            raise ValueError("masses sum to {}, not 1".format(math.fsum(masses)))
        masses.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_detection(
        cls,
        labels: typing.Sequence[int],
        p_dets: typing.Sequence[float],
        smoothing: bool = True,
        epsilon: float = DEFAULT_EPSILON,
    ) -> "SceneDistribution":
        """Masses proportional to the detection probabilities.

        If some probability is zero and smoothing is on, epsilon is added to
        every label before normalization.

        Raises:
            ValueError: if every probability is zero and smoothing is off.
        """
        values = numpy.array(p_dets, dtype=numpy.float64)
        smoothed = False
        if smoothing and numpy.any(values == 0.0):
            values = values + epsilon
            smoothed = True
        total = math.fsum(values)
        if total <= 0.0:
            raise ValueError(
                "no label has a non zero detection probability (enable smoothing)"
            )
        return cls(tuple(labels), values / total, smoothed)

    def mass(self, label: int) -> float:
        return float(self.masses[self.labels.index(label)])

    def reordered(self, labels: typing.Sequence[int]) -> "SceneDistribution":
        """Same distribution, labels in the given order."""
        if sorted(labels) != sorted(self.labels):
            raise ValueError(
                "label sets differ: {} vs {}".format(
                    sorted(labels), sorted(self.labels)
                )
            )
        return SceneDistribution(
            tuple(labels), [self.mass(label) for label in labels], self.smoothed
        )


def scene_distribution(
    sample_set: SampleSet,
    labels: typing.Sequence[int],
    smoothing: bool = True,
    epsilon: float = DEFAULT_EPSILON,
) -> SceneDistribution:
    """Distribution of the labels normalized from their detection
    probabilities over the sample set."""
    p_dets = [detection_probability(sample_set, label) for label in labels]
    return SceneDistribution.from_detection(labels, p_dets, smoothing, epsilon)


def kl_divergence(
    gt: SceneDistribution, pred: SceneDistribution, base: float = math.e
) -> float:
    """sum_o gt(o) log(gt(o) / pred(o)), in the given logarithm base (natural
    by default); labels with gt(o) = 0 contribute 0.

    Raises:
        ValueError: if the label sets differ or pred(o) = 0 where gt(o) > 0.
    """
    pred = pred.reordered(gt.labels)
    unsupported = (gt.masses > 0.0) & (pred.masses == 0.0)
    if numpy.any(unsupported):
        missing = [label for label, u in zip(gt.labels, unsupported) if u]
        raise ValueError(
            "predicted mass is zero for labels {} (enable smoothing)".format(missing)
        )
    value = math.fsum(rel_entr(gt.masses, pred.masses)) / math.log(base)
    # rounding may leave a tiny negative value for near identical distributions
    return max(value, 0.0)


def load_ground_truth(
    path: typing.Union[str, os.PathLike], vocabulary: typing.Mapping[int, str]
) -> SceneDistribution:
    """Read a ground truth distribution: one "label, mass" line per label,
    label given by id or by name; '#' starts a comment.  Masses are
    normalized.

    Raises:
        InputError: if the file is missing or malformed.
    """
    path = pathlib.Path(path)
    if not path.is_file():
        raise InputError(path, "ground truth file not found")
    by_name = {name: label for label, name in vocabulary.items()}
    labels: typing.List[int] = []
    masses: typing.List[float] = []
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = [field.strip() for field in line.split(",")]
            if len(fields) != 2:
                raise InputError(path, "line {}: expected 'label, mass'".format(number))
            key, value = fields
            if key in by_name:
                label = by_name[key]
            else:
                try:
                    label = int(key)
                except ValueError:
                    raise InputError(
                        path, "line {}: unknown label '{}'".format(number, key)
                    )
                if label not in vocabulary:
                    raise InputError(
                        path, "line {}: unknown label '{}'".format(number, key)
                    )
            try:
                masses.append(float(value))
            except ValueError:
                raise InputError(
                    path, "line {}: invalid mass '{}'".format(number, value)
                )
            labels.append(label)
    total = math.fsum(masses)
    if not labels or total <= 0.0:
        raise InputError(path, "no positive mass")
    try:
        return SceneDistribution(tuple(labels), numpy.array(masses) / total)
    except ValueError as e:
        raise InputError(path, str(e)) from e


@dataclasses.dataclass
class ReportRow:
    scene: str
    label: str
    p_det: float
    p_plan: float
    length: float


@dataclasses.dataclass
class EvalReport:
    """Per scene and label detection / planning results, per scene and
    ablation KL divergences, and notes on how they were obtained."""

    rows: typing.List[ReportRow] = dataclasses.field(default_factory=list)
    kl: typing.Dict[str, typing.Dict[str, float]] = dataclasses.field(
        default_factory=dict
    )
    notes: typing.List[str] = dataclasses.field(default_factory=list)

    def add_results(
        self,
        scene: str,
        results: typing.Iterable[PlanResult],
        vocabulary: typing.Mapping[int, str],
    ) -> None:
        for result in results:
            self.rows.append(
                ReportRow(
                    scene,
                    vocabulary.get(result.label, str(result.label)),
                    result.p_det,
                    result.p_plan,
                    result.length,
                )
            )

    def add_kl(
        self, scene: str, value: float, ablation: str = DEFAULT_ABLATION
    ) -> None:
        self.kl.setdefault(scene, {})[ablation] = value

    def note(self, message: str) -> None:
        logger.warning(message)
        self.notes.append(message)

    def ablations(self) -> typing.List[str]:
        return sorted({a for values in self.kl.values() for a in values})

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "rows": [dataclasses.asdict(row) for row in self.rows],
            "kl": self.kl,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: typing.Dict[str, typing.Any]) -> "EvalReport":
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(
                "unsupported report schema version {}".format(d.get("schema_version"))
            )
        return cls(
            [ReportRow(**row) for row in d["rows"]],
            {scene: dict(values) for scene, values in d["kl"].items()},
            list(d["notes"]),
        )


def _csv_rows(report: EvalReport) -> typing.Iterator[typing.List[str]]:
    ablations = report.ablations()
    yield ["scene", "label", "p_det", "p_plan", "length"] + [
        "kl_{}".format(a) for a in ablations
    ]
    for row in report.rows:
        kl = report.kl.get(row.scene, {})
        yield [
            row.scene,
            row.label,
            "{:.2f}".format(row.p_det),
            "{:.2f}".format(row.p_plan),
            "{:.2f}".format(row.length),
        ] + ["{:.2f}".format(kl[a]) if a in kl else "" for a in ablations]


def emit_report(
    report: EvalReport, path: typing.Union[str, os.PathLike], format: str = "csv"
) -> None:
    """Write the report as CSV (values rounded to 2 decimals) or as JSON
    (full precision, read back by load_report).

    Raises:
        InputError: if the file can not be written.
        ValueError: if the format is neither "csv" nor "json".
    """
    if format not in ("csv", "json"):
        raise ValueError("unknown report format '{}'".format(format))
    try:
        with open(path, "w", newline="") as f:
            if format == "csv":
                writer = csv.writer(f, lineterminator="\n")
                writer.writerows(_csv_rows(report))
            else:
                json.dump(report.to_dict(), f, indent=2, sort_keys=True)
                f.write("\n")
    except OSError as e:
        raise InputError(path, "failed to write report: {}".format(e)) from e


def load_report(path: typing.Union[str, os.PathLike]) -> EvalReport:
    try:
        with open(path) as f:
            return EvalReport.from_dict(json.load(f))
    except OSError as e:
        raise InputError(path, "failed to read report: {}".format(e)) from e
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(path, "invalid report: {}".format(e)) from e
