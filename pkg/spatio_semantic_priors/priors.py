"""Sampling based spatio-semantic priors.

A prior is estimated from N workspace samples as the fraction of samples in
which a semantic indicator (collision, target reached, or both combined)
holds.  Indicators of all samples are gathered in bitmasks (python ints, bit i
set iff the indicator holds in sample i): the estimate is popcount(mask) / N,
an exact ratio of integers.
"""
import dataclasses
import enum
import logging
import math
import typing

import numpy
from scipy.spatial import cKDTree
import shapely
from shapely.geometry import MultiPoint, Polygon

from .errors import SampleSetError, UnknownLabelError
from .geometry import Frustum, LabeledPointCloud, RigidTransform


logger = logging.getLogger(__name__)

# queries larger than this are spread over all cores
_PARALLEL_QUERY_SIZE = 20000


def wrap_angle(theta: float) -> float:
    """Angle wrapped into [-pi, pi)."""
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def to_mask(flags: numpy.ndarray) -> int:
    """Bitmask with bit i set iff flags[i]."""
    flags = numpy.asarray(flags, dtype=bool)
    if flags.size == 0:
        return 0
    return int.from_bytes(numpy.packbits(flags, bitorder="little").tobytes(), "little")


def full_mask(n: int) -> int:
    return (1 << n) - 1


@dataclasses.dataclass(frozen=True)
class Configuration:
    """SE(2) robot pose: position in meters, heading in [-pi, pi)."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        values = (self.x, self.y, self.theta)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("configuration must be finite (got {})".format(values))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def xy(self) -> typing.Tuple[float, float]:
        return (self.x, self.y)


@dataclasses.dataclass(frozen=True)
class RobotFootprint:
    """Disc shaped robot; obstacle points are the points whose height is in
    [z_min, z_max]."""

    radius: float = 0.25
    z_min: float = 0.20
    z_max: float = 1.50

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(
                "footprint radius must be positive (got {})".format(self.radius)
            )
        if not self.z_min < self.z_max:
            raise ValueError(
                "obstacle height band [{}, {}] is empty".format(self.z_min, self.z_max)
            )

    @property
    def obstacle_height_band(self) -> typing.Tuple[float, float]:
        return (self.z_min, self.z_max)


@dataclasses.dataclass(frozen=True, eq=False)
class WorkspaceSample:
    """One realization of the workspace: a floor aligned labeled cloud."""

    cloud: LabeledPointCloud
    sample_id: int
    seed: typing.Optional[int] = None
    source: str = ""


class QueryKind(enum.Enum):
    OBSTACLE = "obstacle"
    TARGET = "target"
    OBSTACLE_FREE_AND_TARGET = "obstacle_free_and_target"


@dataclasses.dataclass(frozen=True)
class SemanticQuery:
    kind: QueryKind
    label: typing.Optional[int] = None

    def __post_init__(self):
        needs_label = self.kind is not QueryKind.OBSTACLE
        if needs_label and self.label is None:
            raise ValueError("{} queries require a label".format(self.kind.value))
        if not needs_label and self.label is not None:
            raise ValueError("obstacle queries do not take a label")

    @classmethod
    def obstacle(cls) -> "SemanticQuery":
        return cls(QueryKind.OBSTACLE)

    @classmethod
    def target(cls, label: int) -> "SemanticQuery":
        return cls(QueryKind.TARGET, label)

    @classmethod
    def obstacle_free_and_target(cls, label: int) -> "SemanticQuery":
        return cls(QueryKind.OBSTACLE_FREE_AND_TARGET, label)


class SampleIndex:
    """Search structures over one sample, for one footprint.

    Built once, read only afterwards (safe to share between threads).
    """

    def __init__(self, sample: WorkspaceSample, footprint: RobotFootprint):
        cloud = sample.cloud
        z = cloud.points[:, 2]
        in_band = (z >= footprint.z_min) & (z <= footprint.z_max)
        obstacles = cloud.xy[in_band]

        self.radius = footprint.radius
        self._obstacle_tree = cKDTree(obstacles) if len(obstacles) else None
        if len(obstacles):
            self._low = obstacles.min(axis=0) - self.radius
            self._high = obstacles.max(axis=0) + self.radius

        self._label_trees = {
            int(label): cKDTree(cloud.xy[cloud.labels == label])
            for label in numpy.unique(cloud.labels)
        }

    def has_label(self, label: int) -> bool:
        return label in self._label_trees

    def collides(self, xy: numpy.ndarray) -> numpy.ndarray:
        """For each x-y position, whether an obstacle point lies strictly
        within the footprint radius."""
        xy = numpy.asarray(xy, dtype=numpy.float64).reshape(-1, 2)
        result = numpy.zeros(len(xy), dtype=bool)
        if self._obstacle_tree is None:
            return result
        # only positions near the obstacles bounding box can collide
        near = numpy.all((xy > self._low) & (xy < self._high), axis=1)
        if numpy.any(near):
            workers = -1 if numpy.count_nonzero(near) > _PARALLEL_QUERY_SIZE else 1
            distances, _ = self._obstacle_tree.query(
                xy[near], k=1, distance_upper_bound=self.radius, workers=workers
            )
            result[near] = distances < self.radius
        return result

    def reaches(self, xy: numpy.ndarray, label: int, radius: float) -> numpy.ndarray:
        """For each x-y position, whether a point with the label lies within
        radius."""
        xy = numpy.asarray(xy, dtype=numpy.float64).reshape(-1, 2)
        tree = self._label_trees.get(label)
        if tree is None:
            return numpy.zeros(len(xy), dtype=bool)
        distances, _ = tree.query(xy, k=1, distance_upper_bound=radius * 2.0 + 1e-9)
        return distances <= radius


@dataclasses.dataclass(frozen=True, eq=False)
class SampleSet:
    """N workspace samples sharing the observation they were conditioned on,
    the support (frustum, camera frame) and the camera to world alignment."""

    samples: typing.Tuple[WorkspaceSample, ...]
    observed: LabeledPointCloud
    support: Frustum
    alignment: RigidTransform = dataclasses.field(
        default_factory=RigidTransform.identity
    )
    label_vocabulary: typing.Mapping[int, str] = dataclasses.field(default_factory=dict)
    warnings: typing.Tuple[str, ...] = ()
    ingest: typing.Mapping[str, typing.Any] = dataclasses.field(default_factory=dict)
    _indices: typing.Dict[typing.Any, typing.List[SampleIndex]] = dataclasses.field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise SampleSetError("a sample set requires at least one sample")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(
            self,
            "label_vocabulary",
            {int(k): str(v) for k, v in self.label_vocabulary.items()},
        )
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @property
    def n(self) -> int:
        return len(self.samples)

    def check_label(self, label: int) -> None:
        if label not in self.label_vocabulary:
            raise UnknownLabelError(label, self.label_vocabulary)

    def index(self, footprint: RobotFootprint) -> typing.List[SampleIndex]:
        """Per sample search structures, built on first use."""
        key = (footprint.radius, footprint.z_min, footprint.z_max)
        indices = self._indices.get(key)
        if indices is None:
            indices = [SampleIndex(s, footprint) for s in self.samples]
            self._indices[key] = indices
        return indices

    def support_polygon(self) -> Polygon:
        """Footprint of the support frustum on the floor plane (world x-y)."""
        corners = self.alignment.apply(self.support.corners())
        hull = MultiPoint([tuple(p) for p in corners[:, :2]]).convex_hull
        if not isinstance(hull, Polygon):
            return Polygon()
        return hull

    def start_configuration(self) -> Configuration:
        """The camera position projected on the floor, heading along the
        optical axis."""
        forward = self.alignment.rotation @ numpy.array([0.0, 0.0, 1.0])
        x, y = self.alignment.translation[:2]
        return Configuration(x, y, math.atan2(forward[1], forward[0]))


def _xy(configurations: typing.Sequence[Configuration]) -> numpy.ndarray:
    return numpy.array([c.xy for c in configurations], dtype=numpy.float64).reshape(
        -1, 2
    )


def collision_matrix(
    xy: numpy.ndarray, sample_set: SampleSet, fp: RobotFootprint
) -> numpy.ndarray:
    """Boolean array (positions, samples): footprint collides."""
    xy = numpy.asarray(xy, dtype=numpy.float64).reshape(-1, 2)
    return numpy.column_stack(
        [index.collides(xy) for index in sample_set.index(fp)]
    ).reshape(len(xy), sample_set.n)


def target_matrix(
    xy: numpy.ndarray,
    sample_set: SampleSet,
    label: int,
    fp: RobotFootprint,
    radius: float = 1.0,
) -> numpy.ndarray:
    """Boolean array (positions, samples): a target point is within radius."""
    xy = numpy.asarray(xy, dtype=numpy.float64).reshape(-1, 2)
    return numpy.column_stack(
        [index.reaches(xy, label, radius) for index in sample_set.index(fp)]
    ).reshape(len(xy), sample_set.n)


def indicator_matrix(
    xy: numpy.ndarray,
    sample_set: SampleSet,
    query: SemanticQuery,
    fp: RobotFootprint,
    target_radius: float = 1.0,
) -> numpy.ndarray:
    """Boolean array (positions, samples) of the query's indicator."""
    if query.label is not None:
        sample_set.check_label(query.label)
    if query.kind is QueryKind.OBSTACLE:
        return collision_matrix(xy, sample_set, fp)
    target = target_matrix(xy, sample_set, query.label, fp, target_radius)
    if query.kind is QueryKind.TARGET:
        return target
    return target & ~collision_matrix(xy, sample_set, fp)


def collision_indicator(
    q: Configuration, s: WorkspaceSample, fp: RobotFootprint
) -> bool:
    """Whether the footprint at q collides with an obstacle point of s (the
    heading is irrelevant for a disc)."""
    return bool(SampleIndex(s, fp).collides(_xy([q]))[0])


def target_indicator(
    q: Configuration,
    s: WorkspaceSample,
    label: int,
    radius: float = 1.0,
    vocabulary: typing.Optional[typing.Collection[int]] = None,
) -> bool:
    """Whether a point of s carrying the label lies within radius of q.

    Raises:
        UnknownLabelError: if a vocabulary is given and does not hold the
            label.
    """
    if vocabulary is not None and label not in vocabulary:
        raise UnknownLabelError(label, vocabulary)
    targets = s.cloud.xy[s.cloud.labels == label]
    if not len(targets):
        return False
    distances = numpy.hypot(targets[:, 0] - q.x, targets[:, 1] - q.y)
    return bool(numpy.min(distances) <= radius)


def prior_mask(
    q: Configuration,
    sample_set: SampleSet,
    query: SemanticQuery,
    fp: RobotFootprint,
    target_radius: float = 1.0,
) -> int:
    """Bitmask of the samples in which the query's indicator holds at q."""
    return to_mask(indicator_matrix(_xy([q]), sample_set, query, fp, target_radius)[0])


def prior_estimate(
    q: Configuration,
    sample_set: SampleSet,
    query: SemanticQuery,
    fp: RobotFootprint,
    target_radius: float = 1.0,
) -> float:
    """Monte-Carlo estimate of the probability of the query at q: the fraction
    of samples in which its indicator holds."""
    return popcount(prior_mask(q, sample_set, query, fp, target_radius)) / sample_set.n


def densify_segment(
    a: typing.Tuple[float, float], b: typing.Tuple[float, float], step: float
) -> numpy.ndarray:
    """Positions along the segment a-b, endpoints included, at most step
    apart.

    The endpoints are put in lexicographic order first, so a-b and b-a yield
    the very same (bit identical) positions.
    """
    if tuple(a) > tuple(b):
        a, b = b, a
    a_ = numpy.asarray(a, dtype=numpy.float64)
    b_ = numpy.asarray(b, dtype=numpy.float64)
    length = numpy.hypot(b_[0] - a_[0], b_[1] - a_[1])
    count = max(1, int(math.ceil(length / step)))
    t = numpy.arange(count + 1) / count
    return a_ + (b_ - a_) * t[:, None]


def densify(path: typing.Sequence[Configuration], step: float) -> numpy.ndarray:
    """x-y positions covering the path at resolution step, shape (m, 2)."""
    if step <= 0:
        raise ValueError("densification step must be positive (got {})".format(step))
    if len(path) == 1:
        return _xy(path)
    return numpy.concatenate(
        [densify_segment(p.xy, q.xy, step) for p, q in zip(path, path[1:])]
    )


def path_free_mask(
    path: typing.Sequence[Configuration],
    sample_set: SampleSet,
    fp: RobotFootprint,
    step: float = 0.05,
) -> int:
    """Bitmask of the samples in which the whole (densified) path is
    collision free."""
    if not path:
        raise ValueError("empty path")
    collisions = collision_matrix(densify(path, step), sample_set, fp)
    return to_mask(~numpy.any(collisions, axis=0))


def path_success_mask(
    path: typing.Sequence[Configuration],
    sample_set: SampleSet,
    label: int,
    fp: RobotFootprint,
    step: float = 0.05,
    target_radius: float = 1.0,
) -> int:
    """Bitmask of the samples in which the path is collision free end to end
    and its final configuration reaches the target."""
    sample_set.check_label(label)
    free = path_free_mask(path, sample_set, fp, step)
    reached = target_matrix(_xy(path[-1:]), sample_set, label, fp, target_radius)[0]
    return free & to_mask(reached)


def path_success_probability(
    path: typing.Sequence[Configuration],
    sample_set: SampleSet,
    label: int,
    fp: RobotFootprint,
    step: float = 0.05,
    target_radius: float = 1.0,
) -> float:
    """Fraction of samples in which the path succeeds (joint evaluation per
    sample, see path_success_mask)."""
    mask = path_success_mask(path, sample_set, label, fp, step, target_radius)
    return popcount(mask) / sample_set.n


def path_collision_probability(
    path: typing.Sequence[Configuration],
    sample_set: SampleSet,
    fp: RobotFootprint,
    step: float = 0.05,
) -> float:
    """Fraction of samples in which the path collides somewhere."""
    free = path_free_mask(path, sample_set, fp, step)
    return (sample_set.n - popcount(free)) / sample_set.n


def detection_mask(sample_set: SampleSet, label: int) -> int:
    """Bitmask of the samples holding at least one point with the label."""
    sample_set.check_label(label)
    return to_mask([numpy.any(s.cloud.labels == label) for s in sample_set.samples])


def detection_probability(sample_set: SampleSet, label: int) -> float:
    return popcount(detection_mask(sample_set, label)) / sample_set.n


def prior_grid(
    sample_set: SampleSet,
    query: SemanticQuery,
    fp: RobotFootprint,
    resolution: float = 0.1,
    target_radius: float = 1.0,
) -> typing.Tuple[numpy.ndarray, numpy.ndarray, numpy.ndarray]:
    """Prior estimates over a regular grid covering the support.

    Returns the cell center coordinates along x and y and the grid of
    estimates, shape (len(ys), len(xs)); cells outside the support are NaN.
    """

    polygon = sample_set.support_polygon()
    if polygon.is_empty:
        raise SampleSetError("the support of the sample set is empty")
    min_x, min_y, max_x, max_y = polygon.bounds
    xs = numpy.arange(min_x + resolution / 2.0, max_x, resolution)
    ys = numpy.arange(min_y + resolution / 2.0, max_y, resolution)
    gx, gy = numpy.meshgrid(xs, ys)
    inside = shapely.contains_xy(polygon, gx.ravel(), gy.ravel())

    grid = numpy.full(gx.size, numpy.nan)
    xy = numpy.column_stack([gx.ravel()[inside], gy.ravel()[inside]])
    if len(xy):
        indicators = indicator_matrix(xy, sample_set, query, fp, target_radius)
        grid[inside] = numpy.count_nonzero(indicators, axis=1) / sample_set.n
    return xs, ys, grid.reshape(gx.shape)
