"""Environment samplers.

Two sources of workspace samples are provided:

- a synthetic room distribution (walls and objects, each present
  independently with a known probability), whose priors can also be computed
  exactly (:func:`exact_prior`), used to verify the Monte-Carlo estimates;
- a loader for externally generated samples, described by a JSON manifest
  (:func:`load_sample_set`).

Synthetic draws are reproducible across platforms: sample ``i`` of a set
drawn with seed ``s`` uses a Philox generator keyed with ``(s + i, 0)``.  The
generator first draws one uniform per entity (walls, then objects, in file
order), an entity being present iff its uniform is below its presence
probability; the present entities are then rasterized in the same order.
"""
import dataclasses
import itertools
import json
import logging
import math
import os
import pathlib
import typing as t

import numpy
import omegaconf as oc
import variconf

from . import cloud_io, jsonconfig
from .errors import (
    ConfigError,
    FloorEstimationError,
    InputError,
    OracleError,
    SampleSetError,
    UnknownLabelError,
)
from .floor import (
    PlaneModel,
    camera_height,
    floor_alignment,
    floor_points,
    ransac_plane,
    trim_above_floor,
)
from .geometry import (
    CameraIntrinsics,
    Frustum,
    LabeledPointCloud,
    RigidTransform,
    apply_transform,
    backproject,
    cull_depth,
    frustum_filter,
    radius_outlier_removal,
    translation_icp,
)
from .priors import (
    Configuration,
    QueryKind,
    RobotFootprint,
    SampleSet,
    SemanticQuery,
    WorkspaceSample,
)


logger = logging.getLogger(__name__)

# 64-bit integer seeding a draw
SamplerSeed = int

MANIFEST_VERSION = 1

# the oracle enumerates 2^k presence combinations
MAX_ORACLE_ENTITIES = 20

# an entity whose points miss the obstacle band with a larger probability can
# not be classified by the oracle
_BAND_MISS_TOLERANCE = 1e-9

_SAMPLE_STREAM = 0
_OBSERVED_STREAM = 1


def _generator(
    seed: SamplerSeed, stream: int = _SAMPLE_STREAM
) -> numpy.random.Generator:
    key = numpy.array([seed % 2**64, stream], dtype=numpy.uint64)
    return numpy.random.Generator(numpy.random.Philox(key=key))


@dataclasses.dataclass
class Boundaries3d:
    """Represents min/max boundaries in a 3-dimensional space."""

    min: t.Tuple[float, float, float]
    max: t.Tuple[float, float, float]

    def contains(self, other: "Boundaries3d") -> bool:
        return all(lo <= o_lo for lo, o_lo in zip(self.min, other.min)) and all(
            o_hi <= hi for hi, o_hi in zip(self.max, other.max)
        )


@dataclasses.dataclass
class WallSpec:
    """Vertical wall standing on the floor along the segment start-end (x-y)."""

    start: t.List[float] = oc.MISSING
    end: t.List[float] = oc.MISSING
    height: float = 2.5
    presence: float = 1.0
    density: float = 400.0
    """Points per square meter of wall."""

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    @property
    def point_count(self) -> int:
        return int(math.ceil(self.length * self.height * self.density))


@dataclasses.dataclass
class ObjectSpec:
    """Vertical cylinder of the given radius whose center lies uniformly in
    the x-y box of its region, and whose points span the z range of its
    region."""

    label: int = oc.MISSING
    region: Boundaries3d = oc.MISSING
    presence: float = oc.MISSING
    radius: float = oc.MISSING
    density: float = 400.0
    """Points per square meter of footprint."""

    @property
    def point_count(self) -> int:
        return int(math.ceil(math.pi * self.radius**2 * self.density))


@dataclasses.dataclass
class CameraSpec:
    position: t.List[float] = oc.MISSING
    yaw: float = 0.0
    width: int = 640
    height: int = 480
    hfov: float = math.pi / 2.0
    near: float = -0.2
    far: float = 11.0
    expansion: float = 500.0

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.width, self.height, self.hfov)

    def frustum(self) -> Frustum:
        return Frustum(self.intrinsics(), self.near, self.far, self.expansion)

    def transform(self) -> RigidTransform:
        """Camera to world transform."""
        return RigidTransform.from_camera_pose(self.position, self.yaw)


@dataclasses.dataclass
class RoomDistribution:
    """A fully known distribution over rooms."""

    # keys are label ids (JSON object keys are strings)
    vocabulary: t.Dict[str, str] = oc.MISSING
    extent: Boundaries3d = oc.MISSING
    camera: CameraSpec = oc.MISSING
    walls: t.List[WallSpec] = dataclasses.field(default_factory=list)
    objects: t.List[ObjectSpec] = dataclasses.field(default_factory=list)
    floor_label: int = 11
    floor_density: float = 25.0
    """Points per square meter of floor (observed cloud only)."""

    def label_vocabulary(self) -> t.Dict[int, str]:
        vocabulary = {int(k): v for k, v in self.vocabulary.items()}
        vocabulary.setdefault(self.floor_label, "floor")
        return vocabulary

    def entities(self) -> t.List[t.Union[WallSpec, ObjectSpec]]:
        """Walls, then objects, in file order."""
        return list(self.walls) + list(self.objects)

    def validate(self) -> None:
        """Raises:
        ConfigError: if a probability, a density or a dimension is out of range
            or if an entity exceeds the room extent.
        """
        try:
            vocabulary = self.label_vocabulary()
        except ValueError as e:
            raise ConfigError("vocabulary", "label ids must be integers ({})".format(e))
        if self.floor_density < 0:
            raise ConfigError("floor_density", "must be non negative")
        for i, wall in enumerate(self.walls):
            key = "walls.{}".format(i)
            if not 0.0 <= wall.presence <= 1.0:
                raise ConfigError(key, "presence must be in [0, 1]")
            if wall.height <= 0 or wall.density <= 0:
                raise ConfigError(key, "height and density must be positive")
            for p in (wall.start, wall.end):
                if len(p) != 2:
                    raise ConfigError(key, "wall ends are x-y positions")
                inside = Boundaries3d(
                    (p[0], p[1], 0.0), (p[0], p[1], wall.height)
                )
                if not self.extent.contains(inside):
                    raise ConfigError(key, "wall exceeds the room extent")
        for i, obj in enumerate(self.objects):
            key = "objects.{}".format(i)
            if not 0.0 <= obj.presence <= 1.0:
                raise ConfigError(key, "presence must be in [0, 1]")
            if obj.radius <= 0 or obj.density <= 0:
                raise ConfigError(key, "radius and density must be positive")
            if obj.label not in vocabulary or obj.label == self.floor_label:
                raise ConfigError(key, "label {} not in vocabulary".format(obj.label))
            if any(lo > hi for lo, hi in zip(obj.region.min, obj.region.max)):
                raise ConfigError(key, "region min exceeds region max")
            if not self.extent.contains(obj.region):
                raise ConfigError(key, "region exceeds the room extent")

    @staticmethod
    def from_json(
        jsonpath: t.Union[str, os.PathLike], overrides: t.Sequence[str] = ()
    ) -> "RoomDistribution":
        """Construct the distribution from a JSON scene file.

        Args:
            jsonpath: the scene file.
            overrides: "key=value" strings applied after the file.

        Raises:
            InputError: if the file can not be read or does not match the
                schema.
            ConfigError: if the scene is invalid (see validate).
        """
        wconf = variconf.WConf(RoomDistribution)
        try:
            wconf.load_file(jsonpath)
            wconf.load_dotlist(list(overrides))
            dist = t.cast(RoomDistribution, oc.OmegaConf.to_object(wconf.cfg))
        except FileNotFoundError:
            raise InputError(jsonpath, "scene file not found")
        except (oc.errors.OmegaConfBaseException, ValueError) as e:
            raise InputError(jsonpath, "invalid scene file: {}".format(e)) from e
        dist.validate()
        logger.debug("Load scene from file '%s':\n %s", jsonpath, dist)
        return dist


def draw_presence(dist: RoomDistribution, seed: SamplerSeed) -> numpy.ndarray:
    """Presence flags of the entities (walls then objects) in the draw with
    the given seed."""
    rng = _generator(seed)
    return _presence(dist, rng)


def _presence(dist: RoomDistribution, rng: numpy.random.Generator) -> numpy.ndarray:
    entities = dist.entities()
    probabilities = numpy.array([e.presence for e in entities], dtype=numpy.float64)
    return rng.random(len(entities)) < probabilities


def _rasterize(
    entity: t.Union[WallSpec, ObjectSpec], rng: numpy.random.Generator
) -> LabeledPointCloud:
    if isinstance(entity, WallSpec):
        count = entity.point_count
        start = numpy.asarray(entity.start, dtype=numpy.float64)
        end = numpy.asarray(entity.end, dtype=numpy.float64)
        along = rng.random(count)
        xy = start + (end - start) * along[:, None]
        z = rng.random(count) * entity.height
        return LabeledPointCloud(numpy.column_stack([xy, z]))

    count = entity.point_count
    low = numpy.asarray(entity.region.min, dtype=numpy.float64)
    high = numpy.asarray(entity.region.max, dtype=numpy.float64)
    center = low[:2] + rng.random(2) * (high[:2] - low[:2])
    r = entity.radius * numpy.sqrt(rng.random(count))
    phi = 2.0 * math.pi * rng.random(count)
    z = low[2] + rng.random(count) * (high[2] - low[2])
    points = numpy.column_stack(
        [center[0] + r * numpy.cos(phi), center[1] + r * numpy.sin(phi), z]
    )
    return LabeledPointCloud(points, numpy.full(count, entity.label))


def _draw_cloud(
    dist: RoomDistribution, rng: numpy.random.Generator, present: numpy.ndarray
) -> LabeledPointCloud:
    clouds = [
        _rasterize(entity, rng)
        for entity, here in zip(dist.entities(), present)
        if here
    ]
    return LabeledPointCloud.concatenate(clouds)


def _certain(dist: RoomDistribution) -> numpy.ndarray:
    return numpy.array([e.presence >= 1.0 for e in dist.entities()], dtype=bool)


def draw_sample(
    dist: RoomDistribution,
    seed: SamplerSeed,
    sample_id: int = 0,
    include_certain: bool = True,
) -> WorkspaceSample:
    """Draw one room (world frame): every entity is included independently
    with its presence probability, then rasterized to labeled points.

    With include_certain False, the presence 1 entities are left out (they
    belong to the observed cloud).
    """
    rng = _generator(seed)
    present = _presence(dist, rng)
    if not include_certain:
        present = present & ~_certain(dist)
    cloud = _draw_cloud(dist, rng, present)
    return WorkspaceSample(cloud, sample_id, seed, "synthetic")


def draw_observed(dist: RoomDistribution, seed: SamplerSeed) -> LabeledPointCloud:
    """The observation the draws are conditioned on: the floor and every
    certain (presence 1) entity."""
    rng = _generator(seed, _OBSERVED_STREAM)
    low, high = dist.extent.min, dist.extent.max
    area = (high[0] - low[0]) * (high[1] - low[1])
    count = int(math.ceil(area * dist.floor_density))
    xy = numpy.asarray(low[:2]) + rng.random((count, 2)) * (
        numpy.asarray(high[:2]) - numpy.asarray(low[:2])
    )
    floor = LabeledPointCloud(
        numpy.column_stack([xy, numpy.zeros(count)]),
        numpy.full(count, dist.floor_label),
    )
    certain = _draw_cloud(dist, rng, _certain(dist))
    return LabeledPointCloud.concatenate([floor, certain])


def draw_sample_set(dist: RoomDistribution, n: int, seed: SamplerSeed) -> SampleSet:
    """N synthetic samples (sample i drawn with seed + i), each merged with
    the observed cloud, which alone holds the certain entities.

    The clouds are not restricted to the frustum, so that the exact oracle
    applies to every configuration of the room.
    """
    if n < 1:
        raise SampleSetError("at least one sample is required (got {})".format(n))
    observed = draw_observed(dist, seed)
    samples = []
    for i in range(n):
        drawn = draw_sample(dist, seed + i, i, include_certain=False)
        samples.append(
            dataclasses.replace(
                drawn, cloud=LabeledPointCloud.concatenate([drawn.cloud, observed])
            )
        )
    logger.info("drew %d synthetic samples (seeds %d to %d)", n, seed, seed + n - 1)
    return SampleSet(
        tuple(samples),
        observed,
        dist.camera.frustum(),
        dist.camera.transform(),
        dist.label_vocabulary(),
    )


def _point_box_distances(
    q: numpy.ndarray, low: numpy.ndarray, high: numpy.ndarray
) -> t.Tuple[float, float]:
    """Smallest and largest distance from q to a point of the x-y box."""
    gap = numpy.maximum(numpy.maximum(low - q, 0.0), q - high)
    far = numpy.maximum(numpy.abs(q - low), numpy.abs(q - high))
    return float(numpy.hypot(*gap)), float(numpy.hypot(*far))


def _point_segment_distances(
    q: numpy.ndarray, a: numpy.ndarray, b: numpy.ndarray
) -> t.Tuple[float, float]:
    """Smallest and largest distance from q to a point of the segment a-b."""
    ab = b - a
    length2 = float(ab @ ab)
    s = 0.0 if length2 == 0 else min(1.0, max(0.0, float((q - a) @ ab) / length2))
    nearest = float(numpy.hypot(*(a + s * ab - q)))
    return nearest, max(float(numpy.hypot(*(a - q))), float(numpy.hypot(*(b - q))))


def _xy_extent(
    entity: t.Union[WallSpec, ObjectSpec], q: numpy.ndarray
) -> t.Tuple[float, float]:
    """Bounds of the distance from q to any point the entity can rasterize
    to."""
    if isinstance(entity, WallSpec):
        return _point_segment_distances(
            q, numpy.asarray(entity.start, float), numpy.asarray(entity.end, float)
        )
    nearest, farthest = _point_box_distances(
        q,
        numpy.asarray(entity.region.min[:2], float),
        numpy.asarray(entity.region.max[:2], float),
    )
    return max(0.0, nearest - entity.radius), farthest + entity.radius


def _in_band(entity: t.Union[WallSpec, ObjectSpec], fp: RobotFootprint) -> bool:
    """Whether the entity puts points in the obstacle band (almost surely)."""
    if isinstance(entity, WallSpec):
        z0, z1 = 0.0, entity.height
    else:
        z0, z1 = entity.region.min[2], entity.region.max[2]
    if z1 == z0:
        return fp.z_min <= z0 <= fp.z_max
    overlap = min(z1, fp.z_max) - max(z0, fp.z_min)
    if overlap <= 0:
        return False
    fraction = overlap / (z1 - z0)
    if fraction >= 1.0:
        return True
    if (1.0 - fraction) ** entity.point_count > _BAND_MISS_TOLERANCE:
        raise OracleError(
            "entity {} may miss the obstacle band, its points are too sparse".format(
                entity
            )
        )
    return True


def exact_prior(
    dist: RoomDistribution,
    q: Configuration,
    query: SemanticQuery,
    fp: RobotFootprint,
    target_radius: float = 1.0,
) -> float:
    """Exact probability of the query at q under the room distribution.

    Every entity must lie either entirely inside or entirely outside the
    footprint disc (obstacle points) and the target disc (target points) at q,
    whatever its placement.  The indicator is then a Boolean function of the
    presences of the relevant entities, whose probability is obtained by
    enumerating their (at most 2^20) presence combinations.

    Raises:
        OracleError: if an entity partially overlaps one of the discs or if
            more than 20 uncertain entities are relevant.
        UnknownLabelError: if the query label is not in the vocabulary.
    """
    if query.label is not None:
        vocabulary = dist.label_vocabulary()
        if query.label not in vocabulary:
            raise UnknownLabelError(query.label, vocabulary)
        if query.label == dist.floor_label:
            raise OracleError("the floor label can not be queried")

    q_xy = numpy.array(q.xy)
    want_obstacles = query.kind is not QueryKind.TARGET
    want_targets = query.kind is not QueryKind.OBSTACLE

    # (presence, is_obstacle, is_target) of the relevant entities
    relevant = []
    for entity in dist.entities():
        nearest, farthest = _xy_extent(entity, q_xy)
        obstacle = False
        if want_obstacles and _in_band(entity, fp):
            if farthest < fp.radius:
                obstacle = True
            elif nearest < fp.radius:
                raise OracleError(
                    "entity {} partially overlaps the footprint".format(entity)
                )
        target = False
        labelled = isinstance(entity, ObjectSpec) and entity.label == query.label
        if want_targets and labelled:
            if farthest <= target_radius:
                target = True
            elif nearest <= target_radius:
                raise OracleError(
                    "entity {} partially overlaps the target disc".format(entity)
                )
        if obstacle or target:
            relevant.append((entity.presence, obstacle, target))

    fixed = [r for r in relevant if r[0] in (0.0, 1.0)]
    free = [r for r in relevant if r[0] not in (0.0, 1.0)]
    if len(free) > MAX_ORACLE_ENTITIES:
        raise OracleError(
            "{} uncertain entities are relevant (at most {} supported)".format(
                len(free), MAX_ORACLE_ENTITIES
            )
        )

    fixed_obstacle = any(p == 1.0 and o for p, o, _ in fixed)
    fixed_target = any(p == 1.0 and tg for p, _, tg in fixed)

    probability = 0.0
    for combination in itertools.product((False, True), repeat=len(free)):
        weight = 1.0
        collides, reached = fixed_obstacle, fixed_target
        for (p, obstacle, target), present in zip(free, combination):
            weight *= p if present else 1.0 - p
            if present:
                collides = collides or obstacle
                reached = reached or target
        if query.kind is QueryKind.OBSTACLE:
            holds = collides
        elif query.kind is QueryKind.TARGET:
            holds = reached
        else:
            holds = reached and not collides
        if holds:
            probability += weight
    return probability


@dataclasses.dataclass
class IngestSettings:
    """Numeric knobs of the sample set ingestion."""

    max_depth: float = 20.0
    outlier_radius: float = 0.1
    outlier_neighbors: int = 10
    trim_band: float = 0.20
    ransac_threshold: float = 0.01
    ransac_iters: int = 1000
    seed: SamplerSeed = 1234
    icp_iters: int = 30
    icp_tolerance: float = 1e-6
    misalignment_tolerance: float = 0.1
    """Largest median |z| of the floor points of an aligned sample."""
    camera_height_band: t.Tuple[float, float] = (1.0, 2.0)
    icp: t.Optional[bool] = None
    """Overrides the manifest's icp step when set."""


# preprocessing steps a manifest may toggle, with their default
_PREPROCESS_STEPS = {
    "cull": True,
    "outliers": True,
    "frustum": True,
    "trim": True,
    "icp": False,
    "merge_observed": True,
}


class _ManifestReader:
    def __init__(self, path: pathlib.Path):
        self.path = path
        self.directory = path.parent
        try:
            self.content = jsonconfig.read_json(
                path, ("observed", "samples", "vocabulary", "camera")
            )
        except (KeyError, ValueError) as e:
            raise InputError(path, str(e)) from e

    def file(self, value: t.Any, key: str) -> pathlib.Path:
        if not isinstance(value, str):
            raise InputError(self.path, "'{}' must be a file path".format(key))
        try:
            return jsonconfig.resolve_path(self.directory, value, key)
        except FileNotFoundError as e:
            raise InputError(self.path, "missing file {}".format(e)) from e

    def section(self, key: str) -> t.Dict[str, t.Any]:
        value = self.content.get(key, {})
        if not isinstance(value, dict):
            raise InputError(self.path, "'{}' must be an object".format(key))
        return value


def _read_entry(
    reader: _ManifestReader,
    entry: t.Any,
    key: str,
    intrinsics: CameraIntrinsics,
    frame: str,
) -> t.Tuple[LabeledPointCloud, bool, t.Optional[int], str]:
    """Cloud of a manifest entry, whether it had labels, its seed and source."""
    seed = None
    if isinstance(entry, str):
        entry = {"cloud": entry}
    if not isinstance(entry, dict):
        raise InputError(reader.path, "'{}' must be a path or an object".format(key))
    if "seed" in entry:
        seed = int(entry["seed"])

    if "cloud" in entry:
        path = reader.file(entry["cloud"], key)
        content = cloud_io.read_ply(path)
        return content.cloud, content.has_labels, seed, str(path)

    if "depth" in entry:
        if frame != "camera":
            raise InputError(reader.path, "depth maps require a camera frame manifest")
        path = reader.file(entry["depth"], key)
        depth = cloud_io.read_depth(path)
        shape = (depth.height, depth.width)
        labels = confidences = None
        if "labels" in entry:
            labels = cloud_io.read_grid(
                reader.file(entry["labels"], key), shape, numpy.int64
            )
        if "confidences" in entry:
            confidences = cloud_io.read_grid(
                reader.file(entry["confidences"], key), shape, numpy.float64
            )
        try:
            cloud = backproject(depth, intrinsics, labels, confidences)
        except ValueError as e:
            raise InputError(path, str(e)) from e
        return cloud, labels is not None, seed, str(path)

    raise InputError(reader.path, "'{}' has neither 'cloud' nor 'depth'".format(key))


def _alignment(
    reader: _ManifestReader,
    observed: LabeledPointCloud,
    floor_labels: t.List[int],
    settings: IngestSettings,
) -> t.Tuple[RigidTransform, t.Optional[PlaneModel]]:
    section = reader.section("alignment")
    policy = section.get("policy", "ransac")
    if policy == "identity":
        return RigidTransform.identity(), None
    if policy == "transform":
        try:
            return RigidTransform.from_dict(section), None
        except (KeyError, ValueError) as e:
            raise InputError(reader.path, "invalid alignment: {}".format(e)) from e
    if policy == "ransac":
        plane = ransac_plane(
            floor_points(observed, floor_labels),
            settings.ransac_threshold,
            settings.ransac_iters,
            settings.seed,
        )
        return floor_alignment(plane), plane
    raise InputError(reader.path, "unknown alignment policy '{}'".format(policy))


def _check_alignment(
    cloud: LabeledPointCloud,
    floor_labels: t.List[int],
    tolerance: float,
    name: str,
) -> None:
    floor = floor_points(cloud, floor_labels)
    if len(floor) == 0:
        return
    error = float(numpy.median(numpy.abs(floor.points[:, 2])))
    if error > tolerance:
        raise SampleSetError(
            "{} is misaligned: its floor points lie {:.3f} m from the floor".format(
                name, error
            )
        )


def load_sample_set(
    manifest_path: t.Union[str, os.PathLike],
    settings: t.Optional[IngestSettings] = None,
) -> SampleSet:
    """Load, floor-align, filter and merge a set of workspace samples.

    manifest_path is a JSON manifest, or a directory holding exactly one.
    Every cloud (the observed one and the samples) is brought to the camera
    frame, depth culled, cleaned of outliers and restricted to the frustum;
    the floor alignment is then obtained according to the manifest's policy
    (RANSAC on the observed floor points by default) and applied; samples may
    be translated onto the observed cloud (ICP); points close to the floor are
    trimmed; finally the observed cloud is merged into every sample.

    Manifest keys (paths relative to the manifest's directory):

    - ``version`` (1) and ``frame`` ("camera", default, or "world");
    - ``camera``: ``width``, ``height``, ``hfov`` (radians);
    - ``frustum`` (optional): ``near``, ``far``, ``expansion`` (pixels);
    - ``vocabulary``: label id -> name; ``floor_label``: id or list of ids
      (default 11);
    - ``alignment`` (optional): ``policy`` "ransac" (default), "identity" or
      "transform" (with ``rotation``, 3x3, and ``translation``);
    - ``preprocess`` (optional): booleans ``cull``, ``outliers``,
      ``frustum``, ``trim``, ``icp``, ``merge_observed``;
    - ``observed`` and ``samples`` (list): entries given as a PLY path, or
      an object with ``cloud`` (PLY) or ``depth`` (depth map, camera frame
      only) plus optional ``labels`` and ``confidences`` grids (.npy), and an
      optional ``seed``.

    Raises:
        InputError: missing or malformed manifest or cloud files.
        SampleSetError: no samples, labels outside the vocabulary or
            misaligned samples.
        FloorEstimationError: if the floor can not be estimated.
    """
    settings = settings or IngestSettings()
    try:
        path = jsonconfig.manifest_path(manifest_path)
    except (FileNotFoundError, jsonconfig.TooManyFilesError) as e:
        raise InputError(manifest_path, str(e)) from e
    reader = _ManifestReader(path)
    content = reader.content
    warnings: t.List[str] = []

    def warn(message: str) -> None:
        logger.warning(message)
        warnings.append(message)

    version = content.get("version", MANIFEST_VERSION)
    if version != MANIFEST_VERSION:
        raise InputError(path, "unsupported manifest version {}".format(version))
    frame = content.get("frame", "camera")
    if frame not in ("camera", "world"):
        raise InputError(path, "unknown frame '{}'".format(frame))

    try:
        vocabulary = {int(k): str(v) for k, v in content["vocabulary"].items()}
        camera = reader.section("camera")
        intrinsics = CameraIntrinsics(
            int(camera["width"]), int(camera["height"]), float(camera["hfov"])
        )
        frustum_section = reader.section("frustum")
        support = Frustum(
            intrinsics,
            float(frustum_section.get("near", -0.2)),
            float(frustum_section.get("far", 11.0)),
            float(frustum_section.get("expansion", 500.0)),
        )
    except (AttributeError, KeyError, TypeError, ValueError) as e:
        raise InputError(path, "invalid camera, frustum or vocabulary: {}".format(e))

    floor_label = content.get("floor_label", 11)
    if not isinstance(floor_label, list):
        floor_label = [floor_label]
    floor_labels = [int(v) for v in floor_label]
    for label in floor_labels:
        vocabulary.setdefault(label, "floor")

    steps = dict(_PREPROCESS_STEPS)
    for key, value in reader.section("preprocess").items():
        if key not in steps:
            raise InputError(path, "unknown preprocessing step '{}'".format(key))
        steps[key] = bool(value)
    if settings.icp is not None:
        steps["icp"] = settings.icp

    entries = content["samples"]
    if not isinstance(entries, list):
        raise InputError(path, "'samples' must be a list")
    if not entries:
        raise SampleSetError("{}: the manifest lists no samples".format(path))

    observed, observed_labeled, _, _ = _read_entry(
        reader, content["observed"], "observed", intrinsics, frame
    )
    if not observed_labeled:
        warn("observed cloud has no label channel, all its labels set to 0")
    raw_samples = []
    for i, entry in enumerate(entries):
        cloud, labeled, seed, source = _read_entry(
            reader, entry, "samples[{}]".format(i), intrinsics, frame
        )
        if not labeled:
            warn(
                "sample {} ({}) has no label channel, all its labels set to 0".format(
                    i, source
                )
            )
        raw_samples.append((cloud, seed, source))

    known = set(vocabulary) | {0}
    for name, cloud in [("observed cloud", observed)] + [
        ("sample {}".format(i), s[0]) for i, s in enumerate(raw_samples)
    ]:
        unknown = set(numpy.unique(cloud.labels).tolist()) - known
        if unknown:
            raise SampleSetError(
                "{}: {} carries labels {} absent from the vocabulary".format(
                    path, name, sorted(unknown)
                )
            )

    # world frame clouds go through the camera frame only if a camera frame
    # step needs it
    to_camera = None
    in_camera = frame == "camera"
    if frame == "world":
        if reader.section("alignment").get("policy") == "ransac":
            raise InputError(path, "world frame manifests can not use ransac alignment")
        if steps["cull"] or steps["outliers"] or steps["frustum"]:
            to_world, _ = _alignment(reader, observed, floor_labels, settings)
            to_camera = to_world.inverse()
            in_camera = True

    def preprocess(cloud: LabeledPointCloud) -> LabeledPointCloud:
        if to_camera is not None:
            cloud = apply_transform(cloud, to_camera)
        if steps["cull"]:
            cloud = cull_depth(cloud, settings.max_depth)
        if steps["outliers"]:
            cloud = radius_outlier_removal(
                cloud, settings.outlier_radius, settings.outlier_neighbors
            )
        if steps["frustum"]:
            cloud = frustum_filter(cloud, support)
        return cloud

    observed = preprocess(observed)
    camera_samples = [preprocess(cloud) for cloud, _, _ in raw_samples]

    try:
        alignment, plane = _alignment(reader, observed, floor_labels, settings)
    except FloorEstimationError as e:
        raise FloorEstimationError("{}: {}".format(path, e)) from e
    height = camera_height(alignment)
    low, high = settings.camera_height_band
    # an identity alignment carries no camera pose
    posed = reader.section("alignment").get("policy", "ransac") != "identity"
    if posed and not low <= height <= high:
        warn(
            "estimated camera height {:.2f} m is outside [{}, {}]".format(
                height, low, high
            )
        )

    if in_camera:
        observed = apply_transform(observed, alignment)
    world_samples = []
    shifts = []
    for i, cloud in enumerate(camera_samples):
        if in_camera:
            cloud = apply_transform(cloud, alignment)
        if steps["icp"] and len(cloud) and len(observed):
            shift = translation_icp(
                cloud, observed, settings.icp_iters, settings.icp_tolerance
            )
            shifts.append(shift.tolist())
            cloud = cloud.with_points(cloud.points + shift)
        _check_alignment(
            cloud, floor_labels, settings.misalignment_tolerance, "sample {}".format(i)
        )
        world_samples.append(cloud)

    if steps["trim"]:
        observed = trim_above_floor(observed, settings.trim_band)
        world_samples = [trim_above_floor(c, settings.trim_band) for c in world_samples]

    samples = []
    for i, (cloud, (_, seed, source)) in enumerate(zip(world_samples, raw_samples)):
        if steps["merge_observed"]:
            cloud = LabeledPointCloud.concatenate([cloud, observed])
        samples.append(WorkspaceSample(cloud, i, seed, source))

    ingest: t.Dict[str, t.Any] = {
        "manifest": str(path),
        "n_samples": len(samples),
        "observed_points": len(observed),
        "sample_points": [len(s.cloud) for s in samples],
        "camera_height": height,
        "plane": None,
        "inlier_ratio": None,
    }
    if plane is not None:
        ingest["plane"] = {
            "normal": plane.normal.tolist(),
            "offset": plane.offset,
            "rmse": plane.rmse,
            "inlier_ratio": plane.inlier_ratio,
        }
        ingest["inlier_ratio"] = plane.inlier_ratio
    if shifts:
        ingest["icp_translations"] = shifts

    logger.info(
        "loaded %d samples from %s (camera height %.2f m)", len(samples), path, height
    )
    return SampleSet(
        tuple(samples),
        observed,
        support,
        alignment,
        vocabulary,
        tuple(warnings),
        ingest,
    )


def write_sample_set(
    sample_set: SampleSet, directory: t.Union[str, os.PathLike]
) -> pathlib.Path:
    """Write the sample set as a world frame bundle (PLY clouds and a
    manifest) that load_sample_set reads back unchanged.

    Returns:
        The path of the manifest.
    """
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cloud_io.write_ply(directory / "observed.ply", sample_set.observed)
    entries = []
    for sample in sample_set.samples:
        name = "sample_{:04d}.ply".format(sample.sample_id)
        cloud_io.write_ply(directory / name, sample.cloud)
        entry: t.Dict[str, t.Any] = {"cloud": name}
        if sample.seed is not None:
            entry["seed"] = sample.seed
        entries.append(entry)

    floor_labels = [k for k, v in sample_set.label_vocabulary.items() if v == "floor"]
    intrinsics = sample_set.support.intrinsics
    manifest = {
        "version": MANIFEST_VERSION,
        "frame": "world",
        "camera": {
            "width": intrinsics.width,
            "height": intrinsics.height,
            "hfov": intrinsics.hfov,
        },
        "frustum": {
            "near": sample_set.support.near,
            "far": sample_set.support.far,
            "expansion": sample_set.support.expansion,
        },
        "vocabulary": {
            str(k): v for k, v in sorted(sample_set.label_vocabulary.items())
        },
        "floor_label": floor_labels,
        "alignment": dict(policy="transform", **sample_set.alignment.to_dict()),
        "preprocess": {step: False for step in _PREPROCESS_STEPS},
        "observed": "observed.ply",
        "samples": entries,
    }
    path = directory / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("wrote %d samples to %s", sample_set.n, directory)
    return path
