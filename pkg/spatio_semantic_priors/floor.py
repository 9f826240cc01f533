"""Floor plane estimation and alignment.

The floor is found by RANSAC on floor labeled points, refined by a least
squares fit, and used to build the rigid transform bringing the floor onto the
world plane z = 0 (camera above it, +Z up).
"""
import dataclasses
import logging
import math
import typing

import numpy
from scipy.spatial.transform import Rotation

from .errors import FloorEstimationError
from .geometry import LabeledPointCloud, RigidTransform


logger = logging.getLogger(__name__)

# hypotheses evaluated per vectorized batch
_BATCH = 32

# a hypothesis whose cross product is below this fraction of the product of
# its edge lengths is considered collinear
_COLLINEAR_RATIO = 1e-9

PLANE_RECORD_HEADER = "plane v1"


@dataclasses.dataclass(frozen=True, eq=False)
class PlaneModel:
    """Plane normal . p = offset, with fit quality over its inliers."""

    normal: numpy.ndarray
    offset: float
    inlier_ratio: float
    rmse: float

    def __post_init__(self):
        normal = numpy.array(self.normal, dtype=numpy.float64).reshape(3)
        if not abs(numpy.linalg.norm(normal) - 1.0) <= 1e-9:
            raise ValueError(
                "plane normal must be a unit vector (got {})".format(normal)
            )
        if not 0.0 <= self.inlier_ratio <= 1.0:
            raise ValueError(
                "inlier ratio must be in [0, 1] (got {})".format(self.inlier_ratio)
            )
        if not self.rmse >= 0.0:
            raise ValueError("rmse must be non negative (got {})".format(self.rmse))
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    def distance(self, points: numpy.ndarray) -> numpy.ndarray:
        """Signed distances of the points to the plane."""
        return numpy.asarray(points, dtype=numpy.float64) @ self.normal - self.offset

    def to_text(self) -> str:
        return "\n".join(
            [
                PLANE_RECORD_HEADER,
                "normal {!r} {!r} {!r}".format(*(float(v) for v in self.normal)),
                "offset {!r}".format(self.offset),
                "rmse {!r}".format(float(self.rmse)),
                "inlier_ratio {!r}".format(float(self.inlier_ratio)),
            ]
        )

    @classmethod
    def from_text(cls, text: str) -> "PlaneModel":
        lines = [line.split() for line in text.strip().splitlines()]
        if len(lines) != 5 or " ".join(lines[0]) != PLANE_RECORD_HEADER:
            raise ValueError("not a plane record")
        fields = {line[0]: [float(v) for v in line[1:]] for line in lines[1:]}
        try:
            return cls(
                numpy.array(fields["normal"]),
                fields["offset"][0],
                fields["inlier_ratio"][0],
                fields["rmse"][0],
            )
        except (KeyError, IndexError) as e:
            raise ValueError("incomplete plane record: {}".format(e)) from e


def floor_points(
    cloud: LabeledPointCloud, floor_labels: typing.Iterable[int]
) -> LabeledPointCloud:
    """Floor candidates: the points carrying one of the floor labels."""
    return cloud.with_labels(floor_labels)


def _fit_least_squares(points: numpy.ndarray) -> typing.Tuple[numpy.ndarray, float]:
    centroid = points.mean(axis=0)
    _, _, vh = numpy.linalg.svd(points - centroid, full_matrices=False)
    normal = vh[-1] / numpy.linalg.norm(vh[-1])
    return normal, float(normal @ centroid)


def ransac_plane(
    points: LabeledPointCloud,
    inlier_threshold: float = 0.01,
    max_iters: int = 1000,
    seed: int = 0,
) -> PlaneModel:
    """Robust plane fit.

    ``max_iters`` hypotheses, each through 3 distinct random points, are
    scored by their count of points closer than ``inlier_threshold``; the
    best one (first one on ties) is refined by a least squares fit over its
    inliers.  The hypotheses only depend on the seed.  The returned normal is
    oriented so that the origin (the camera) lies on its positive side.

    Raises:
        FloorEstimationError: if there are fewer than 3 points or every
            hypothesis is degenerate (collinear points).
    """
    xyz = points.points
    size = len(xyz)
    if size < 3:
        raise FloorEstimationError(
            "plane fitting requires at least 3 points (got {})".format(size)
        )

    rng = numpy.random.Generator(numpy.random.Philox(key=seed))
    hypotheses = numpy.array(
        [rng.choice(size, size=3, replace=False) for _ in range(max_iters)],
        dtype=numpy.int64,
    ).reshape(-1, 3)

    best_count = -1
    best: typing.Optional[typing.Tuple[numpy.ndarray, float]] = None
    for start in range(0, len(hypotheses), _BATCH):
        batch = hypotheses[start : start + _BATCH]
        p0, p1, p2 = xyz[batch[:, 0]], xyz[batch[:, 1]], xyz[batch[:, 2]]
        e1, e2 = p1 - p0, p2 - p0
        normals = numpy.cross(e1, e2)
        norms = numpy.linalg.norm(normals, axis=1)
        scale = numpy.linalg.norm(e1, axis=1) * numpy.linalg.norm(e2, axis=1)
        valid = norms > _COLLINEAR_RATIO * scale
        if not numpy.any(valid):
            continue
        normals = normals[valid] / norms[valid, None]
        offsets = numpy.sum(normals * p0[valid], axis=1)
        counts = numpy.sum(
            numpy.abs(xyz @ normals.T - offsets) <= inlier_threshold, axis=0
        )
        index = int(numpy.argmax(counts))
        if counts[index] > best_count:
            best_count = int(counts[index])
            best = (normals[index], float(offsets[index]))

    if best is None:
        raise FloorEstimationError(
            "no plane found after {} hypotheses (collinear points?)".format(max_iters)
        )

    normal, offset = best
    inliers = numpy.abs(xyz @ normal - offset) <= inlier_threshold
    if numpy.count_nonzero(inliers) >= 3:
        normal, offset = _fit_least_squares(xyz[inliers])

    if offset > 0.0:
        normal, offset = -normal, -offset

    residuals = xyz @ normal - offset
    inliers = numpy.abs(residuals) <= inlier_threshold
    count = int(numpy.count_nonzero(inliers))
    rmse = float(numpy.sqrt(numpy.mean(residuals[inliers] ** 2))) if count else 0.0

    plane = PlaneModel(normal, offset, count / size, rmse)
    logger.info(
        "floor plane: normal %s, offset %.4f, inlier ratio %.3f, rmse %.4f",
        numpy.round(plane.normal, 4),
        plane.offset,
        plane.inlier_ratio,
        plane.rmse,
    )
    return plane


def floor_alignment(plane: PlaneModel) -> RigidTransform:
    """Rigid transform bringing the plane onto z = 0 with its normal along +Z,
    using the smallest rotation doing so.

    Raises:
        FloorEstimationError: if the plane normal is not a finite unit vector.
    """
    normal = numpy.asarray(plane.normal, dtype=numpy.float64)
    length = numpy.linalg.norm(normal)
    if not numpy.isfinite(length) or abs(length - 1.0) > 1e-6:
        raise FloorEstimationError("degenerate plane normal: {}".format(normal))

    z_axis = numpy.array([0.0, 0.0, 1.0])
    axis = numpy.cross(normal, z_axis)
    sin = numpy.linalg.norm(axis)
    cos = float(normal @ z_axis)
    if sin < 1e-12:
        if cos > 0.0:
            rotation = Rotation.identity()
        else:
            rotation = Rotation.from_rotvec([math.pi, 0.0, 0.0])
    else:
        rotation = Rotation.from_rotvec(axis / sin * math.atan2(sin, cos))

    # after rotation the plane is z = offset
    return RigidTransform.from_rotation(rotation, [0.0, 0.0, -plane.offset])


def trim_above_floor(cloud: LabeledPointCloud, band: float = 0.20) -> LabeledPointCloud:
    """Remove the points lower than ``band`` above the floor of a floor aligned
    cloud (below floor points included)."""
    return cloud.select(cloud.points[:, 2] >= band)


def camera_height(alignment: RigidTransform) -> float:
    """Height above the floor of the camera origin once aligned."""
    return float(alignment.translation[2])
