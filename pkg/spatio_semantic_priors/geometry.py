"""Point-cloud and depth-map primitives.

Camera frame convention (used by every function of this module): +Z points
forward along the optical axis, +X to the right of the image and +Y up, i.e.
image rows grow towards -Y.  Pixel (u, v) (column u, row v) has its center at
(u + 0.5, v + 0.5) and the principal point is the image center.  Pixels are
square, the focal length is derived from the horizontal field of view.

Note that this frame is left handed: a proper rotation mapping it to a z-up
world frame sends the camera +X axis to the left of the heading.  Distances
and containment are unaffected, so nothing downstream depends on it.

All functions are pure: clouds are never modified in place.
"""
import dataclasses
import logging
import math
import typing

import numpy
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation


logger = logging.getLogger(__name__)

# a point of the workspace, in meters, shape (3,)
Vec3 = numpy.ndarray

# depth value of pixels without a valid measurement
INVALID_DEPTH = float("nan")

_ORTHONORMAL_TOLERANCE = 1e-9


def _read_only(array: numpy.ndarray) -> numpy.ndarray:
    array.setflags(write=False)
    return array


@dataclasses.dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera described by its image size (pixels) and horizontal field
    of view (radians)."""

    width: int
    height: int
    hfov: float

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(
                "image size must be at least 1x1 (got {}x{})".format(
                    self.width, self.height
                )
            )
        if not 0.0 < self.hfov < math.pi:
            raise ValueError(
                "horizontal field of view must be in (0, pi) (got {})".format(self.hfov)
            )

    @property
    def focal(self) -> float:
        return self.width / (2.0 * math.tan(self.hfov / 2.0))

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0


@dataclasses.dataclass(frozen=True, eq=False)
class DepthImage:
    """Row-major grid of metric depths, shape (height, width).

    Non finite values mark invalid pixels; every finite value must be strictly
    positive.
    """

    depths: numpy.ndarray

    def __post_init__(self):
        depths = numpy.array(self.depths, dtype=numpy.float64)
        if depths.ndim != 2:
            raise ValueError(
                "depth image must be 2 dimensional (got shape {})".format(depths.shape)
            )
        valid = numpy.isfinite(depths)
        if numpy.any(depths[valid] <= 0.0):
            raise ValueError("valid depths must be strictly positive")
        object.__setattr__(self, "depths", _read_only(depths))

    @classmethod
    def from_values(
        cls, width: int, height: int, values: typing.Sequence[float]
    ) -> "DepthImage":
        values = numpy.asarray(values, dtype=numpy.float64).ravel()
        if values.size != width * height:
            raise ValueError(
                "expected {} depth values for a {}x{} image, got {}".format(
                    width * height, width, height, values.size
                )
            )
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.depths.shape[1]

    @property
    def height(self) -> int:
        return self.depths.shape[0]

    def valid_mask(self) -> numpy.ndarray:
        return numpy.isfinite(self.depths)


@dataclasses.dataclass(frozen=True, eq=False)
class LabeledPointCloud:
    """3D points with a semantic label (0: unlabeled / structure), a confidence
    in [0, 1] and optionally an RGB color per point.

    All per point arrays are stored read-only and always have the same length
    as ``points``.
    """

    points: numpy.ndarray
    labels: typing.Optional[numpy.ndarray] = None
    confidences: typing.Optional[numpy.ndarray] = None
    colors: typing.Optional[numpy.ndarray] = None

    def __post_init__(self):
        points = numpy.array(self.points, dtype=numpy.float64).reshape(-1, 3)
        size = len(points)
        if not numpy.all(numpy.isfinite(points)):
            raise ValueError("point coordinates must be finite")

        if self.labels is None:
            labels = numpy.zeros(size, dtype=numpy.int64)
        else:
            labels = numpy.array(self.labels, dtype=numpy.int64).reshape(-1)

        if self.confidences is None:
            confidences = numpy.ones(size, dtype=numpy.float64)
        else:
            confidences = numpy.array(self.confidences, dtype=numpy.float64).reshape(-1)

        colors = None
        if self.colors is not None:
            colors = numpy.array(self.colors, dtype=numpy.uint8).reshape(-1, 3)

        for name, array in (
            ("labels", labels),
            ("confidences", confidences),
            ("colors", colors),
        ):
            if array is not None and len(array) != size:
                raise ValueError(
                    "{} has {} entries but the cloud has {} points".format(
                        name, len(array), size
                    )
                )
        if numpy.any((confidences < 0.0) | (confidences > 1.0)):
            raise ValueError("confidences must be in [0, 1]")

        object.__setattr__(self, "points", _read_only(points))
        object.__setattr__(self, "labels", _read_only(labels))
        object.__setattr__(self, "confidences", _read_only(confidences))
        if colors is not None:
            object.__setattr__(self, "colors", _read_only(colors))

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> "LabeledPointCloud":
        return cls(numpy.zeros((0, 3)))

    @classmethod
    def concatenate(
        cls, clouds: typing.Sequence["LabeledPointCloud"]
    ) -> "LabeledPointCloud":
        """Merge clouds into one.  Colors are kept only if every cloud has them."""
        if not clouds:
            return cls.empty()
        colors = None
        if all(c.colors is not None for c in clouds):
            colors = numpy.concatenate([c.colors for c in clouds])
        return cls(
            numpy.concatenate([c.points for c in clouds]),
            numpy.concatenate([c.labels for c in clouds]),
            numpy.concatenate([c.confidences for c in clouds]),
            colors,
        )

    @property
    def xy(self) -> numpy.ndarray:
        return self.points[:, :2]

    def select(self, mask: numpy.ndarray) -> "LabeledPointCloud":
        """Subset of the cloud (boolean mask or index array), all per point
        arrays filtered in lockstep."""
        return LabeledPointCloud(
            self.points[mask],
            self.labels[mask],
            self.confidences[mask],
            None if self.colors is None else self.colors[mask],
        )

    def with_labels(self, labels: typing.Iterable[int]) -> "LabeledPointCloud":
        """The points carrying one of the given labels."""
        return self.select(numpy.isin(self.labels, list(labels)))

    def with_points(self, points: numpy.ndarray) -> "LabeledPointCloud":
        """Same labels, confidences and colors, new coordinates."""
        return LabeledPointCloud(points, self.labels, self.confidences, self.colors)


@dataclasses.dataclass(frozen=True, eq=False)
class RigidTransform:
    """p -> rotation . p + translation"""

    rotation: numpy.ndarray
    translation: numpy.ndarray

    def __post_init__(self):
        rotation = numpy.array(self.rotation, dtype=numpy.float64).reshape(3, 3)
        translation = numpy.array(self.translation, dtype=numpy.float64).reshape(3)
        if not numpy.allclose(
            rotation.T @ rotation, numpy.eye(3), rtol=0.0, atol=_ORTHONORMAL_TOLERANCE
        ):
            raise ValueError("rotation matrix is not orthonormal")
        if abs(numpy.linalg.det(rotation) - 1.0) > _ORTHONORMAL_TOLERANCE:
            raise ValueError("rotation matrix has a determinant different from +1")
        if not numpy.all(numpy.isfinite(translation)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "rotation", _read_only(rotation))
        object.__setattr__(self, "translation", _read_only(translation))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(numpy.eye(3), numpy.zeros(3))

    @classmethod
    def from_rotation(
        cls, rotation: Rotation, translation: typing.Sequence[float] = (0.0, 0.0, 0.0)
    ) -> "RigidTransform":
        return cls(rotation.as_matrix(), numpy.asarray(translation, dtype=float))

    @classmethod
    def from_camera_pose(
        cls, position: typing.Sequence[float], yaw: float
    ) -> "RigidTransform":
        """Camera to world transform of a level camera at ``position`` whose
        optical axis points along the world heading ``yaw``; camera up is world
        +Z."""
        forward = numpy.array([math.cos(yaw), math.sin(yaw), 0.0])
        up = numpy.array([0.0, 0.0, 1.0])
        # third column is fixed by det = +1 (see module documentation)
        side = numpy.cross(up, forward)
        return cls(numpy.column_stack([side, up, forward]), position)

    def apply(self, points: numpy.ndarray) -> numpy.ndarray:
        points = numpy.asarray(points, dtype=numpy.float64)
        return points @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform applying ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: typing.Dict[str, typing.Any]) -> "RigidTransform":
        return cls(d["rotation"], d["translation"])


@dataclasses.dataclass(frozen=True)
class Frustum:
    """Expanded viewing pyramid of the camera.

    The lateral extent of the image plane is widened by ``expansion`` pixels on
    each side.  The apex of the pyramid sits at ``z = near``; a negative near
    value therefore leaves some clearance behind the camera.
    """

    intrinsics: CameraIntrinsics
    near: float = -0.2
    far: float = 11.0
    expansion: float = 500.0

    def __post_init__(self):
        if not self.near < self.far:
            raise ValueError(
                "frustum near plane ({}) must be before its far plane ({})".format(
                    self.near, self.far
                )
            )
        if self.expansion < 0:
            raise ValueError(
                "frustum expansion must be non negative (got {})".format(
                    self.expansion
                )
            )

    @property
    def tan_half_width(self) -> float:
        return (self.intrinsics.width / 2.0 + self.expansion) / self.intrinsics.focal

    @property
    def tan_half_height(self) -> float:
        return (self.intrinsics.height / 2.0) / self.intrinsics.focal

    def contains(self, points: numpy.ndarray) -> numpy.ndarray:
        """Boolean mask of the (camera frame) points inside the frustum."""
        points = numpy.asarray(points, dtype=numpy.float64).reshape(-1, 3)
        x, y, z = points[:, 0], points[:, 1], points[:, 2]
        reach = z - self.near
        return (
            (z >= self.near)
            & (z <= self.far)
            & (numpy.abs(x) <= self.tan_half_width * reach)
            & (numpy.abs(y) <= self.tan_half_height * reach)
        )

    def corners(self) -> numpy.ndarray:
        """Apex followed by the four far plane corners, shape (5, 3)."""
        reach = self.far - self.near
        w = self.tan_half_width * reach
        h = self.tan_half_height * reach
        return numpy.array(
            [
                [0.0, 0.0, self.near],
                [-w, -h, self.far],
                [w, -h, self.far],
                [w, h, self.far],
                [-w, h, self.far],
            ]
        )


def backproject(
    depth: DepthImage,
    intrinsics: CameraIntrinsics,
    labels: typing.Optional[numpy.ndarray] = None,
    confidences: typing.Optional[numpy.ndarray] = None,
    colors: typing.Optional[numpy.ndarray] = None,
) -> LabeledPointCloud:
    """Ray preserving back-projection of a depth image.

    Each valid pixel yields one point on the pinhole ray through the pixel
    center, whose forward (z) coordinate equals the pixel depth.  Optional
    per-pixel grids (labels, confidences: (height, width); colors:
    (height, width, 3)) are carried over to the points.

    Raises:
        ValueError: if the image or one of the grids does not match the size
            given by the intrinsics.
    """
    if (depth.width, depth.height) != (intrinsics.width, intrinsics.height):
        raise ValueError(
            "depth image is {}x{} but the intrinsics describe a {}x{} image".format(
                depth.width, depth.height, intrinsics.width, intrinsics.height
            )
        )
    shape = (depth.height, depth.width)
    for name, grid in (("labels", labels), ("confidences", confidences)):
        if grid is not None and numpy.shape(grid) != shape:
            raise ValueError(
                "{} grid has shape {}, expected {}".format(
                    name, numpy.shape(grid), shape
                )
            )
    if colors is not None and numpy.shape(colors) != shape + (3,):
        raise ValueError(
            "color grid has shape {}, expected {}".format(
                numpy.shape(colors), shape + (3,)
            )
        )

    # row major order of the valid pixels
    v, u = numpy.nonzero(depth.valid_mask())
    d = depth.depths[v, u]
    focal = intrinsics.focal
    x = (u + 0.5 - intrinsics.cx) * d / focal
    y = -(v + 0.5 - intrinsics.cy) * d / focal

    return LabeledPointCloud(
        numpy.column_stack([x, y, d]),
        None if labels is None else numpy.asarray(labels)[v, u],
        None if confidences is None else numpy.asarray(confidences)[v, u],
        None if colors is None else numpy.asarray(colors)[v, u],
    )


def project(
    points: numpy.ndarray, intrinsics: CameraIntrinsics
) -> typing.Tuple[numpy.ndarray, numpy.ndarray, numpy.ndarray]:
    """Inverse of :func:`backproject`: pixel column, pixel row and depth of
    camera frame points (points must be in front of the camera)."""
    points = numpy.asarray(points, dtype=numpy.float64).reshape(-1, 3)
    focal = intrinsics.focal
    z = points[:, 2]
    u = points[:, 0] * focal / z + intrinsics.cx - 0.5
    v = -points[:, 1] * focal / z + intrinsics.cy - 0.5
    return u, v, z


def cull_depth(cloud: LabeledPointCloud, max_depth: float = 20.0) -> LabeledPointCloud:
    """Keep the (camera frame) points whose forward coordinate is at most
    max_depth."""
    if max_depth <= 0:
        raise ValueError(
            "max_depth must be strictly positive (got {})".format(max_depth)
        )
    return cloud.select(cloud.points[:, 2] <= max_depth)


def radius_outlier_removal(
    cloud: LabeledPointCloud, radius: float = 0.1, min_neighbors: int = 10
) -> LabeledPointCloud:
    """Keep the points having at least ``min_neighbors`` other points strictly
    closer than ``radius``."""
    if radius <= 0:
        raise ValueError("radius must be strictly positive (got {})".format(radius))
    if min_neighbors < 0:
        raise ValueError(
            "min_neighbors must be non negative (got {})".format(min_neighbors)
        )
    if len(cloud) == 0:
        return cloud
    tree = cKDTree(cloud.points)
    # the ball query is inclusive, the largest float below radius makes it strict
    counts = tree.query_ball_point(
        cloud.points, r=numpy.nextafter(radius, 0.0), return_length=True
    )
    # each point is its own neighbor
    keep = numpy.asarray(counts) - 1 >= min_neighbors
    logger.debug(
        "radius outlier removal: %d of %d points kept", int(keep.sum()), len(cloud)
    )
    return cloud.select(keep)


def apply_transform(cloud: LabeledPointCloud, t: RigidTransform) -> LabeledPointCloud:
    return cloud.with_points(t.apply(cloud.points))


def frustum_filter(cloud: LabeledPointCloud, f: Frustum) -> LabeledPointCloud:
    """Keep the (camera frame) points inside the frustum."""
    return cloud.select(f.contains(cloud.points))


def translation_icp_steps(
    source: LabeledPointCloud,
    target: LabeledPointCloud,
    max_iters: int = 30,
    tolerance: float = 1e-6,
) -> typing.Iterator[typing.Tuple[numpy.ndarray, float]]:
    """Iterations of a rotation free ICP aligning source onto target.

    Each iteration matches every (translated) source point to its nearest
    target point and moves the source by the mean offset of the matched pairs.
    Yields, per iteration, the updated cumulative translation and the root mean
    square matched distance of the correspondences used for that update; the
    latter never increases from one iteration to the next.
    Stops after max_iters iterations or once the update is shorter than
    tolerance.
    """
    if len(source) == 0 or len(target) == 0:
        raise ValueError("translation ICP requires two non empty clouds")
    tree = cKDTree(target.points)
    translation = numpy.zeros(3)
    for _ in range(max_iters):
        moved = source.points + translation
        distances, indexes = tree.query(moved, k=1)
        residual = float(numpy.sqrt(numpy.mean(distances**2)))
        update = numpy.mean(target.points[indexes] - moved, axis=0)
        translation = translation + update
        yield translation.copy(), residual
        if numpy.linalg.norm(update) < tolerance:
            return


def translation_icp(
    source: LabeledPointCloud,
    target: LabeledPointCloud,
    max_iters: int = 30,
    tolerance: float = 1e-6,
) -> Vec3:
    """Translation moving source onto target (rotation fixed at identity).

    Raises:
        ValueError: if one of the clouds is empty.
    """
    translation = numpy.zeros(3)
    iterations = 0
    for translation, residual in translation_icp_steps(
        source, target, max_iters, tolerance
    ):
        iterations += 1
    logger.debug(
        "translation ICP: %d iterations, translation %s", iterations, translation
    )
    return translation
