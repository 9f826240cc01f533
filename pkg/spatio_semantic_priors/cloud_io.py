"""Readers and writers for labeled point clouds (PLY) and depth maps.

Depth maps come in two flavors:

- binary (any extension but ``.txt``): the 4 bytes magic ``SSPD``, width and
  height as little endian uint32, then width*height little endian float32
  values in row-major order.
- text (``.txt``): a first line ``width height`` followed by ``height`` lines
  of ``width`` values.

In both, NaN marks pixels without a valid depth.  Per-pixel label and
confidence grids are stored as ``.npy`` arrays.
"""
import dataclasses
import logging
import os
import pathlib
import typing

import numpy
from plyfile import PlyData, PlyElement

from .errors import InputError
from .geometry import DepthImage, LabeledPointCloud


logger = logging.getLogger(__name__)

PathLike = typing.Union[str, os.PathLike]

DEPTH_MAGIC = b"SSPD"


@dataclasses.dataclass(frozen=True)
class PlyContent:
    """A cloud read from a PLY file, with what the file did (not) provide."""

    cloud: LabeledPointCloud
    has_labels: bool
    has_confidences: bool


def read_ply(path: PathLike) -> PlyContent:
    """Read the vertices of a PLY file (ascii or binary).

    x, y and z are mandatory; label, confidence and red/green/blue are used
    when present, any other property is ignored.

    Raises:
        InputError: if the file is missing, is not a PLY file or lacks
            vertex coordinates.
    """
    path = pathlib.Path(path)
    if not path.is_file():
        raise InputError(path, "point cloud file not found")
    try:
        ply = PlyData.read(str(path))
        vertex = ply["vertex"].data
    except KeyError:
        raise InputError(path, "no vertex element")
    except Exception as e:
        raise InputError(path, "failed to parse PLY file: {}".format(e)) from e

    names = vertex.dtype.names or ()
    if not all(axis in names for axis in ("x", "y", "z")):
        raise InputError(path, "vertices lack x, y or z")

    points = numpy.column_stack([vertex["x"], vertex["y"], vertex["z"]])
    labels = vertex["label"] if "label" in names else None
    confidences = vertex["confidence"] if "confidence" in names else None
    colors = None
    if all(c in names for c in ("red", "green", "blue")):
        colors = numpy.column_stack([vertex["red"], vertex["green"], vertex["blue"]])

    try:
        cloud = LabeledPointCloud(points, labels, confidences, colors)
    except ValueError as e:
        raise InputError(path, str(e)) from e

    logger.debug("read %d points from %s", len(cloud), path)
    return PlyContent(cloud, labels is not None, confidences is not None)


def write_ply(path: PathLike, cloud: LabeledPointCloud) -> None:
    """Write the cloud as an ascii PLY file with label and confidence
    properties (and colors, if the cloud has some)."""
    fields = [
        ("x", "f8"),
        ("y", "f8"),
        ("z", "f8"),
        ("label", "i4"),
        ("confidence", "f8"),
    ]
    if cloud.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    vertex = numpy.empty(len(cloud), dtype=fields)
    vertex["x"] = cloud.points[:, 0]
    vertex["y"] = cloud.points[:, 1]
    vertex["z"] = cloud.points[:, 2]
    vertex["label"] = cloud.labels
    vertex["confidence"] = cloud.confidences
    if cloud.colors is not None:
        vertex["red"] = cloud.colors[:, 0]
        vertex["green"] = cloud.colors[:, 1]
        vertex["blue"] = cloud.colors[:, 2]
    PlyData([PlyElement.describe(vertex, "vertex")], text=True).write(str(path))


def read_depth(path: PathLike) -> DepthImage:
    """Read a binary or text depth map (see module documentation).

    Raises:
        InputError: if the file is missing or malformed.
    """
    path = pathlib.Path(path)
    if not path.is_file():
        raise InputError(path, "depth map file not found")

    if path.suffix == ".txt":
        try:
            with open(path) as f:
                width, height = (int(v) for v in f.readline().split())
                values = numpy.loadtxt(f, dtype=numpy.float64, ndmin=2)
        except ValueError as e:
            raise InputError(path, "malformed text depth map: {}".format(e)) from e
    else:
        with open(path, "rb") as f:
            if f.read(4) != DEPTH_MAGIC:
                raise InputError(path, "not a depth map (bad magic)")
            header = numpy.frombuffer(f.read(8), dtype="<u4")
            if header.size != 2:
                raise InputError(path, "truncated depth map header")
            width, height = int(header[0]), int(header[1])
            payload = f.read()
        if len(payload) % 4:
            raise InputError(path, "truncated depth map")
        values = numpy.frombuffer(payload, dtype="<f4").astype(numpy.float64)

    try:
        return DepthImage.from_values(width, height, values)
    except ValueError as e:
        raise InputError(path, str(e)) from e


def write_depth(path: PathLike, depth: DepthImage) -> None:
    """Write a depth map, as text if the path ends with .txt, binary
    otherwise."""
    path = pathlib.Path(path)
    if path.suffix == ".txt":
        with open(path, "w") as f:
            f.write("{} {}\n".format(depth.width, depth.height))
            numpy.savetxt(f, depth.depths, fmt="%.9g")
    else:
        with open(path, "wb") as f:
            f.write(DEPTH_MAGIC)
            f.write(numpy.array([depth.width, depth.height], dtype="<u4").tobytes())
            f.write(depth.depths.astype("<f4").tobytes())


def read_grid(
    path: PathLike, shape: typing.Tuple[int, int], dtype: typing.Any
) -> numpy.ndarray:
    """Read a per-pixel grid stored with numpy.save and check its shape."""
    path = pathlib.Path(path)
    if not path.is_file():
        raise InputError(path, "grid file not found")
    try:
        grid = numpy.load(path, allow_pickle=False)
    except ValueError as e:
        raise InputError(path, "failed to read grid: {}".format(e)) from e
    if grid.shape != shape:
        raise InputError(
            path, "grid has shape {}, expected {}".format(grid.shape, shape)
        )
    return grid.astype(dtype)
