"""Roadmap planning maximizing the probability of reaching a target without
collision.

The roadmap (PRM*) is built once per sample set: each edge stores the
bitmask of the samples in which it is collision free, each vertex the bitmask
of the samples in which it is collision free and, per label, of the samples
in which a target point lies within the acquisition radius.  The success mask
of a path is the AND of the start's free mask, of its edge masks and of the
target mask of its last vertex; the planner returns the path whose success
mask has the most bits set (ties broken by length).
"""
import dataclasses
import heapq
import logging
import math
import os
import typing

import networkx as nx
import numpy
import shapely
from scipy.spatial import cKDTree

from .errors import PlanningInfeasibleError
from .priors import (
    Configuration,
    RobotFootprint,
    SampleSet,
    collision_matrix,
    densify_segment,
    detection_mask,
    popcount,
    target_matrix,
    to_mask,
    wrap_angle,
)


logger = logging.getLogger(__name__)

DEFAULT_FRONTIER_CAP = 2_000_000

ROADMAP_DUMP_HEADER = "roadmap v1"


def default_gamma(area: float) -> float:
    """PRM* connection constant for a planar free space of the given area."""
    return 2.0 * math.sqrt(3.0 * area / math.pi)


def connection_radius(n: int, gamma: float) -> float:
    """r(n) = gamma * (log n / n) ^ (1/2)"""
    if n < 2:
        return 0.0
    return gamma * math.sqrt(math.log(n) / n)


@dataclasses.dataclass(frozen=True, eq=False)
class Roadmap:
    """Undirected roadmap whose edges carry per-sample feasibility bitmasks
    (graph edge attributes "mask" and "length").

    Vertex 0 is the start.
    """

    vertices: typing.Tuple[Configuration, ...]
    graph: nx.Graph
    free_masks: typing.Tuple[int, ...]
    target_masks: typing.Dict[int, typing.Tuple[int, ...]]
    n_samples: int
    step: float = 0.05
    radius: float = 0.0
    footprint: RobotFootprint = dataclasses.field(default_factory=RobotFootprint)
    target_radius: float = 1.0

    @property
    def start(self) -> Configuration:
        return self.vertices[0]

    def edge_mask(self, u: int, v: int) -> int:
        return self.graph.edges[u, v]["mask"]

    def dump(self, path: typing.Union[str, os.PathLike]) -> None:
        """Write the roadmap as text: vertices with their free masks, edges
        with length and mask, non zero target masks.  Masks are hexadecimal,
        bit i standing for sample i."""
        with open(path, "w") as f:
            f.write("{}\n".format(ROADMAP_DUMP_HEADER))
            f.write("samples {}\n".format(self.n_samples))
            f.write("step {!r}\n".format(self.step))
            f.write("radius {!r}\n".format(self.radius))
            f.write("vertices {}\n".format(len(self.vertices)))
            for i, (q, mask) in enumerate(zip(self.vertices, self.free_masks)):
                f.write(
                    "v {} {!r} {!r} {!r} {:x}\n".format(i, q.x, q.y, q.theta, mask)
                )
            edges = sorted(
                self.graph.edges(data=True), key=lambda e: (min(e[:2]), max(e[:2]))
            )
            f.write("edges {}\n".format(len(edges)))
            for u, v, data in edges:
                f.write(
                    "e {} {} {!r} {:x}\n".format(
                        min(u, v), max(u, v), data["length"], data["mask"]
                    )
                )
            for label in sorted(self.target_masks):
                for i, mask in enumerate(self.target_masks[label]):
                    if mask:
                        f.write("t {} {} {:x}\n".format(label, i, mask))


@dataclasses.dataclass
class PlanResult:
    path: typing.List[Configuration]
    p_plan: float
    p_det: float
    length: float
    success_mask: int
    label: int
    n_samples: int
    cap_hit: bool = False

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "label": self.label,
            "path": [[q.x, q.y, q.theta] for q in self.path],
            "p_plan": self.p_plan,
            "p_det": self.p_det,
            "length": self.length,
            "success_mask": "{:x}".format(self.success_mask),
            "n_samples": self.n_samples,
            "cap_hit": self.cap_hit,
        }

    @classmethod
    def from_dict(cls, d: typing.Dict[str, typing.Any]) -> "PlanResult":
        return cls(
            [Configuration(*q) for q in d["path"]],
            d["p_plan"],
            d["p_det"],
            d["length"],
            int(d["success_mask"], 16),
            d["label"],
            d["n_samples"],
            d.get("cap_hit", False),
        )


def path_length(
    path: typing.Sequence[Configuration], angular_weight: float = 0.0
) -> float:
    """C-space length: sum over segments of
    sqrt(dx^2 + dy^2 + (angular_weight * wrapped dtheta)^2)."""
    length = 0.0
    for a, b in zip(path, path[1:]):
        turn = angular_weight * wrap_angle(b.theta - a.theta)
        length += math.sqrt((b.x - a.x) ** 2 + (b.y - a.y) ** 2 + turn**2)
    return length


def _sample_vertices(
    sample_set: SampleSet,
    polygon: shapely.Polygon,
    fp: RobotFootprint,
    count: int,
    rng: numpy.random.Generator,
) -> numpy.ndarray:
    """(x, y, theta) of count vertices uniform over the polygon, rejecting
    the ones colliding in every sample."""
    min_x, min_y, max_x, max_y = polygon.bounds
    low = numpy.array([min_x, min_y])
    span = numpy.array([max_x - min_x, max_y - min_y])
    accepted: typing.List[numpy.ndarray] = []
    found = 0
    # a free space of less than a thousandth of the support is not worth it
    for _ in range(1000):
        if found >= count:
            break
        xy = low + rng.random((count, 2)) * span
        theta = rng.uniform(-math.pi, math.pi, count)
        inside = shapely.contains_xy(polygon, xy[:, 0], xy[:, 1])
        xy, theta = xy[inside], theta[inside]
        if not len(xy):
            continue
        usable = ~numpy.all(collision_matrix(xy, sample_set, fp), axis=1)
        batch = numpy.column_stack([xy[usable], theta[usable]])
        accepted.append(batch)
        found += len(batch)
    if found < count:
        logger.warning(
            "only %d of the %d roadmap vertices could be placed", found, count
        )
    if not accepted:
        return numpy.zeros((0, 3))
    return numpy.concatenate(accepted)[:count]


def _edge_masks(
    xy: numpy.ndarray,
    pairs: numpy.ndarray,
    sample_set: SampleSet,
    fp: RobotFootprint,
    step: float,
) -> typing.List[int]:
    """Per edge, the bitmask of the samples in which the densified edge is
    collision free."""
    if not len(pairs):
        return []
    edge_points = [densify_segment(tuple(xy[u]), tuple(xy[v]), step) for u, v in pairs]
    starts = numpy.cumsum([0] + [len(p) for p in edge_points[:-1]])
    edge_xy = numpy.concatenate(edge_points)
    free = numpy.empty((len(pairs), sample_set.n), dtype=bool)
    for j, index in enumerate(sample_set.index(fp)):
        free[:, j] = ~numpy.logical_or.reduceat(index.collides(edge_xy), starts)
    packed = numpy.packbits(free, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def build_prm(
    sample_set: SampleSet,
    start: Configuration,
    fp: RobotFootprint,
    n_vertices: int = 2000,
    seed: int = 1234,
    step: float = 0.05,
    target_radius: float = 1.0,
    gamma: typing.Optional[float] = None,
    labels: typing.Optional[typing.Iterable[int]] = None,
) -> Roadmap:
    """Build a PRM* roadmap over the floor footprint of the support.

    Vertices are drawn uniformly over the support polygon with a uniform
    heading (Philox generator keyed with seed); the ones colliding in every
    sample are replaced.  Vertices closer than the PRM* radius
    gamma * sqrt(log n / n) are connected (gamma defaults to
    default_gamma(support area)).  Target masks are computed for the given
    labels (default: the whole vocabulary).

    Raises:
        PlanningInfeasibleError: if the support is empty, does not contain
            the start or if the start collides in every sample.
        ValueError: if n_vertices < 2 or step <= 0.
    """
    if n_vertices < 2:
        raise ValueError(
            "a roadmap needs at least 2 vertices (got {})".format(n_vertices)
        )
    if step <= 0:
        raise ValueError("densification step must be positive (got {})".format(step))

    polygon = sample_set.support_polygon()
    if polygon.is_empty or polygon.area <= 0.0:
        raise PlanningInfeasibleError("the support of the sample set is empty")
    if not polygon.covers(shapely.Point(start.x, start.y)):
        raise PlanningInfeasibleError(
            "start ({:.2f}, {:.2f}) is outside the support".format(start.x, start.y)
        )

    start_xy = numpy.array([start.xy])
    start_free = to_mask(~collision_matrix(start_xy, sample_set, fp)[0])
    if start_free == 0:
        raise PlanningInfeasibleError("the start collides in every sample")

    rng = numpy.random.Generator(numpy.random.Philox(key=seed % 2**64))
    sampled = _sample_vertices(sample_set, polygon, fp, n_vertices - 1, rng)
    vertices = (start,) + tuple(Configuration(*row) for row in sampled)
    xy = numpy.array([q.xy for q in vertices])

    free = ~collision_matrix(xy, sample_set, fp)
    free_masks = tuple(to_mask(row) for row in free)

    if gamma is None:
        gamma = default_gamma(polygon.area)
    radius = connection_radius(len(vertices), gamma)
    pairs = cKDTree(xy).query_pairs(radius, output_type="ndarray")
    pairs = pairs[numpy.lexsort((pairs[:, 1], pairs[:, 0]))] if len(pairs) else pairs
    masks = _edge_masks(xy, pairs, sample_set, fp, step)

    graph = nx.Graph()
    graph.add_nodes_from(range(len(vertices)))
    for (u, v), mask in zip(pairs, masks):
        if mask:
            length = float(numpy.hypot(*(xy[u] - xy[v])))
            graph.add_edge(int(u), int(v), mask=mask, length=length)

    if labels is None:
        labels = sample_set.label_vocabulary.keys()
    target_masks = {}
    for label in labels:
        reached = target_matrix(xy, sample_set, label, fp, target_radius)
        target_masks[label] = tuple(to_mask(row) for row in reached)

    logger.info(
        "roadmap: %d vertices, %d edges (radius %.3f m)",
        len(vertices),
        graph.number_of_edges(),
        radius,
    )
    return Roadmap(
        vertices,
        graph,
        free_masks,
        target_masks,
        sample_set.n,
        step,
        radius,
        fp,
        target_radius,
    )


@dataclasses.dataclass
class SearchOutcome:
    vertices: typing.List[int]
    mask: int
    length: float
    cap_hit: bool
    pushed: int


def best_path(
    roadmap: Roadmap,
    targets: typing.Sequence[int],
    frontier_cap: int = DEFAULT_FRONTIER_CAP,
) -> SearchOutcome:
    """Best-first search over (vertex, surviving samples) states.

    States are expanded by decreasing bound (bits of their mask that some
    target can still use), then by increasing length.  A state is dropped if
    another state at the same vertex has a superset mask and is no longer.
    When more than frontier_cap states have been pushed, the best solution
    found so far is returned with cap_hit set.
    """
    union = 0
    for mask in targets:
        union |= mask

    best_value, best_length, best_state = 0, math.inf, -1
    parents: typing.List[typing.Tuple[int, int]] = []
    # per vertex: state id -> (mask, length) of the non dominated states
    labels: typing.List[typing.Dict[int, typing.Tuple[int, float]]] = [
        {} for _ in roadmap.vertices
    ]
    heap: typing.List[typing.Tuple[int, float, int, int, int]] = []
    cap_hit = False

    def push(vertex: int, mask: int, length: float, parent: int) -> None:
        bound = popcount(mask & union)
        if bound == 0 or bound < best_value:
            return
        if bound == best_value and length >= best_length:
            return
        here = labels[vertex]
        for other_mask, other_length in here.values():
            if mask & ~other_mask == 0 and other_length <= length:
                return
        for state in [
            s
            for s, (other_mask, other_length) in here.items()
            if other_mask & ~mask == 0 and length <= other_length
        ]:
            del here[state]
        state = len(parents)
        parents.append((vertex, parent))
        here[state] = (mask, length)
        heapq.heappush(heap, (-bound, length, state, vertex, mask))

    push(0, roadmap.free_masks[0], 0.0, -1)
    while heap:
        negative_bound, length, state, vertex, mask = heapq.heappop(heap)
        if state not in labels[vertex]:
            continue
        bound = -negative_bound
        if bound < best_value or (bound == best_value and length >= best_length):
            break
        value = popcount(mask & targets[vertex])
        if value and (
            value > best_value or (value == best_value and length < best_length)
        ):
            best_value, best_length, best_state = value, length, state
        for neighbor, data in roadmap.graph.adj[vertex].items():
            push(neighbor, mask & data["mask"], length + data["length"], state)
        if len(parents) > frontier_cap:
            cap_hit = True
            logger.warning(
                "search frontier cap (%d states) hit, returning the best path found",
                frontier_cap,
            )
            break

    if best_state < 0:
        return SearchOutcome([], 0, 0.0, cap_hit, len(parents))
    path = []
    state = best_state
    while state >= 0:
        vertex, state = parents[state]
        path.append(vertex)
    path.reverse()

    mask = roadmap.free_masks[0]
    for u, v in zip(path, path[1:]):
        mask &= roadmap.edge_mask(u, v)
    mask &= targets[path[-1]]
    return SearchOutcome(path, mask, best_length, cap_hit, len(parents))


def _with_headings(points: typing.List[Configuration]) -> typing.List[Configuration]:
    """Heading of each configuration along its outgoing segment (incoming one
    for the last)."""
    if len(points) < 2:
        return list(points)
    headings = [
        math.atan2(b.y - a.y, b.x - a.x) for a, b in zip(points, points[1:])
    ]
    headings.append(headings[-1])
    return [Configuration(q.x, q.y, h) for q, h in zip(points, headings)]


def plan(
    roadmap: Roadmap,
    sample_set: SampleSet,
    label: int,
    fp: RobotFootprint,
    angular_weight: float = 0.0,
    frontier_cap: int = DEFAULT_FRONTIER_CAP,
) -> PlanResult:
    """Path of the roadmap maximizing the probability of being collision free
    end to end and of ending within the target radius of a point with the
    label.

    An empty path (p_plan = 0, length 0) is returned if no path succeeds in
    any sample.

    Raises:
        UnknownLabelError: if the label is not in the vocabulary.
        ValueError: if the footprint is not the one of the roadmap.
    """
    if fp != roadmap.footprint:
        raise ValueError("the roadmap was built for another footprint")
    p_det_mask = detection_mask(sample_set, label)

    targets = roadmap.target_masks.get(label)
    if targets is None:
        xy = numpy.array([q.xy for q in roadmap.vertices])
        reached = target_matrix(xy, sample_set, label, fp, roadmap.target_radius)
        targets = tuple(to_mask(row) for row in reached)

    outcome = best_path(roadmap, targets, frontier_cap)
    path = _with_headings([roadmap.vertices[v] for v in outcome.vertices])

    result = PlanResult(
        path,
        popcount(outcome.mask) / sample_set.n,
        popcount(p_det_mask) / sample_set.n,
        path_length(path, angular_weight),
        outcome.mask,
        label,
        sample_set.n,
        outcome.cap_hit,
    )
    logger.info(
        "label %d: p_det %.2f, p_plan %.2f, length %.2f m (%d vertices, %d states)",
        label,
        result.p_det,
        result.p_plan,
        result.length,
        len(path),
        outcome.pushed,
    )
    return result
