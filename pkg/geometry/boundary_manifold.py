"""
Boundary manifold module
Compact boundary manifolds N without boundary, with their geodesic distance d_N.

Closed-form families (circle, round sphere, flat torus) answer distance and
path queries analytically and expose orthonormal tangent frames so that chart
curves can be deformed along N. Mesh boundaries answer queries through exact
graph shortest paths.
"""

import itertools
import json
import logging
import math
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree

from utils.config import Config
from utils.exceptions import InvalidInputError, NoPathError, UnsupportedFamilyError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MeshPoint:
    """Vertex u, or the point at fraction t along edge (u, v)"""
    u: int
    v: int = None
    t: float = 0.0

    @property
    def is_vertex(self):
        return self.v is None


@dataclass(frozen=True)
class BoundarySampling:
    """
    Deterministic sample set of a boundary with neighbour pairs

    Attributes:
        points (list): Sample points
        pairs (np.ndarray): (m, 2) sample index pairs joined at a fixed level
        hops (np.ndarray): (m,) lattice hop count of each pair
        lengths (np.ndarray): (m,) boundary distance of each pair
    """
    points: list
    pairs: np.ndarray
    hops: np.ndarray
    lengths: np.ndarray


class BoundaryGeometry(ABC):
    """Base class for compact boundary manifolds"""

    kind = None
    supports_frames = True

    @property
    @abstractmethod
    def dim(self):
        """Manifold dimension of N"""

    @abstractmethod
    def normalize(self, y):
        """Return y in the fundamental domain; raise InvalidInputError if y is not on N"""

    @abstractmethod
    def distance(self, y, y2):
        """Geodesic distance d_N(y, y2)"""

    @abstractmethod
    def interpolate(self, y, y2, t):
        """Point at fraction t along a minimizing geodesic from y to y2"""

    @abstractmethod
    def diameter(self):
        """Supremum of d_N"""

    @abstractmethod
    def sample_graph(self, n, stencil=1):
        """Deterministic samples with neighbour pairs, see BoundarySampling"""

    @abstractmethod
    def to_config(self):
        """Serializable declaration of this geometry"""

    @abstractmethod
    def random_points(self, rng, n):
        """n points drawn from a numpy Generator"""

    def distance_array(self, ya, yb):
        """Row-wise distances between two point arrays of equal length"""
        return np.array([self.distance(a, b) for a, b in zip(ya, yb)], dtype=float)

    def distances_from(self, y, points):
        """Distances from y to every point of a list"""
        return np.array([self.distance(y, p) for p in points], dtype=float)

    def geodesic(self, y, y2, steps):
        """
        Discretized minimizing path from y to y2

        Args:
            y: Start point
            y2: End point
            steps (int): Number of returned points, at least 2

        Returns:
            list: Points at uniform arc length, endpoints included
        """
        if steps < 2:
            raise InvalidInputError(f"geodesic needs at least 2 steps, got {steps}")
        y = self.normalize(y)
        y2 = self.normalize(y2)
        return [self.interpolate(y, y2, k / (steps - 1)) for k in range(steps)]

    def path_length(self, points):
        """Sum of boundary distances between consecutive points"""
        return float(sum(self.distance(a, b) for a, b in zip(points[:-1], points[1:])))

    # Coordinate interface used by curve refinement and transversality checks.

    def to_array(self, points):
        raise UnsupportedFamilyError(f"{self.kind} boundaries carry no coordinate array")

    def from_array(self, array):
        raise UnsupportedFamilyError(f"{self.kind} boundaries carry no coordinate array")

    def frames_array(self, ys):
        """(n, dim, width) orthonormal tangent frames at each row of ys"""
        raise UnsupportedFamilyError(f"{self.kind} boundaries carry no tangent frames")

    def exp_array(self, ys, frames, xi):
        """Move each row of ys by the frame-coordinate tangent xi"""
        raise UnsupportedFamilyError(f"{self.kind} boundaries carry no exponential map")

    def log(self, y, y2):
        """Frame coordinates at y of the initial velocity of the unit-time geodesic to y2"""
        raise UnsupportedFamilyError(f"{self.kind} boundaries carry no logarithm map")


class Circle(BoundaryGeometry):
    """Circle of a given circumference; points are angles in [0, 2*pi)"""

    kind = 'circle'

    def __init__(self, circumference=TWO_PI):
        if not circumference > 0 or not math.isfinite(circumference):
            raise InvalidInputError(f"Circle circumference must be positive, got {circumference}")
        self.circumference = float(circumference)
        self.scale = self.circumference / TWO_PI

    def __repr__(self):
        return f"Circle({self.circumference!r})"

    @property
    def dim(self):
        return 1

    def normalize(self, y):
        try:
            value = float(np.asarray(y, dtype=float).reshape(-1)[0])
        except (TypeError, ValueError, IndexError):
            raise InvalidInputError(f"{y!r} is not an angle on {self!r}")
        if not math.isfinite(value):
            raise InvalidInputError(f"{y!r} is not an angle on {self!r}")
        return value % TWO_PI

    def _signed_delta(self, a, b):
        delta = (np.asarray(b, dtype=float) - np.asarray(a, dtype=float)) % TWO_PI
        return np.where(delta > math.pi, delta - TWO_PI, delta)

    def distance(self, y, y2):
        return float(self.scale * abs(self._signed_delta(self.normalize(y), self.normalize(y2))))

    def distance_array(self, ya, yb):
        return self.scale * np.abs(self._signed_delta(np.asarray(ya)[..., 0], np.asarray(yb)[..., 0]))

    def distances_from(self, y, points):
        return self.scale * np.abs(self._signed_delta(self.normalize(y), np.asarray(points, dtype=float)))

    def interpolate(self, y, y2, t):
        a = self.normalize(y)
        return float((a + t * float(self._signed_delta(a, self.normalize(y2)))) % TWO_PI)

    def diameter(self):
        return self.circumference / 2.0

    def sample_graph(self, n, stencil=1):
        if n < 3:
            raise InvalidInputError(f"A circle needs at least 3 samples, got {n}")
        points = [TWO_PI * i / n for i in range(n)]
        pairs, hops = [], []
        for hop in range(1, stencil + 1):
            if 2 * hop > n:
                break
            for i in range(n):
                j = (i + hop) % n
                if 2 * hop == n and i >= j:
                    continue
                pairs.append((i, j))
                hops.append(hop)
        pairs = np.array(pairs, dtype=int)
        hops = np.array(hops, dtype=int)
        return BoundarySampling(points, pairs, hops, self.scale * TWO_PI * hops / n)

    def to_config(self):
        return {'type': 'circle', 'circumference': self.circumference}

    def random_points(self, rng, n):
        return [float(a) for a in rng.uniform(0.0, TWO_PI, n)]

    def to_array(self, points):
        return np.asarray(points, dtype=float).reshape(-1, 1)

    def from_array(self, array):
        return [float(a) % TWO_PI for a in np.asarray(array, dtype=float)[:, 0]]

    def frames_array(self, ys):
        return np.ones((len(ys), 1, 1))

    def exp_array(self, ys, frames, xi):
        return (np.asarray(ys, dtype=float) + xi / self.scale) % TWO_PI

    def log(self, y, y2):
        return np.array([self.scale * float(self._signed_delta(self.normalize(y), self.normalize(y2)))])


class RoundSphere(BoundaryGeometry):
    """Round sphere S^k of a given radius; points are unit vectors in R^(k+1)"""

    kind = 'sphere'

    def __init__(self, dimension=2, radius=1.0):
        if int(dimension) < 1:
            raise InvalidInputError(f"Sphere dimension must be at least 1, got {dimension}")
        if not radius > 0 or not math.isfinite(radius):
            raise InvalidInputError(f"Sphere radius must be positive, got {radius}")
        self.dimension = int(dimension)
        self.radius = float(radius)

    def __repr__(self):
        return f"RoundSphere({self.dimension}, {self.radius!r})"

    @property
    def dim(self):
        return self.dimension

    def normalize(self, y):
        try:
            vector = np.asarray(y, dtype=float).reshape(-1)
        except (TypeError, ValueError):
            raise InvalidInputError(f"{y!r} is not a point of {self!r}")
        if vector.size != self.dimension + 1:
            raise InvalidInputError(f"{y!r} has {vector.size} coordinates, {self!r} needs {self.dimension + 1}")
        norm = float(np.linalg.norm(vector))
        if not math.isfinite(norm) or abs(norm - 1.0) > 1e-6:
            raise InvalidInputError(f"{y!r} is not a unit vector (norm {norm})")
        return vector / norm

    @staticmethod
    def _angle(a, b):
        # Stable for nearly equal and nearly antipodal vectors
        return 2.0 * np.arctan2(np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1))

    def distance(self, y, y2):
        return float(self.radius * self._angle(self.normalize(y), self.normalize(y2)))

    def distance_array(self, ya, yb):
        return self.radius * self._angle(np.asarray(ya, dtype=float), np.asarray(yb, dtype=float))

    def distances_from(self, y, points):
        return self.radius * self._angle(self.normalize(y)[None, :], np.asarray(points, dtype=float))

    def _direction(self, a, b):
        direction = b - np.dot(a, b) * a
        norm = np.linalg.norm(direction)
        if norm < 1e-12:
            # Antipodal or equal: any frame direction is minimizing
            direction = self.frames_array(a[None, :])[0, 0]
            norm = 1.0
        return direction / norm

    def interpolate(self, y, y2, t):
        a = self.normalize(y)
        b = self.normalize(y2)
        angle = float(self._angle(a, b))
        if angle == 0.0:
            return a.copy()
        direction = self._direction(a, b)
        point = math.cos(t * angle) * a + math.sin(t * angle) * direction
        return point / np.linalg.norm(point)

    def diameter(self):
        return math.pi * self.radius

    def sample_graph(self, n, stencil=1):
        if n < 3:
            raise InvalidInputError(f"A sphere needs at least 3 samples, got {n}")
        if self.dimension == 1:
            circle = Circle(TWO_PI * self.radius).sample_graph(n, stencil)
            points = [np.array([math.cos(a), math.sin(a)]) for a in circle.points]
            return BoundarySampling(points, circle.pairs, circle.hops, circle.lengths)
        if self.dimension == 2:
            # Fibonacci lattice
            index = np.arange(n) + 0.5
            z = 1.0 - 2.0 * index / n
            azimuth = math.pi * (1.0 + math.sqrt(5.0)) * index
            rho = np.sqrt(1.0 - z ** 2)
            array = np.column_stack([rho * np.cos(azimuth), rho * np.sin(azimuth), z])
        else:
            rng = np.random.default_rng(0)
            array = rng.normal(size=(n, self.dimension + 1))
            array /= np.linalg.norm(array, axis=1, keepdims=True)
        k = min(n - 1, 4 * self.dimension * stencil)
        _, neighbours = cKDTree(array).query(array, k=k + 1)
        pairs = sorted({(min(i, j), max(i, j)) for i, row in enumerate(neighbours) for j in row[1:]})
        pairs = np.array(pairs, dtype=int)
        lengths = self.distance_array(array[pairs[:, 0]], array[pairs[:, 1]])
        return BoundarySampling(list(array), pairs, np.ones(len(pairs), dtype=int), lengths)

    def to_config(self):
        return {'type': 'sphere', 'dimension': self.dimension, 'radius': self.radius}

    def random_points(self, rng, n):
        array = rng.normal(size=(n, self.dimension + 1))
        return list(array / np.linalg.norm(array, axis=1, keepdims=True))

    def to_array(self, points):
        return np.asarray([np.asarray(p, dtype=float) for p in points]).reshape(-1, self.dimension + 1)

    def from_array(self, array):
        array = np.asarray(array, dtype=float)
        return list(array / np.linalg.norm(array, axis=1, keepdims=True))

    def frames_array(self, ys):
        ys = np.asarray(ys, dtype=float)
        width = self.dimension + 1
        frames = np.empty((len(ys), self.dimension, width))
        for i, y in enumerate(ys):
            q, _ = np.linalg.qr(np.column_stack([y, np.eye(width)]))
            frames[i] = q[:, 1:width].T
        return frames

    def exp_array(self, ys, frames, xi):
        ys = np.asarray(ys, dtype=float)
        velocity = np.einsum('nk,nkw->nw', xi, frames) / self.radius
        angle = np.linalg.norm(velocity, axis=1, keepdims=True)
        safe = np.where(angle > 0, angle, 1.0)
        moved = np.cos(angle) * ys + np.sin(angle) * velocity / safe
        return moved / np.linalg.norm(moved, axis=1, keepdims=True)

    def log(self, y, y2):
        a = self.normalize(y)
        b = self.normalize(y2)
        angle = float(self._angle(a, b))
        if angle == 0.0:
            return np.zeros(self.dimension)
        tangent = self.radius * angle * self._direction(a, b)
        return self.frames_array(a[None, :])[0] @ tangent


class FlatTorus(BoundaryGeometry):
    """Flat torus R^k / (periods lattice); points are arrays in [0, p_i)"""

    kind = 'torus'

    def __init__(self, periods=(1.0, 1.0)):
        periods = np.asarray(periods, dtype=float).reshape(-1)
        if periods.size == 0 or not np.all(periods > 0) or not np.all(np.isfinite(periods)):
            raise InvalidInputError(f"Torus periods must be positive, got {periods.tolist()}")
        self.periods = periods
        self._translates = np.array(list(itertools.product((-1, 0, 1), repeat=periods.size)), dtype=float) * periods

    def __repr__(self):
        return f"FlatTorus({self.periods.tolist()})"

    @property
    def dim(self):
        return int(self.periods.size)

    def normalize(self, y):
        try:
            vector = np.asarray(y, dtype=float).reshape(-1)
        except (TypeError, ValueError):
            raise InvalidInputError(f"{y!r} is not a point of {self!r}")
        if vector.size != self.dim or not np.all(np.isfinite(vector)):
            raise InvalidInputError(f"{y!r} is not a point of {self!r}")
        return vector % self.periods

    def _best_delta(self, a, b):
        # Minimum over the 3^k nearest lattice translates of the normalized delta
        delta = (np.asarray(b, dtype=float) - np.asarray(a, dtype=float)) % self.periods
        candidates = delta[..., None, :] + self._translates
        norms = np.linalg.norm(candidates, axis=-1)
        best = np.argmin(norms, axis=-1)
        return np.take_along_axis(candidates, best[..., None, None], axis=-2)[..., 0, :]

    def distance(self, y, y2):
        return float(np.linalg.norm(self._best_delta(self.normalize(y), self.normalize(y2))))

    def distance_array(self, ya, yb):
        return np.linalg.norm(self._best_delta(ya, yb), axis=-1)

    def distances_from(self, y, points):
        points = np.asarray(points, dtype=float)
        return self.distance_array(np.broadcast_to(self.normalize(y), points.shape), points)

    def interpolate(self, y, y2, t):
        a = self.normalize(y)
        return (a + t * self._best_delta(a, self.normalize(y2))) % self.periods

    def diameter(self):
        return 0.5 * float(np.linalg.norm(self.periods))

    def sample_graph(self, n, stencil=1):
        per_axis = max(3, int(round(n ** (1.0 / self.dim))))
        spacing = self.periods / per_axis
        shape = (per_axis,) * self.dim
        grid = np.array(list(itertools.product(range(per_axis), repeat=self.dim)))
        points = list(grid * spacing)
        offsets = []
        for offset in itertools.product(range(-stencil, stencil + 1), repeat=self.dim):
            offset = np.array(offset)
            if not np.any(offset) or math.gcd(*map(abs, offset.tolist())) != 1:
                continue
            if tuple(offset) <= tuple(-offset):
                continue
            if np.any(2 * np.abs(offset) >= per_axis):
                continue
            offsets.append(offset)
        pairs, lengths = [], []
        for offset in offsets:
            targets = np.ravel_multi_index(((grid + offset) % per_axis).T, shape)
            for i, j in enumerate(targets):
                pairs.append((i, int(j)))
                lengths.append(float(np.linalg.norm(offset * spacing)))
        return BoundarySampling(points, np.array(pairs, dtype=int), np.ones(len(pairs), dtype=int),
                                np.array(lengths))

    def to_config(self):
        return {'type': 'torus', 'periods': self.periods.tolist()}

    def random_points(self, rng, n):
        return list(rng.uniform(0.0, 1.0, size=(n, self.dim)) * self.periods)

    def to_array(self, points):
        return np.asarray([np.asarray(p, dtype=float) for p in points]).reshape(-1, self.dim)

    def from_array(self, array):
        return list(np.asarray(array, dtype=float) % self.periods)

    def frames_array(self, ys):
        return np.broadcast_to(np.eye(self.dim), (len(ys), self.dim, self.dim)).copy()

    def exp_array(self, ys, frames, xi):
        return (np.asarray(ys, dtype=float) + np.einsum('nk,nkw->nw', xi, frames)) % self.periods

    def log(self, y, y2):
        return self._best_delta(self.normalize(y), self.normalize(y2))


class MeshGraph(BoundaryGeometry):
    """
    Weighted undirected graph standing in for a meshed boundary

    Distances are exact graph shortest paths, extended linearly into edges.
    """

    kind = 'mesh'
    supports_frames = False

    def __init__(self, vertices, edges, weights=None, require_connected=True, snap_tol=None):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or len(self.vertices) < 2:
            raise InvalidInputError("A mesh needs at least two vertices given as coordinate rows")
        self.snap_tol = Config.tolerance('mesh_snap') if snap_tol is None else snap_tol
        self.graph = nx.Graph()
        self.graph.add_nodes_from(range(len(self.vertices)))
        edges = [tuple(int(v) for v in edge) for edge in edges]
        if weights is None:
            weights = [float(np.linalg.norm(self.vertices[u] - self.vertices[v])) for u, v in edges]
        if len(weights) != len(edges):
            raise InvalidInputError(f"{len(edges)} edges but {len(weights)} weights")
        for (u, v), weight in zip(edges, weights):
            if u == v or not (0 <= u < len(self.vertices)) or not (0 <= v < len(self.vertices)):
                raise InvalidInputError(f"Invalid mesh edge ({u}, {v})")
            if not weight > 0 or not math.isfinite(weight):
                raise InvalidInputError(f"Mesh edge ({u}, {v}) has non-positive weight {weight}")
            self.graph.add_edge(u, v, weight=float(weight))
        if require_connected and not nx.is_connected(self.graph):
            raise InvalidInputError("Mesh graph is not connected")
        # single-source lengths per vertex
        self._lengths = {}
        logger.debug(f"Mesh boundary with {self.graph.number_of_nodes()} vertices, "
                     f"{self.graph.number_of_edges()} edges")

    def __repr__(self):
        return f"MeshGraph({self.graph.number_of_nodes()} vertices, {self.graph.number_of_edges()} edges)"

    @property
    def dim(self):
        return 2

    def _lengths_from(self, u):
        if u not in self._lengths:
            self._lengths[u] = nx.single_source_dijkstra_path_length(self.graph, u, weight='weight')
        return self._lengths[u]

    def normalize(self, y):
        if isinstance(y, (int, np.integer)):
            y = MeshPoint(int(y))
        if not isinstance(y, MeshPoint):
            raise InvalidInputError(f"{y!r} is not a mesh point")
        if y.u not in self.graph:
            raise InvalidInputError(f"Vertex {y.u} is not in {self!r}")
        if y.is_vertex:
            return y
        if not self.graph.has_edge(y.u, y.v) or not 0.0 <= y.t <= 1.0:
            raise InvalidInputError(f"{y!r} does not lie on an edge of {self!r}")
        if y.t <= self.snap_tol:
            return MeshPoint(y.u)
        if y.t >= 1.0 - self.snap_tol:
            return MeshPoint(y.v)
        return y

    def _anchors(self, y):
        """Graph vertices reachable from y with the offset to each"""
        if y.is_vertex:
            return [(y.u, 0.0)]
        weight = self.graph[y.u][y.v]['weight']
        return [(y.u, y.t * weight), (y.v, (1.0 - y.t) * weight)]

    def _same_edge(self, a, b):
        if a.is_vertex or b.is_vertex:
            return None
        weight = self.graph[a.u][a.v]['weight']
        if (a.u, a.v) == (b.u, b.v):
            return abs(a.t - b.t) * weight
        if (a.u, a.v) == (b.v, b.u):
            return abs(a.t - (1.0 - b.t)) * weight
        return None

    def _route(self, a, b):
        best = (math.inf, None, None)
        for u, offset_u in self._anchors(a):
            lengths = self._lengths_from(u)
            for v, offset_v in self._anchors(b):
                if v in lengths:
                    total = offset_u + lengths[v] + offset_v
                    if total < best[0]:
                        best = (total, u, v)
        return best

    def distance(self, y, y2):
        a = self.normalize(y)
        b = self.normalize(y2)
        if a == b:
            return 0.0
        direct = self._same_edge(a, b)
        value = self._route(a, b)[0]
        return float(value if direct is None else min(direct, value))

    def interpolate(self, y, y2, t):
        return self._walk(y, y2, [t])[0]

    def _walk(self, y, y2, fractions):
        a = self.normalize(y)
        b = self.normalize(y2)
        total, u, v = self._route(a, b)
        direct = self._same_edge(a, b)
        if direct is not None and direct <= total:
            return [MeshPoint(a.u, a.v, a.t + f * ((b.t if (b.u, b.v) == (a.u, a.v) else 1.0 - b.t) - a.t))
                    for f in fractions]
        if a == b:
            return [a for _ in fractions]
        if not math.isfinite(total):
            raise NoPathError(f"No path between {a!r} and {b!r} on {self!r}")
        chain = [a] + [MeshPoint(w) for w in nx.dijkstra_path(self.graph, u, v, weight='weight')] + [b]
        chain = [p for k, p in enumerate(chain) if k == 0 or p != chain[k - 1]]
        cumulative = np.concatenate([[0.0], np.cumsum([self.distance(p, q) for p, q in zip(chain[:-1], chain[1:])])])
        points = []
        for fraction in fractions:
            target = fraction * cumulative[-1]
            k = int(np.clip(np.searchsorted(cumulative, target, side='right') - 1, 0, len(chain) - 2))
            span = cumulative[k + 1] - cumulative[k]
            local = 0.0 if span == 0 else (target - cumulative[k]) / span
            points.append(self._between(chain[k], chain[k + 1], local))
        return points

    def _between(self, p, q, local):
        if local <= self.snap_tol:
            return p
        if local >= 1.0 - self.snap_tol:
            return q
        if p.is_vertex and q.is_vertex:
            return self.normalize(MeshPoint(p.u, q.u, local))
        vertex, partial = (q, p) if q.is_vertex else (p, q)
        # The partial point sits inside an edge incident to the vertex
        t_vertex = 0.0 if partial.u == vertex.u else 1.0
        if vertex is p:
            t = t_vertex + local * (partial.t - t_vertex)
        else:
            t = partial.t + local * (t_vertex - partial.t)
        return self.normalize(MeshPoint(partial.u, partial.v, t))

    def geodesic(self, y, y2, steps):
        if steps < 2:
            raise InvalidInputError(f"geodesic needs at least 2 steps, got {steps}")
        return self._walk(y, y2, [k / (steps - 1) for k in range(steps)])

    def diameter(self):
        lengths = dict(nx.all_pairs_dijkstra_path_length(self.graph, weight='weight'))
        return float(max(max(row.values()) for row in lengths.values()))

    def sample_graph(self, n=None, stencil=1):
        points = [MeshPoint(u) for u in self.graph.nodes]
        pairs = np.array([(u, v) for u, v in self.graph.edges], dtype=int)
        lengths = np.array([self.graph[u][v]['weight'] for u, v in self.graph.edges])
        return BoundarySampling(points, pairs, np.ones(len(pairs), dtype=int), lengths)

    def random_points(self, rng, n):
        edges = list(self.graph.edges)
        picks = rng.integers(0, len(edges), n)
        fractions = rng.uniform(0.0, 1.0, n)
        return [self.normalize(MeshPoint(edges[k][0], edges[k][1], float(t))) for k, t in zip(picks, fractions)]

    def to_config(self):
        edges = [[int(u), int(v)] for u, v in self.graph.edges]
        return {'type': 'mesh', 'vertices': self.vertices.tolist(), 'edges': edges,
                'weights': [self.graph[u][v]['weight'] for u, v in edges]}


def load_mesh(path, require_connected=True):
    """
    Load a mesh boundary from its JSON text file

    Schema: {"schema_version": 1, "vertices": [[x, y, ...], ...],
    "edges": [[i, j], ...], "weights": [w, ...]}; weights default to the
    Euclidean length of each edge.

    Args:
        path (str): Mesh file path
        require_connected (bool): Reject disconnected meshes

    Returns:
        MeshGraph: The loaded mesh
    """
    try:
        with open(path, 'r', encoding='utf-8') as file:
            payload = json.load(file)
    except FileNotFoundError:
        logger.error(f"Mesh file not found: {path}")
        raise
    except json.JSONDecodeError as e:
        logger.error(f"Invalid JSON in mesh file {path}: {str(e)}")
        raise InvalidInputError(f"{path}:{e.lineno}: {e.msg}")
    if payload.get('schema_version', 1) != 1:
        raise InvalidInputError(f"Unsupported mesh schema version {payload.get('schema_version')}")
    mesh = MeshGraph(payload['vertices'], payload['edges'], payload.get('weights'),
                     require_connected=require_connected)
    logger.info(f"Loaded {mesh!r} from {path}")
    return mesh


def geometry_from_config(declaration, base_dir=None):
    """Build a boundary geometry from its scenario declaration"""
    kind = declaration.get('type')
    if kind == 'circle':
        return Circle(declaration.get('circumference', TWO_PI))
    if kind == 'sphere':
        return RoundSphere(declaration.get('dimension', 2), declaration.get('radius', 1.0))
    if kind == 'torus':
        return FlatTorus(declaration.get('periods', (1.0, 1.0)))
    if kind == 'mesh':
        if 'path' in declaration:
            path = declaration['path']
            if base_dir is not None and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            return load_mesh(path, declaration.get('require_connected', True))
        return MeshGraph(declaration['vertices'], declaration['edges'], declaration.get('weights'),
                         require_connected=declaration.get('require_connected', True))
    raise InvalidInputError(f"Unknown boundary geometry type '{kind}'")


def boundary_distance(boundary, y, y2):
    """
    Geodesic distance d_N(y, y2) on a boundary manifold

    Args:
        boundary (BoundaryGeometry): The manifold N
        y: First point
        y2: Second point

    Returns:
        float: Non-negative distance, symmetric in its arguments
    """
    return boundary.distance(y, y2)


def boundary_geodesic(boundary, y, y2, steps):
    """Discretized minimizing path from y to y2 with `steps` points"""
    return boundary.geodesic(y, y2, steps)


def boundary_diameter(boundary):
    """Diameter of the boundary (exact for closed-form families)"""
    return boundary.diameter()
