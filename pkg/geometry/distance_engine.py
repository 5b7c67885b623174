"""
Distance engine module
Conic and asymptotically conic distances: closed forms for simple metrics,
grid-graph shortest paths and variational refinement of chart polylines
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import minimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from geometry.boundary_manifold import MeshPoint
from geometry.conic_metrics import (AcMetricSpec, ChartPoint, ConicMetricSpec, CurvePolyline, SuspensionSpec,
                                    associated_simple_metric, curve_length, length_model, norm_ratio_bracket)
from utils.config import Config
from utils.exceptions import InvalidGridError, InvalidInputError, SingularEvaluationError, UnsupportedFamilyError

logger = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class GridDiscretization:
    """
    Radial levels times boundary samples, with an optional apex node

    Attributes:
        n_r (int): Number of radial levels
        n_y (int): Number of boundary samples (mesh boundaries use their vertices)
        spacing (str): 'uniform', 'geometric' (uniform body, geometric tail near 0)
            or 'inverse' (uniform in 1/r, for ac charts)
        ratio (float): Geometric tail ratio
        include_apex (bool): Add the collapsed node at r = 0
        stencil (int): Largest level offset and boundary hop joined by an edge
        r_min (float): Lowest level for 'inverse' and bounded 'uniform' spacing
        r_max (float): Highest level, the chart height by default
    """
    n_r: int = Config.GRID_N_R
    n_y: int = Config.GRID_N_Y
    spacing: str = 'geometric'
    ratio: float = Config.TOLERANCES['radial_ratio']
    include_apex: bool = True
    stencil: int = Config.TOLERANCES['stencil']
    r_min: float = None
    r_max: float = None

    def levels(self, model):
        if self.n_r < 2 or self.n_y < 3:
            raise InvalidGridError(f"Grid needs n_r >= 2 and n_y >= 3, got {self.n_r} x {self.n_y}")
        if self.stencil < 1:
            raise InvalidGridError(f"Grid stencil must be at least 1, got {self.stencil}")
        r_max = self.r_max if self.r_max is not None else model.height
        if not math.isfinite(r_max):
            r_max = 1.0
        r_max = min(r_max, model.height)
        if self.spacing == 'uniform':
            if self.r_min is None:
                levels = r_max * np.arange(1, self.n_r + 1) / self.n_r
            else:
                levels = np.linspace(self.r_min, r_max, self.n_r)
        elif self.spacing == 'geometric':
            tail = max(1, self.n_r // 8)
            body = self.n_r - tail
            step = r_max / body
            levels = np.concatenate([step * self.ratio ** np.arange(tail, 0, -1), step * np.arange(1, body + 1)])
        elif self.spacing == 'inverse':
            if self.r_min is None or not self.r_min > 0:
                raise InvalidGridError("Inverse spacing needs a positive r_min")
            levels = np.sort(1.0 / np.linspace(1.0 / self.r_min, 1.0 / r_max, self.n_r))
            levels[0] = self.r_min
        else:
            raise InvalidGridError(f"Unknown radial spacing '{self.spacing}'")
        levels[-1] = r_max
        if np.any(np.diff(levels) <= 0) or levels[0] <= 0 or levels[-1] > model.height:
            raise InvalidGridError(f"Radial levels must increase strictly inside (0, {model.height}]")
        return levels


@dataclass
class DistanceResult:
    """Distance value with its witnessing path and provenance"""
    value: float
    path: CurvePolyline = None
    method: str = 'exact'
    residual: float = 0.0
    snap_error: float = 0.0
    clipped: int = 0


@dataclass(frozen=True)
class DistanceOptions:
    """Options shared by conic_distance, ac_distance and refine_geodesic"""
    method: str = 'auto'
    grid: GridDiscretization = None
    refine: bool = True
    accelerate: bool = True
    tol: float = Config.TOLERANCES['refine_tol']
    max_iter: int = Config.TOLERANCES['refine_max_iter']
    max_vertices: int = Config.TOLERANCES['refine_max_vertices']
    quadrature_levels: int = 5

    @classmethod
    def from_tolerances(cls, tolerances, **overrides):
        return cls(tol=tolerances['refine_tol'], max_iter=int(tolerances['refine_max_iter']),
                   max_vertices=int(tolerances['refine_max_vertices']), **overrides)


# Closed forms

def cone_distance_array(g_scale, r1, r2, d_n):
    """Vectorised cone law of cosines with the angle capped at pi"""
    angle = np.minimum(math.sqrt(g_scale) * np.asarray(d_n, dtype=float), math.pi)
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    return np.sqrt((r1 - r2) ** 2 + 4.0 * r1 * r2 * np.sin(angle / 2.0) ** 2)


def truncated_cone_distance_array(g_scale, r_cut, r1, r2, d_n):
    """
    Vectorised distance in the truncated cone {R >= r_cut} of dR^2 + R^2 c g_N

    The minimizer is the straight chord when it clears the removed disk,
    otherwise tangent segment, arc of the cut circle, tangent segment.
    """
    angle = math.sqrt(g_scale) * np.asarray(d_n, dtype=float)
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if r_cut == 0:
        return cone_distance_array(g_scale, r1, r2, d_n)
    alpha1 = np.arccos(np.clip(r_cut / r1, 0.0, 1.0))
    alpha2 = np.arccos(np.clip(r_cut / r2, 0.0, 1.0))
    chord = np.sqrt((r1 - r2) ** 2 + 4.0 * r1 * r2 * np.sin(np.minimum(angle, math.pi) / 2.0) ** 2)
    wrapped = (np.sqrt(np.maximum(r1 ** 2 - r_cut ** 2, 0.0)) + np.sqrt(np.maximum(r2 ** 2 - r_cut ** 2, 0.0))
               + r_cut * (angle - alpha1 - alpha2))
    return np.where(angle <= alpha1 + alpha2, chord, wrapped)


def suspension_distance_array(rho, r1, r2, d_n):
    """Vectorised spherical suspension distance (haversine form)"""
    a1 = np.asarray(r1, dtype=float) / rho
    a2 = np.asarray(r2, dtype=float) / rho
    angle = np.minimum(np.asarray(d_n, dtype=float), math.pi)
    haversine = np.sin((a1 - a2) / 2.0) ** 2 + np.sin(a1) * np.sin(a2) * np.sin(angle / 2.0) ** 2
    return 2.0 * rho * np.arcsin(np.sqrt(np.clip(haversine, 0.0, 1.0)))


def exact_simple_cone_distance(spec, x, x2):
    """
    Closed-form distance of a simple (Constant family) conic metric

    Args:
        spec (ConicMetricSpec): Constant-family conic metric
        x (ChartPoint): First point
        x2 (ChartPoint): Second point

    Returns:
        float: sqrt(r^2 + r'^2 - 2 r r' cos(min(sqrt(c) d_N, pi)))
    """
    if not isinstance(spec, ConicMetricSpec) or not spec.family.is_constant:
        raise UnsupportedFamilyError(f"Exact cone distance needs a Constant family, got {spec!r}")
    spec.check_radius(x.r)
    spec.check_radius(x2.r)
    # Apex: every boundary point is identified at r = 0
    if x.r == 0 or x2.r == 0:
        return float(x.r + x2.r)
    d_n = spec.boundary.distance(x.y, x2.y)
    return float(cone_distance_array(spec.family.g_scale, x.r, x2.r, d_n))


def exact_ac_distance(spec, x, x2):
    """Closed-form ac distance of a Constant family, read through R = 1/r in the truncated cone"""
    if not isinstance(spec, AcMetricSpec) or not spec.family.is_constant:
        raise UnsupportedFamilyError(f"Exact ac distance needs a Constant family, got {spec!r}")
    for point in (x, x2):
        if point.r == 0:
            raise SingularEvaluationError("r = 0 is the boundary at infinity of the ac chart")
        spec.check_radius(point.r)
    r_cut = 0.0 if math.isinf(spec.height) else 1.0 / spec.height
    d_n = spec.boundary.distance(x.y, x2.y)
    return float(truncated_cone_distance_array(spec.family.g_scale, r_cut, 1.0 / x.r, 1.0 / x2.r, d_n))


def suspension_distance(spec, x, x2):
    """Distance in a spherical suspension"""
    spec.check_radius(x.r)
    spec.check_radius(x2.r)
    d_n = 0.0 if min(x.r, x2.r) == 0 or max(x.r, x2.r) == spec.height else spec.boundary.distance(x.y, x2.y)
    return float(suspension_distance_array(spec.rho, x.r, x2.r, d_n))


def distance_to_apex(spec, x):
    """Distance from a chart point to the boundary {r = 0} of a model conic chart: exactly r"""
    spec.check_radius(x.r)
    return float(x.r)


def conic_sandwich_bounds(x, x2, d_n_value):
    """
    Simple-metric sandwich bounds for the conic distance

    Returns:
        tuple: (|r - r'|/2 + min(r, r') d_N / 2, |r - r'| + min(r, r') d_N)
    """
    upper = abs(x.r - x2.r) + min(x.r, x2.r) * d_n_value
    return upper / 2.0, upper


def ac_e_function(x, x2, d_n_value):
    """e(x, x') = |1/r - 1/r'| + min(1/r, 1/r') d_N"""
    if x.r == 0 or x2.r == 0:
        raise SingularEvaluationError("e-function is undefined at r = 0")
    return abs(1.0 / x.r - 1.0 / x2.r) + min(1.0 / x.r, 1.0 / x2.r) * d_n_value


# Grid graphs

class ChartGraph:
    """Weighted graph over radial levels times boundary samples"""

    def __init__(self, model, grid, levels, sampling, matrix, has_apex):
        self.model = model
        self.grid = grid
        self.levels = levels
        self.sampling = sampling
        self.matrix = matrix
        self.has_apex = has_apex
        self.n_samples = len(sampling.points)
        self.n_grid = len(levels) * self.n_samples
        self.apex = self.n_grid if has_apex else None
        self.n_nodes = self.n_grid + (1 if has_apex else 0)

    def __repr__(self):
        return f"ChartGraph({len(self.levels)} levels x {self.n_samples} samples, apex={self.has_apex})"

    def node_point(self, index):
        if self.has_apex and index == self.apex:
            return ChartPoint(self.sampling.points[0], 0.0)
        level, sample = divmod(int(index), self.n_samples)
        return ChartPoint(self.sampling.points[sample], float(self.levels[level]))

    def node_index(self, level, sample):
        return level * self.n_samples + sample

    def nearest_node(self, point):
        """Nearest node and the chart length of the snap"""
        model = self.model
        if self.has_apex and point.r <= self.levels[0] / 2.0:
            return self.apex, float(model.segment_lengths(point.r, 0.0, 0.0)[0])
        distances = np.ravel(model.boundary.distances_from(point.y, self.sampling.points))
        sample = int(np.argmin(distances))
        level = int(np.argmin(np.abs(self.levels - point.r)))
        disp = model.displacement([point.y], [self.sampling.points[sample]])
        error = float(model.segment_lengths(point.r, self.levels[level], disp)[0])
        return self.node_index(level, sample), error

    def shortest_paths(self, source):
        return dijkstra(self.matrix, directed=True, indices=source, return_predecessors=True)


def build_graph(spec, grid=None):
    """
    Build the grid graph of a chart metric

    Edges join radial neighbours, boundary-sample neighbours on one level and
    diagonal neighbours with coprime (hop, level offset) up to the stencil.
    Each weight is the length of the chart-straight segment.

    Args:
        spec: ConicMetricSpec, AcMetricSpec or a chart length model
        grid (GridDiscretization): The discretization

    Returns:
        ChartGraph: The graph, immutable once built
    """
    grid = grid or GridDiscretization()
    model = length_model(spec)
    if grid.include_apex and not model.apex_allowed:
        raise InvalidGridError("An ac chart has no apex; r = 0 is its boundary at infinity")
    levels = grid.levels(model)
    try:
        sampling = model.boundary.sample_graph(grid.n_y, grid.stencil)
    except Exception as e:
        logger.error(f"Failed to sample {model.boundary!r}: {str(e)}")
        raise
    n_s = len(sampling.points)
    n_l = len(levels)
    first, second = sampling.pairs[:, 0], sampling.pairs[:, 1]
    hops = sampling.hops
    disp = model.pair_displacement(sampling)

    rows, cols, r_from, r_to, disps = [], [], [], [], []

    def add(lower_levels, dj, a, b, d):
        count = len(a)
        base = np.repeat(lower_levels, count)
        rows.append(base * n_s + np.tile(a, len(lower_levels)))
        cols.append((base + dj) * n_s + np.tile(b, len(lower_levels)))
        r_from.append(levels[base])
        r_to.append(levels[base + dj])
        disps.append(np.tile(d, len(lower_levels)))

    all_levels = np.arange(n_l)
    level_pairs = hops == 1
    add(all_levels, 0, first[level_pairs], second[level_pairs], disp[level_pairs])
    identity = np.arange(n_s)
    for dj in range(1, grid.stencil + 1):
        lower = np.arange(n_l - dj)
        if len(lower) == 0:
            break
        if dj == 1:
            add(lower, dj, identity, identity, np.zeros(n_s))
        coprime = np.array([math.gcd(int(h), dj) == 1 for h in hops], dtype=bool)
        add(lower, dj, first[coprime], second[coprime], disp[coprime])
        add(lower, dj, second[coprime], first[coprime], -disp[coprime])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    weights = model.segment_lengths(np.concatenate(r_from), np.concatenate(r_to), np.concatenate(disps))
    n_nodes = n_l * n_s
    if grid.include_apex:
        apex = n_nodes
        apex_weights = model.segment_lengths(np.zeros(n_s), np.full(n_s, levels[0]), np.zeros(n_s))
        rows = np.concatenate([rows, np.full(n_s, apex)])
        cols = np.concatenate([cols, identity])
        weights = np.concatenate([weights, apex_weights])
        n_nodes += 1
    if np.any(weights <= 0):
        raise InvalidGridError("Grid produced a zero-length edge; boundary samples must be distinct")
    upper = coo_matrix((weights, (rows, cols)), shape=(n_nodes, n_nodes))
    matrix = (upper + upper.T).tocsr()
    graph = ChartGraph(model, grid, levels, sampling, matrix, grid.include_apex)
    logger.info(f"Built {graph!r} with {len(weights)} edges for {model.spec!r}")
    return graph


@lru_cache(maxsize=16)
def cached_graph(spec, grid):
    """Graph cache keyed by spec identity and grid value"""
    return build_graph(spec, grid)


def _expand_path(graph, nodes):
    """Chart polyline of a node path; the apex becomes r = 0 vertices on each side"""
    points = []
    for k, node in enumerate(nodes):
        if graph.has_apex and node == graph.apex:
            neighbours = [nodes[k - 1]] if k > 0 else []
            neighbours += [nodes[k + 1]] if k + 1 < len(nodes) else []
            for neighbour in neighbours:
                points.append(ChartPoint(graph.node_point(neighbour).y, 0.0))
        else:
            points.append(graph.node_point(node))
    if len(points) == 1:
        points.append(points[0])
    return CurvePolyline(points)


def graph_distance(graph, x, x2):
    """
    Shortest-path distance between the grid nodes nearest to x and x'

    Returns:
        DistanceResult: method 'graph'; infinite value with no path when unreachable
    """
    source, error_a = graph.nearest_node(x)
    target, error_b = graph.nearest_node(x2)
    snap_error = error_a + error_b
    if source == target:
        return DistanceResult(0.0, _expand_path(graph, [source]), 'graph', 0.0, snap_error)
    flipped = source > target
    if flipped:
        source, target = target, source
    distances, predecessors = graph.shortest_paths(source)
    value = float(distances[target])
    if not math.isfinite(value):
        logger.debug(f"No grid path between {x!r} and {x2!r}")
        return DistanceResult(math.inf, None, 'graph', 0.0, snap_error)
    nodes = [target]
    while nodes[-1] != source:
        nodes.append(int(predecessors[nodes[-1]]))
    if not flipped:
        nodes.reverse()
    return DistanceResult(value, _expand_path(graph, nodes), 'graph', 0.0, snap_error)


# Polyline relaxation

class PolylineRelaxation:
    """
    Local minimization of a polyline length over interior vertex coordinates

    Vertex q of z (shape (n, k)) touches segments q and q+1 of segment_fn(z),
    so even and odd vertices are independent: gradients use two perturbations
    per coordinate, and coordinate descent moves each parity class at once.
    """

    def __init__(self, segment_fn, z0, lower, upper, width, tol, max_iter, accelerate=True, fd_step=1e-7):
        self.segment_fn = segment_fn
        self.z0 = np.array(z0, dtype=float)
        self.lower = np.broadcast_to(np.asarray(lower, dtype=float), self.z0.shape)
        self.upper = np.broadcast_to(np.asarray(upper, dtype=float), self.z0.shape)
        self.width = np.asarray(width, dtype=float)
        self.tol = tol
        self.max_iter = max_iter
        self.accelerate = accelerate
        self.fd_step = fd_step
        n = self.z0.shape[0]
        self.parities = [np.arange(n) % 2 == parity for parity in (0, 1)]

    def total(self, z):
        return float(np.sum(self.segment_fn(z)))

    def _local(self, z):
        segments = self.segment_fn(z)
        return segments[:-1] + segments[1:]

    def gradient(self, z):
        grad = np.zeros_like(z)
        h = self.fd_step
        for mask in self.parities:
            for c in range(z.shape[1]):
                plus = z.copy()
                minus = z.copy()
                plus[mask, c] += h
                minus[mask, c] -= h
                grad[mask, c] = ((self._local(self._clip(plus)) - self._local(self._clip(minus))) / (2.0 * h))[mask]
        return grad

    def _clip(self, z):
        return np.clip(z, self.lower, self.upper)

    def _line_search(self, z, mask, c, width, iterations=25):
        def local(t):
            trial = z.copy()
            trial[mask, c] += t
            return self._local(self._clip(trial))[mask]

        count = int(mask.sum())
        a = np.full(count, -width)
        b = np.full(count, width)
        x1 = b - GOLDEN * (b - a)
        x2 = a + GOLDEN * (b - a)
        f1 = local(x1)
        f2 = local(x2)
        for _ in range(iterations):
            left = f1 < f2
            b = np.where(left, x2, b)
            a = np.where(left, a, x1)
            new_x1 = np.where(left, b - GOLDEN * (b - a), x2)
            new_x2 = np.where(left, x1, a + GOLDEN * (b - a))
            probe = local(np.where(left, new_x1, new_x2))
            f1, f2 = np.where(left, probe, f2), np.where(left, f1, probe)
            x1, x2 = new_x1, new_x2
        best_t = np.where(f1 < f2, x1, x2)
        best_f = np.minimum(f1, f2)
        current = local(np.zeros(count))
        return np.where(best_f < current, best_t, 0.0)

    def run(self):
        """
        Returns:
            tuple: (z, residual) with residual the last relative decrease
        """
        z = self._clip(self.z0)
        if z.size == 0:
            return z, 0.0
        current = self.total(z)
        if self.accelerate:
            shape = z.shape
            bounds = [(None if not math.isfinite(lo) else lo, None if not math.isfinite(hi) else hi)
                      for lo, hi in zip(self.lower.ravel(), self.upper.ravel())]
            try:
                result = minimize(lambda flat: self.total(flat.reshape(shape)), z.ravel(),
                                  jac=lambda flat: self.gradient(flat.reshape(shape)).ravel(),
                                  method='L-BFGS-B', bounds=bounds,
                                  options={'maxiter': self.max_iter, 'ftol': self.tol * 1e-2})
                candidate = self._clip(result.x.reshape(shape))
                value = self.total(candidate)
                if value < current:
                    z, current = candidate, value
            except (ValueError, FloatingPointError) as e:
                logger.warning(f"L-BFGS-B acceleration failed, continuing with coordinate descent: {str(e)}")
        width = self.width.copy()
        residual = 0.0
        for _ in range(self.max_iter):
            before = current
            for mask in self.parities:
                if not mask.any():
                    continue
                for c in range(z.shape[1]):
                    step = self._line_search(z, mask, c, width[c])
                    z[mask, c] += step
                    z = self._clip(z)
            current = self.total(z)
            residual = (before - current) / max(before, 1e-300)
            width *= 0.5
            if residual < self.tol and np.all(width < self.tol * max(current, 1.0)):
                break
        return z, max(residual, 0.0)


def _resample(points, max_vertices):
    n = len(points)
    if n <= max_vertices:
        return list(points)
    keep = set(np.round(np.linspace(0, n - 1, max_vertices)).astype(int).tolist())
    keep.update(k for k, p in enumerate(points) if p.r == 0)
    return [points[k] for k in sorted(keep)]


def refine_geodesic(spec, seed, options=None):
    """
    Sharpen a seed polyline by local minimization of its length with endpoints pinned

    Interior vertices move in boundary frame coordinates and in r. An endpoint
    at r = 0 of a chart with an apex carries no boundary position of its own
    and follows its neighbour. Vertices pushed past the chart are projected
    back and counted in the result.

    Args:
        spec: Chart metric or length model
        seed (CurvePolyline): Initial curve
        options (DistanceOptions): Tolerance, iteration and vertex caps

    Returns:
        DistanceResult: method 'refined'; never longer than the seed
    """
    options = options or DistanceOptions()
    model = length_model(spec)
    boundary = model.boundary
    if not boundary.supports_frames:
        raise UnsupportedFamilyError(f"Curve refinement needs boundary frames; {boundary!r} has none")
    seed_length = curve_length(model, seed)
    points = _resample(seed.points, options.max_vertices)
    if len(points) < 3:
        return DistanceResult(seed_length, seed, 'refined', 0.0)
    ys0 = boundary.to_array([p.y for p in points])
    rs0 = np.array([p.r for p in points], dtype=float)
    interior = ys0[1:-1]
    frames = boundary.frames_array(interior)
    dim = boundary.dim
    free_start = rs0[0] == 0 and model.apex_allowed
    free_end = rs0[-1] == 0 and model.apex_allowed

    def assemble(z):
        ys = ys0.copy()
        ys[1:-1] = boundary.exp_array(interior, frames, z[:, :dim])
        rs = rs0.copy()
        rs[1:-1] = z[:, dim]
        if free_start:
            ys[0] = ys[1]
        if free_end:
            ys[-1] = ys[-2]
        return ys, rs

    def segments(z):
        ys, rs = assemble(z)
        disp = model.displacement_array(ys[:-1], ys[1:])
        return model.segment_lengths(rs[:-1], rs[1:], disp, levels=options.quadrature_levels)

    z0 = np.column_stack([np.zeros((len(interior), dim)), rs0[1:-1]])
    lower = np.concatenate([np.full(dim, -np.inf), [model.lower_bound()]])
    upper = np.concatenate([np.full(dim, np.inf), [model.height]])
    typical = max(seed_length / (len(points) - 1), 1e-9)
    relaxation = PolylineRelaxation(segments, z0, lower, upper, np.full(dim + 1, 0.5 * typical),
                                    options.tol, options.max_iter, options.accelerate)
    z, residual = relaxation.run()
    ys, rs = assemble(z)
    clipped = 0
    if model.lower_bound() > 0:
        clipped += int(np.sum(z[:, dim] <= model.lower_bound()))
    if math.isfinite(model.height):
        clipped += int(np.sum(z[:, dim] >= model.height))
    if clipped:
        logger.warning(f"{clipped} refined vertices were projected back onto the chart edge")
    refined = CurvePolyline([ChartPoint(y, float(r)) for y, r in zip(boundary.from_array(ys), rs)])
    value = curve_length(model, refined)
    if value > seed_length:
        return DistanceResult(seed_length, seed, 'refined', residual, 0.0, clipped)
    return DistanceResult(value, refined, 'refined', residual, 0.0, clipped)


# Dispatch

def _point_key(point):
    y = point.y
    if isinstance(y, MeshPoint):
        coordinates = (y.u, -1 if y.v is None else y.v, y.t)
    else:
        coordinates = tuple(np.atleast_1d(np.asarray(y, dtype=float)).tolist())
    return (point.r,) + coordinates


def _power_of_two_above(value):
    return 2.0 ** math.ceil(math.log2(value))


def default_grid(spec, radii):
    """Grid covering the given query radii; rounded to powers of two so queries share cached graphs"""
    radii = np.asarray(radii, dtype=float)
    if isinstance(spec, AcMetricSpec):
        r_min = 2.0 ** math.floor(math.log2(float(radii.min()) / 2.0))
        r_max = min(spec.height, _power_of_two_above(8.0 * float(radii.max())))
        return GridDiscretization(spacing='inverse', include_apex=False, r_min=r_min, r_max=r_max)
    r_max = min(spec.height, _power_of_two_above(max(1.0, 2.0 * float(radii.max()))))
    return GridDiscretization(r_max=r_max)


def _numerical_distance(spec, x, x2, options):
    a, b = (x, x2) if _point_key(x) <= _point_key(x2) else (x2, x)
    grid = options.grid or default_grid(spec, [a.r, b.r])
    graph = cached_graph(spec, grid)
    seeded = graph_distance(graph, a, b)
    if not math.isfinite(seeded.value) or options.method == 'graph' or not options.refine \
            or not spec.boundary.supports_frames:
        return seeded
    inner = seeded.path.points[1:-1]
    seed = CurvePolyline([a] + inner + [b])
    refined = refine_geodesic(spec, seed, options)
    refined.snap_error = seeded.snap_error
    refined.residual = max(refined.residual, 0.0)
    return refined


def conic_distance(spec, x, x2, options=None):
    """
    Conic distance d^c between two chart points

    Constant families use the closed form; other families use the grid graph
    seeded refinement. Arguments are put in a canonical order so the result
    is symmetric.

    Args:
        spec (ConicMetricSpec): The conic metric
        x (ChartPoint): First point
        x2 (ChartPoint): Second point
        options (DistanceOptions): Method and tolerances

    Returns:
        DistanceResult: Distance with provenance
    """
    options = options or DistanceOptions()
    spec.check_radius(x.r)
    spec.check_radius(x2.r)
    if spec.family.is_constant and options.method in ('auto', 'exact'):
        return DistanceResult(exact_simple_cone_distance(spec, x, x2), None, 'exact')
    if options.method == 'exact':
        raise UnsupportedFamilyError(f"No closed form for {spec.family!r}")
    try:
        return _numerical_distance(spec, x, x2, options)
    except Exception as e:
        logger.error(f"Conic distance failed between {x!r} and {x2!r}: {str(e)}")
        raise


def ac_distance(spec, x, x2, options=None):
    """
    Asymptotically conic distance d^inf between two chart points with r > 0

    Returns:
        DistanceResult: Exact through the inversion for Constant families,
            graph plus refinement on an inverse-spaced grid otherwise
    """
    options = options or DistanceOptions()
    for point in (x, x2):
        if point.r == 0:
            raise SingularEvaluationError("r = 0 is the boundary at infinity of the ac chart")
        spec.check_radius(point.r)
    if spec.family.is_constant and options.method in ('auto', 'exact'):
        return DistanceResult(exact_ac_distance(spec, x, x2), None, 'exact')
    if options.method == 'exact':
        raise UnsupportedFamilyError(f"No closed form for {spec.family!r}")
    if options.grid is not None and options.grid.include_apex:
        raise InvalidGridError("An ac chart has no apex; r = 0 is its boundary at infinity")
    try:
        return _numerical_distance(spec, x, x2, options)
    except Exception as e:
        logger.error(f"Ac distance failed between {x!r} and {x2!r}: {str(e)}")
        raise


def chart_distance(spec, x, x2, options=None):
    """Distance in any single chart: conic, ac or suspension"""
    if isinstance(spec, AcMetricSpec):
        return ac_distance(spec, x, x2, options)
    if isinstance(spec, SuspensionSpec):
        return DistanceResult(suspension_distance(spec, x, x2), None, 'exact')
    if isinstance(spec, ConicMetricSpec):
        return conic_distance(spec, x, x2, options)
    raise InvalidInputError(f"Not a chart metric: {spec!r}")


@dataclass(frozen=True)
class EquivalenceConstants:
    """Empirical norm-ratio bracket of a conic metric against its associated simple metric"""
    lower: float
    upper: float
    r_max: float
    simple: ConicMetricSpec = field(compare=False)


@lru_cache(maxsize=64)
def calibrate_equivalence(spec, r_max=1.0):
    """
    Measure and store the equivalence constants of a conic metric

    Args:
        spec (ConicMetricSpec | AcMetricSpec): The metric (ac specs use their base)
        r_max (float): Sweep radius

    Returns:
        EquivalenceConstants: The bracket [A, B] with A |v|_simple <= |v| <= B |v|_simple
    """
    base = spec.base if isinstance(spec, AcMetricSpec) else spec
    simple = associated_simple_metric(base)
    lower, upper = norm_ratio_bracket(base, simple, r_max=r_max)
    logger.info(f"Equivalence constants of {base.family!r} on r <= {r_max}: [{lower:.6g}, {upper:.6g}]")
    return EquivalenceConstants(lower, upper, r_max, simple)


def distance_batch(spec, pairs, options=None, threads=None):
    """
    Distances for a list of point pairs, in input order

    Args:
        spec: Chart metric
        pairs (list): (x, x') tuples
        options (DistanceOptions): Shared options; the grid defaults to one covering every pair
        threads (int): joblib worker threads

    Returns:
        list: DistanceResult per pair
    """
    options = options or DistanceOptions()
    threads = Config.THREADS if threads is None else threads
    if not pairs:
        return []
    if isinstance(spec, (ConicMetricSpec, AcMetricSpec)) and not spec.family.is_constant and options.grid is None:
        radii = [p.r for pair in pairs for p in pair]
        options = replace(options, grid=default_grid(spec, radii))
        cached_graph(spec, options.grid)
    results = Parallel(n_jobs=threads, prefer='threads')(
        delayed(chart_distance)(spec, x, x2, options) for x, x2 in pairs)
    logger.info(f"Computed {len(results)} distances for {spec!r}")
    return results


def logspiral_geodesic(metric, theta0, r0=1.0, grid=None, options=None):
    """
    Refined minimizing curve from (theta0, r0) into the origin of the log-spiral plane metric

    Args:
        metric (LogSpiralMetric): The plane metric in polar chart form
        theta0 (float): Start angle
        r0 (float): Start radius
        grid (GridDiscretization): Seed graph discretization
        options (DistanceOptions): Refinement options

    Returns:
        DistanceResult: Refined curve; its length tends to r0
    """
    grid = grid or GridDiscretization(n_r=96, n_y=96, spacing='geometric', ratio=0.7, r_max=r0)
    start = ChartPoint(float(theta0) % (2.0 * math.pi), float(r0))
    origin = ChartPoint(0.0, 0.0)
    seeded = graph_distance(cached_graph(metric, grid), start, origin)
    if not math.isfinite(seeded.value):
        raise InvalidGridError("Log-spiral grid does not connect the start point to the origin")
    seed = CurvePolyline([start] + seeded.path.points[1:-1] + [ChartPoint(seeded.path.points[-1].y, 0.0)])
    result = refine_geodesic(metric, seed, options)
    logger.info(f"Log-spiral geodesic from theta0={theta0:.6g}: length {result.value:.8g} (start radius {r0:.6g})")
    return result
