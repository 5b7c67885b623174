"""
LNE analysis module
Parametric sub-manifolds of cylinder charts, the p-sub-manifold check, inner
versus outer distances and ratio scans over shrinking scale ladders
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import brentq, minimize_scalar
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from geometry.boundary_manifold import Circle
from geometry.conic_metrics import AcMetricSpec, ChartPoint, ConicMetricSpec, length_model
from geometry.distance_engine import PolylineRelaxation, calibrate_equivalence, chart_distance
from geometry.quotient_completion import ChartPiece, QuotientPoint, QuotientSpace, quotient_distance
from utils.config import Config
from utils.exceptions import InvalidInputError, InvariantViolation, UnsupportedFamilyError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
BOUNDED = 'BOUNDED'
DIVERGING = 'DIVERGING'

# Sub-segments per inner-graph edge
_EDGE_SUBDIVISIONS = 4
_OFFSETS_2D = ((1, 0), (0, 1), (1, 1), (1, -1), (1, 2), (2, 1), (1, -2), (2, -1))


# Sub-manifolds

@dataclass(frozen=True, eq=False)
class SubmanifoldComponent:
    """
    One connected parametric piece of a sub-manifold, given in chart coordinates

    Attributes:
        name (str): Component name, unique in its sub-manifold
        boundary (BoundaryGeometry): Boundary of the chart the component lives in
        embed (callable): (n, k) parameter array -> (ys, rs) chart coordinate arrays
        bounds (tuple): (lo, hi) per parameter
        periodic (tuple): Periodicity flag per parameter
        radial_index (int): Parameter along which r increases from the boundary face, or None
        radius_param (callable): Inverse of r along the radial parameter, solved numerically if None
        piece (str): Quotient piece holding the component
    """
    name: str
    boundary: object
    embed: object
    bounds: tuple
    periodic: tuple = None
    radial_index: int = None
    radius_param: object = None
    piece: str = None

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not bounds or any(not lo < hi for lo, hi in bounds):
            raise InvalidInputError(f"Component '{self.name}' has empty parameter bounds {self.bounds}")
        object.__setattr__(self, 'bounds', bounds)
        periodic = tuple(bool(p) for p in (self.periodic or (False,) * len(bounds)))
        if len(periodic) != len(bounds):
            raise InvalidInputError(f"Component '{self.name}' needs one periodicity flag per parameter")
        object.__setattr__(self, 'periodic', periodic)
        if self.radial_index is not None and not 0 <= self.radial_index < len(bounds):
            raise InvalidInputError(f"Radial index {self.radial_index} out of range for '{self.name}'")

    def __repr__(self):
        return f"SubmanifoldComponent({self.name!r}, bounds={self.bounds})"

    @property
    def n_params(self):
        return len(self.bounds)

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self):
        return np.array([hi for _, hi in self.bounds])

    def coordinates(self, params):
        """Chart coordinates (ys, rs) of an (n, k) parameter array"""
        params = np.atleast_2d(np.asarray(params, dtype=float))
        ys, rs = self.embed(params)
        return ys, np.asarray(rs, dtype=float)

    def point(self, params):
        ys, rs = self.coordinates(np.asarray(params, dtype=float)[None, :])
        return ChartPoint(_row(ys, 0), float(rs[0]))

    def radius_at(self, s):
        """r at radial parameter s, other parameters at their lower bound"""
        params = self.lower.copy()
        params[self.radial_index] = s
        return float(self.coordinates(params[None, :])[1][0])

    def radius_range(self):
        if self.radial_index is None:
            r = float(self.coordinates(self.lower[None, :])[1][0])
            return r, r
        lo, hi = self.bounds[self.radial_index]
        return self.radius_at(lo), self.radius_at(hi)

    def touches_boundary(self):
        return self.radial_index is not None and self.radius_range()[0] == 0.0

    def param_for_radius(self, r):
        lo, hi = self.bounds[self.radial_index]
        r_lo, r_hi = self.radius_range()
        if r <= r_lo:
            return lo
        if r >= r_hi:
            return hi
        if self.radius_param is not None:
            return float(np.clip(self.radius_param(r), lo, hi))
        return float(brentq(lambda s: self.radius_at(s) - r, lo, hi, xtol=1e-14))

    def random_params(self, rng, n):
        return rng.uniform(self.lower, self.upper, size=(n, self.n_params))


def _row(ys, i):
    value = ys[i]
    return float(value) if np.ndim(value) == 0 else np.asarray(value, dtype=float)


class ParamSubmanifold:
    """Sub-manifold of a chart or quotient as a union of parametric components"""

    def __init__(self, name, components):
        self.name = name
        self.components = {}
        for component in components:
            if component.name in self.components:
                raise InvalidInputError(f"Duplicate component name '{component.name}' in '{name}'")
            self.components[component.name] = component
        if not self.components:
            raise InvalidInputError(f"Sub-manifold '{name}' has no components")

    def __repr__(self):
        return f"ParamSubmanifold({self.name!r}, components={list(self.components)})"

    def component(self, name):
        if name not in self.components:
            raise InvalidInputError(f"'{self.name}' has no component '{name}'")
        return self.components[name]

    @property
    def height(self):
        """Largest r reached by every component that meets the boundary face"""
        tops = [c.radius_range()[1] for c in self.components.values() if c.radial_index is not None]
        if not tops:
            return max(c.radius_range()[1] for c in self.components.values())
        return min(tops)

    def boundary_trace(self, samples=16):
        """Boundary points {r = 0} of the components, sampled over the boundary face"""
        trace = []
        for component in self.components.values():
            if not component.touches_boundary():
                continue
            for params in _face_params(component, samples):
                trace.append(component.point(params).y)
        return trace

    def sample(self, component, params):
        component = self.component(component) if isinstance(component, str) else component
        params = np.asarray(params, dtype=float)
        return SamplePoint(component.name, tuple(params.tolist()), component.point(params), component.piece)


@dataclass(frozen=True, eq=False)
class SamplePoint:
    """A point of a sub-manifold with its component and parameters"""
    component: str
    params: tuple
    point: ChartPoint
    piece: str = None

    @property
    def r(self):
        return self.point.r

    def key(self):
        return (self.component,) + tuple(self.params)


def _face_params(component, samples):
    """Parameter points on the r = 0 face of a component"""
    others = [k for k in range(component.n_params) if k != component.radial_index]
    axes = []
    for k in others:
        lo, hi = component.bounds[k]
        axes.append(np.linspace(lo, hi, samples, endpoint=not component.periodic[k]))
    grids = np.meshgrid(*axes, indexing='ij') if axes else []
    count = int(np.prod([len(a) for a in axes])) if axes else 1
    params = np.tile(component.lower, (count, 1))
    for k, grid in zip(others, grids):
        params[:, k] = grid.ravel()
    params[:, component.radial_index] = component.bounds[component.radial_index][0]
    return params


# p-sub-manifold condition

@dataclass
class PSubmanifoldCheck:
    """Outcome of the transversality check with per-point diagnostics"""
    passed: bool
    min_radial: float
    trace_size: int
    diagnostics: list = field(default_factory=list)

    def __bool__(self):
        return self.passed


def _tangent_columns(component, params, h):
    """Finite-difference tangent vectors (xi, lam) for each parameter, in the product metric"""
    base_ys, base_rs = component.coordinates(params[None, :])
    y0 = _row(base_ys, 0)
    columns = []
    for k in range(component.n_params):
        lo, hi = component.bounds[k]
        step = h * (hi - lo)
        forward = params.copy()
        forward[k] += step
        if forward[k] > hi and not component.periodic[k]:
            forward[k] = params[k] - step
            step = -step
        ys, rs = component.coordinates(forward[None, :])
        xi = np.atleast_1d(component.boundary.log(y0, _row(ys, 0))) / step
        lam = (float(rs[0]) - float(base_rs[0])) / step
        columns.append(np.concatenate([xi, [lam]]))
    return np.array(columns).T


def check_p_submanifold(submanifold, tol=0.1, samples=16, h=1e-6):
    """
    Check that every component meets {r = 0} transversally, with r = 0 only on its boundary face

    At sampled boundary-trace points the tangent space of X must contain a unit
    vector whose radial component is at least tol; the largest radial component
    is the norm of the projection of d/dr onto the tangent space.

    Args:
        submanifold (ParamSubmanifold): X in chart coordinates
        tol (float): Required radial component
        samples (int): Samples per face parameter
        h (float): Relative finite-difference step

    Returns:
        PSubmanifoldCheck: passed, smallest radial component and diagnostics
    """
    diagnostics = []
    min_radial = math.inf
    trace_size = 0
    for component in submanifold.components.values():
        grid = _interior_grid(component, 8)
        _, rs = component.coordinates(grid)
        if np.any(rs < 0):
            diagnostics.append({'component': component.name, 'reason': 'negative radius',
                                'params': grid[int(np.argmin(rs))].tolist()})
        if component.radial_index is not None:
            off_face = grid[:, component.radial_index] > component.bounds[component.radial_index][0]
            if np.any((rs == 0) & off_face):
                diagnostics.append({'component': component.name, 'reason': 'r = 0 off the boundary face'})
        if not component.touches_boundary():
            continue
        for params in _face_params(component, samples):
            trace_size += 1
            try:
                columns = _tangent_columns(component, params, h)
                basis, _ = np.linalg.qr(columns)
                radial = float(np.linalg.norm(basis[-1, :]))
            except Exception as e:
                logger.warning(f"Tangent evaluation failed on '{component.name}' at {params.tolist()}: {str(e)}")
                diagnostics.append({'component': component.name, 'reason': 'derivative evaluation failed',
                                    'params': params.tolist(), 'error': str(e)})
                continue
            min_radial = min(min_radial, radial)
            if radial < tol:
                diagnostics.append({'component': component.name, 'reason': 'tangent to the boundary',
                                    'params': params.tolist(), 'radial': radial})
    passed = not diagnostics
    logger.info(f"p-sub-manifold check of {submanifold.name!r}: passed={passed}, "
                f"min radial component {min_radial:.4g} over {trace_size} trace points")
    return PSubmanifoldCheck(passed, min_radial, trace_size, diagnostics)


def _interior_grid(component, n):
    axes = [np.linspace(lo, hi, n, endpoint=not periodic)
            for (lo, hi), periodic in zip(component.bounds, component.periodic)]
    mesh = np.meshgrid(*axes, indexing='ij')
    return np.column_stack([m.ravel() for m in mesh])


# Ambients

class ChartAmbient:
    """A single conic or ac chart as the ambient space; r = 0 points of a conic chart are one apex"""

    def __init__(self, spec, options=None, threads=None):
        self.spec = spec
        self.options = options
        self.threads = Config.THREADS if threads is None else threads
        self.model = length_model(spec)
        self.seams = ()

    def __repr__(self):
        return f"ChartAmbient({self.spec!r})"

    def model_for(self, component):
        return self.model

    def apex_key(self, component):
        return 'apex' if self.model.apex_allowed else None

    def outer(self, a, b):
        return chart_distance(self.spec, a.point, b.point, self.options).value

    def outer_batch(self, pairs):
        return Parallel(n_jobs=self.threads, prefer='threads')(delayed(self.outer)(a, b) for a, b in pairs)

    def prepare(self, points):
        """Hook for ambients that need the sample set in advance"""

    def seam_pairs(self, nodes):
        return []


class QuotientAmbient(ChartAmbient):
    """A quotient space as the ambient; components name the piece they live in"""

    def __init__(self, quotient, threads=None):
        self.quotient = quotient
        self.threads = Config.THREADS if threads is None else threads
        self.seams = quotient.seams

    def __repr__(self):
        return f"QuotientAmbient({self.quotient!r})"

    def _piece(self, component):
        if component.piece not in self.quotient.pieces:
            raise InvalidInputError(f"Component '{component.name}' names unknown piece '{component.piece}'")
        return self.quotient.pieces[component.piece]

    def model_for(self, component):
        return self._piece(component).length_model()

    def apex_key(self, component):
        piece = self._piece(component)
        if isinstance(piece, ChartPiece):
            label = self.quotient.collapse.label_of(piece.name, 'base')
            return None if label is None else ('apex', label)
        return None

    def outer(self, a, b):
        return quotient_distance(self.quotient, QuotientPoint(a.piece, a.point), QuotientPoint(b.piece, b.point))

    def seam_pairs(self, nodes):
        """Node index pairs identified by a seam: matching levels and boundary points"""
        pairs = []
        snap = Config.tolerance('mesh_snap') * 1e3
        for seam in self.seams:
            side_a = [(i, n) for i, n in enumerate(nodes)
                      if n.piece == seam.piece_a and abs(n.point.r - seam.level_a) <= 1e-12 * max(1.0, seam.level_a)]
            side_b = [(i, n) for i, n in enumerate(nodes)
                      if n.piece == seam.piece_b and abs(n.point.r - seam.level_b) <= 1e-12 * max(1.0, seam.level_b)]
            boundary = self.quotient.pieces[seam.piece_a].boundary
            for i, a in side_a:
                for j, b in side_b:
                    if boundary.distance(a.point.y, b.point.y) <= snap:
                        pairs.append((i, j))
        return pairs


class InnerAmbient(ChartAmbient):
    """
    Inner distance of a sub-manifold X used as the ambient of a nested Y

    Components of Y are matched to the components of X by name and must use
    the same parametrization.
    """

    def __init__(self, submanifold, base, options=None):
        self.submanifold = submanifold
        self.base = base
        self.lne_options = options or LneOptions()
        self.threads = base.threads
        self.seams = base.seams
        self.graph = None

    def __repr__(self):
        return f"InnerAmbient({self.submanifold.name!r}, {self.base!r})"

    def model_for(self, component):
        return self.base.model_for(component)

    def apex_key(self, component):
        return self.base.apex_key(component)

    def prepare(self, points):
        lifted = [self._lift(p) for p in points]
        self.graph = InnerGraph(self.submanifold, self.base, lifted, self.lne_options)

    def _lift(self, point):
        component = self.submanifold.component(point.component)
        params = np.asarray(point.params, dtype=float)
        if np.any(params < component.lower - 1e-12) or np.any(params > component.upper + 1e-12):
            raise InvalidInputError(f"{point.key()} is outside component '{component.name}' of '{self.submanifold.name}'")
        return self.submanifold.sample(component, params)

    def outer(self, a, b):
        if self.graph is None:
            self.prepare([a, b])
        return self.graph.distance(self._lift(a), self._lift(b))


def as_ambient(ambient, options=None):
    if isinstance(ambient, ChartAmbient):
        return ambient
    if isinstance(ambient, QuotientSpace):
        return QuotientAmbient(ambient)
    if isinstance(ambient, (ConicMetricSpec, AcMetricSpec)):
        return ChartAmbient(ambient, options)
    raise InvalidInputError(f"Cannot use {ambient!r} as an ambient space")


# Inner-distance graphs

@dataclass(frozen=True)
class LneOptions:
    """Scan settings; defaults come from the tolerance table"""
    rungs: int = 8
    growth_tol: float = 1.5
    diverging_run: int = 3
    noise_tol: float = 0.02
    pairs_per_scale: int = 24
    inner_outer_slack: float = 1e-6
    seed: int = None
    height: float = None
    n_radial: int = 64
    n_other: int = 32
    refine: bool = False
    refine_tol: float = 1e-7
    refine_max_iter: int = 200

    @classmethod
    def from_tolerances(cls, tolerances=None, **overrides):
        tolerances = tolerances or Config.get_tolerances()
        settings = {
            'rungs': int(tolerances['ladder_rungs']),
            'growth_tol': tolerances['growth_tol'],
            'diverging_run': int(tolerances['diverging_run']),
            'noise_tol': tolerances['noise_tol'],
            'pairs_per_scale': int(tolerances['pairs_per_scale']),
            'inner_outer_slack': tolerances['inner_outer_slack'],
            'refine_tol': tolerances['refine_tol'],
        }
        settings.update(overrides)
        return cls(**settings)

    @property
    def resolved_seed(self):
        return Config.DEFAULT_SEED if self.seed is None else int(self.seed)


def _param_path(a, b, periodic, upper, lower):
    """Parameter displacement from a to b, the short way round periodic parameters"""
    delta = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    period = np.asarray(upper) - np.asarray(lower)
    wrap = np.asarray(periodic, dtype=bool)
    delta = np.where(wrap, (delta + period / 2.0) % period - period / 2.0, delta)
    return delta


def embedded_lengths(component, model, starts, deltas, subdivisions=_EDGE_SUBDIVISIONS, levels=None):
    """
    Lengths of the images of parameter segments starts -> starts + deltas

    Each image is approximated by chart-straight pieces between embedded
    subdivision points, so the result is the length of an actual curve in X.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    deltas = np.atleast_2d(np.asarray(deltas, dtype=float))
    count, k = starts.shape
    t = np.linspace(0.0, 1.0, subdivisions + 1)
    params = starts[:, None, :] + t[None, :, None] * deltas[:, None, :]
    ys, rs = component.coordinates(params.reshape(-1, k))
    ys = np.asarray(ys, dtype=float)
    ys = ys.reshape((count, subdivisions + 1) + ys.shape[1:])
    rs = rs.reshape(count, subdivisions + 1)
    ya = ys[:, :-1].reshape((-1,) + ys.shape[2:])
    yb = ys[:, 1:].reshape((-1,) + ys.shape[2:])
    disp = model.displacement(list(ya), list(yb))
    lengths = model.segment_lengths(rs[:, :-1].ravel(), rs[:, 1:].ravel(), disp, levels=levels)
    return lengths.reshape(count, subdivisions).sum(axis=1)


class InnerGraph:
    """
    Weighted graph over the parameter grids of the components of X

    Nodes at r = 0 of a chart with an apex are identified, as are nodes matched
    by a quotient seam. Sample points are inserted into one-parameter grids and
    wired to the surrounding window of nodes on two-parameter grids.
    """

    def __init__(self, submanifold, ambient, extra=(), options=None):
        self.submanifold = submanifold
        self.ambient = ambient
        self.options = options or LneOptions()
        extra = list(extra)
        radii = [p.r for p in extra if p.r > 0]
        self.r_floor = min(radii) / 2.0 if radii else submanifold.height / 2.0 ** (self.options.rungs + 7)
        self.nodes = []
        self.axes = {}
        self.offsets = {}
        self.extra_nodes = {}
        rows, cols, weights = [], [], []
        for component in submanifold.components.values():
            own = [p for p in extra if p.component == component.name]
            self._add_component(component, own, rows, cols, weights)
        self._finalize(rows, cols, weights)
        self._cache = {}
        logger.info(f"Inner graph of {submanifold.name!r}: {len(self.nodes)} nodes, {self.n_labels} after identification")

    def _axis(self, component, index, inserts):
        lo, hi = component.bounds[index]
        if index == component.radial_index:
            r_lo, r_hi = component.radius_range()
            start = max(r_lo, min(self.r_floor, r_hi / 2.0))
            levels = np.geomspace(start, r_hi, self.options.n_radial)
            params = [component.param_for_radius(float(r)) for r in levels]
            params = [lo] + params + [hi]
        elif component.periodic[index]:
            params = list(np.linspace(lo, hi, self.options.n_other, endpoint=False))
        else:
            params = list(np.linspace(lo, hi, self.options.n_other))
        params = np.clip(np.asarray(params + list(inserts), dtype=float), lo, hi)
        return np.unique(params)

    def _add_component(self, component, extra, rows, cols, weights):
        model = self.ambient.model_for(component)
        k = component.n_params
        if k > 2:
            raise UnsupportedFamilyError(f"Inner graphs cover components with at most two parameters, '{component.name}' has {k}")
        one_dim = k == 1
        axes = [self._axis(component, i, [p.params[i] for p in extra] if one_dim else []) for i in range(k)]
        self.axes[component.name] = axes
        shape = tuple(len(a) for a in axes)
        grid = np.meshgrid(*axes, indexing='ij')
        params = np.column_stack([g.ravel() for g in grid])
        offset = len(self.nodes)
        self.offsets[component.name] = (offset, shape)
        self._append_nodes(component, params)
        starts, deltas, first, second = [], [], [], []
        steps = ((1,),) if one_dim else _OFFSETS_2D
        index = np.arange(params.shape[0]).reshape(shape)
        for step in steps:
            src, dst = self._shift(index, step, component.periodic)
            if src.size == 0:
                continue
            starts.append(params[src])
            deltas.append(_param_path(params[src], params[dst], component.periodic, component.upper, component.lower))
            first.append(src + offset)
            second.append(dst + offset)
        if not one_dim:
            for point in extra:
                node = self._extra_node(component, point)
                window = self._window(component, np.asarray(point.params), index, params)
                p = np.tile(np.asarray(point.params, dtype=float), (len(window), 1))
                starts.append(p)
                deltas.append(_param_path(p, params[window], component.periodic, component.upper, component.lower))
                first.append(np.full(len(window), node))
                second.append(window + offset)
        if starts:
            lengths = embedded_lengths(component, model, np.concatenate(starts), np.concatenate(deltas))
            rows.append(np.concatenate(first))
            cols.append(np.concatenate(second))
            weights.append(lengths)

    def _append_nodes(self, component, params):
        ys, rs = component.coordinates(params)
        for i, row in enumerate(params):
            self.nodes.append(SamplePoint(component.name, tuple(row.tolist()),
                                          ChartPoint(_row(ys, i), float(rs[i])), component.piece))

    def _extra_node(self, component, point):
        key = point.key()
        if key not in self.extra_nodes:
            self.extra_nodes[key] = len(self.nodes)
            self._append_nodes(component, np.asarray(point.params, dtype=float)[None, :])
        return self.extra_nodes[key]

    @staticmethod
    def _shift(index, step, periodic):
        src = index
        dst = index
        for axis, (s, wrap) in enumerate(zip(step, periodic)):
            dst = np.roll(dst, -s, axis=axis)
            if not wrap:
                size = index.shape[axis]
                keep = [slice(None)] * index.ndim
                keep[axis] = slice(0, size - abs(s)) if s > 0 else slice(abs(s), size)
                src = src[tuple(keep)]
                dst = dst[tuple(keep)]
        return src.ravel(), dst.ravel()

    def _window(self, component, params, index, grid_params, width=2):
        cells = []
        for axis, value in enumerate(params):
            position = int(np.searchsorted(self.axes[component.name][axis], value))
            size = len(self.axes[component.name][axis])
            span = np.arange(position - width, position + width)
            if component.periodic[axis]:
                span = span % size
            else:
                span = span[(span >= 0) & (span < size)]
            cells.append(np.unique(span))
        mesh = np.meshgrid(*cells, indexing='ij')
        return index[tuple(m.ravel() for m in mesh)]

    def _finalize(self, rows, cols, weights):
        n = len(self.nodes)
        ident_i, ident_j = [], []
        apex_nodes = {}
        for i, node in enumerate(self.nodes):
            if node.point.r == 0:
                key = self.ambient.apex_key(self.submanifold.component(node.component))
                if key is not None:
                    apex_nodes.setdefault(key, []).append(i)
        for members in apex_nodes.values():
            ident_i.extend(members[:-1])
            ident_j.extend(members[1:])
        for i, j in self.ambient.seam_pairs(self.nodes):
            ident_i.append(i)
            ident_j.append(j)
        identification = coo_matrix((np.ones(len(ident_i)), (ident_i, ident_j)), shape=(n, n))
        self.n_labels, self.labels = connected_components(identification, directed=False)
        if rows:
            u = self.labels[np.concatenate(rows)]
            v = self.labels[np.concatenate(cols)]
            w = np.concatenate(weights)
        else:
            u = v = np.zeros(0, dtype=int)
            w = np.zeros(0)
        keep = u != v
        u, v, w = u[keep], v[keep], w[keep]
        u, v = np.concatenate([u, v]), np.concatenate([v, u])
        w = np.concatenate([w, w])
        # Keep the lightest of parallel edges
        keys = u.astype(np.int64) * self.n_labels + v
        order = np.lexsort((w, keys))
        _, first = np.unique(keys[order], return_index=True)
        chosen = order[first]
        positive = np.maximum(w[chosen], 1e-300)
        self.matrix = coo_matrix((positive, (u[chosen], v[chosen])), shape=(self.n_labels, self.n_labels)).tocsr()

    def node_of(self, point):
        component = self.submanifold.component(point.component)
        if point.key() in self.extra_nodes:
            return self.extra_nodes[point.key()]
        offset, shape = self.offsets[component.name]
        position = []
        for axis, value in enumerate(point.params):
            axis_values = self.axes[component.name][axis]
            i = int(np.searchsorted(axis_values, value))
            if i >= len(axis_values) or axis_values[i] != value:
                raise InvalidInputError(f"{point.key()} is not a node of the inner graph of '{self.submanifold.name}'")
            position.append(i)
        return offset + int(np.ravel_multi_index(position, shape))

    def _from(self, label):
        if label not in self._cache:
            distances, predecessors = dijkstra(self.matrix, directed=True, indices=label, return_predecessors=True)
            self._cache[label] = (distances, predecessors)
        return self._cache[label]

    def distance(self, a, b):
        """Inner distance between two sample points; math.inf across connected components"""
        la = int(self.labels[self.node_of(a)])
        lb = int(self.labels[self.node_of(b)])
        if la == lb:
            return 0.0
        source, target = min(la, lb), max(la, lb)
        distances, predecessors = self._from(source)
        value = float(distances[target])
        if a.component == b.component:
            value = min(value, self._direct(a, b))
        if self.options.refine and math.isfinite(value):
            value = min(value, self._refined(source, target, predecessors))
        return value

    def _direct(self, a, b):
        component = self.submanifold.component(a.component)
        model = self.ambient.model_for(component)
        start = np.asarray(a.params, dtype=float)
        delta = _param_path(start, b.params, component.periodic, component.upper, component.lower)
        return float(embedded_lengths(component, model, start, delta, subdivisions=32)[0])

    def _label_path(self, source, target, predecessors):
        path = [target]
        while path[-1] != source:
            path.append(int(predecessors[path[-1]]))
        return path[::-1]

    def _refined(self, source, target, predecessors):
        """Relax runs of the graph path that stay inside one component, vertices moving in parameter space"""
        labels = self._label_path(source, target, predecessors)
        members = {}
        for i, label in enumerate(self.labels):
            members.setdefault(int(label), []).append(i)
        total = 0.0
        run = [members[labels[0]][0]]
        for previous, label in zip(labels[:-1], labels[1:]):
            component = self.nodes[run[-1]].component
            same = [c for c in members[label] if self.nodes[c].component == component]
            if same:
                run.append(same[0])
                continue
            total += self._relax_run(run)
            node = members[label][0]
            bridge = [c for c in members[previous] if self.nodes[c].component == self.nodes[node].component]
            run = bridge[:1] + [node]
        total += self._relax_run(run)
        return total

    def _relax_run(self, run):
        if len(run) < 2:
            return 0.0
        component = self.submanifold.component(self.nodes[run[0]].component)
        model = self.ambient.model_for(component)
        params = np.array([self.nodes[i].params for i in run], dtype=float)
        unwrapped = np.vstack([params[:1], params[0] + np.cumsum(
            _param_path(params[:-1], params[1:], component.periodic, component.upper, component.lower), axis=0)])

        def segments(z):
            full = unwrapped.copy()
            full[1:-1] = z
            return embedded_lengths(component, model, full[:-1], np.diff(full, axis=0), subdivisions=2, levels=5)

        seed_length = float(np.sum(segments(unwrapped[1:-1])))
        if len(run) < 3:
            return seed_length
        lower = np.where(component.periodic, -np.inf, component.lower)
        upper = np.where(component.periodic, np.inf, component.upper)
        width = 0.5 * np.max(np.abs(np.diff(unwrapped, axis=0)), axis=0) + 1e-12
        relaxation = PolylineRelaxation(segments, unwrapped[1:-1], lower, upper, width,
                                        self.options.refine_tol, self.options.refine_max_iter, accelerate=False)
        z, _ = relaxation.run()
        return min(seed_length, float(np.sum(segments(z))))


def _as_sample(submanifold, p):
    if isinstance(p, SamplePoint):
        return p
    component, params = p
    return submanifold.sample(component, params)


def outer_distance(submanifold, ambient, p, p2, options=None):
    """
    Ambient distance between two points of X

    Args:
        submanifold (ParamSubmanifold): X
        ambient: Chart spec, quotient or ambient object
        p: SamplePoint or (component, params)
        p2: SamplePoint or (component, params)
        options (DistanceOptions): Chart distance options

    Returns:
        float: d(p, p')
    """
    ambient = as_ambient(ambient, options)
    return float(ambient.outer(_as_sample(submanifold, p), _as_sample(submanifold, p2)))


def inner_distance(submanifold, ambient, p, p2, options=None):
    """
    Inner distance of X between two of its points

    Shortest path on the parameter-grid graph of X with edges weighted by the
    ambient length of their images, optionally relaxed inside each component.

    Returns:
        float: d_inn(p, p'); math.inf when p and p' lie in different connected components
    """
    ambient = as_ambient(ambient)
    a = _as_sample(submanifold, p)
    b = _as_sample(submanifold, p2)
    graph = InnerGraph(submanifold, ambient, [a, b], options)
    return graph.distance(a, b)


# Scans

@dataclass
class LneReport:
    """Per-scale inner/outer ratios, running supremum, witness and verdict"""
    name: str
    ladder: list
    rows: list = field(default_factory=list)
    suprema: list = field(default_factory=list)
    skipped_scales: list = field(default_factory=list)
    skipped_pairs: int = 0
    violations: int = 0
    verdict: str = BOUNDED
    growth: float = 1.0
    predicted: float = None

    @property
    def supremum(self):
        finite = [s for s in self.suprema if s is not None]
        return max(finite) if finite else math.nan

    @property
    def witness(self):
        if not self.rows:
            return None
        return max(self.rows, key=lambda row: row['ratio'])

    @property
    def within_prediction(self):
        return self.predicted is None or self.supremum <= self.predicted

    def to_dict(self):
        witness = self.witness
        return {
            'name': self.name,
            'ladder': list(self.ladder),
            'suprema': list(self.suprema),
            'supremum': self.supremum,
            'verdict': self.verdict,
            'growth': self.growth,
            'predicted': self.predicted,
            'pairs': len(self.rows),
            'skipped_pairs': self.skipped_pairs,
            'skipped_scales': list(self.skipped_scales),
            'violations': self.violations,
            'witness': None if witness is None else {k: witness[k] for k in ('scale', 'a', 'b', 'outer', 'inner', 'ratio')},
        }

    def csv_rows(self):
        return [{'scale': row['scale'], 'stratum': row['stratum'], 'a': row['a'], 'b': row['b'],
                 'r_a': row['r_a'], 'r_b': row['r_b'], 'outer': row['outer'], 'inner': row['inner'],
                 'ratio': row['ratio']} for row in self.rows]

    def check_inner_outer(self):
        if self.violations:
            bad = min(self.rows, key=lambda row: row['ratio'])
            raise InvariantViolation(f"{self.name}: {self.violations} pairs with inner < outer", pair=bad)


def scan_verdict(suprema, growth_tol, run, noise_tol):
    """
    DIVERGING when the running supremum grows on `run` consecutive rungs, each
    by at least 1 + noise_tol, with overall growth at least growth_tol
    """
    finite = [s for s in suprema if s is not None and math.isfinite(s)]
    transitions = [b / a for a, b in zip(finite[:-1], finite[1:])]
    for start in range(len(transitions) - run + 1):
        window = transitions[start:start + run]
        if all(t >= 1.0 + noise_tol for t in window) and float(np.prod(window)) >= growth_tol:
            return DIVERGING
    return BOUNDED


def _growth(suprema):
    finite = [s for s in suprema if s is not None and math.isfinite(s) and s > 0]
    if len(finite) < 2:
        return 1.0
    return float((finite[-1] / finite[0]) ** (1.0 / (len(finite) - 1)))


def _point_in_band(submanifold, component, rng, low, high, exact_r=None):
    r_lo, r_hi = component.radius_range()
    if component.radial_index is None:
        if not (low <= r_lo <= high):
            return None
        return submanifold.sample(component, component.random_params(rng, 1)[0])
    low, high = max(low, r_lo), min(high, r_hi)
    if low > high:
        return None
    r = exact_r if exact_r is not None else float(rng.uniform(low, high))
    params = component.random_params(rng, 1)[0]
    params[component.radial_index] = component.param_for_radius(min(max(r, low), high))
    return submanifold.sample(component, params)


def stratified_pairs(submanifold, scales, options):
    """
    Seeded sample pairs per scale, by stratum

    Strata: 'within' (both points with r in [eps/2, eps]), 'cross' (one in the
    band, one in [eps/8, eps/2]), 'apex' (one in the band, one on the boundary
    face or at r <= eps/64) and 'matched' (equal r on different components, or
    on one multi-parameter component, with one pair at the bottom of the band).

    Returns:
        list: Per scale, a list of (stratum, a, b)
    """
    rng = np.random.default_rng(options.resolved_seed)
    components = list(submanifold.components.values())
    quota = max(1, options.pairs_per_scale // 4)
    ladder_pairs = []
    for eps in scales:
        pairs = []

        def draw(low, high, exact_r=None, pool=None):
            pool = pool or components
            order = rng.permutation(len(pool))
            for i in order:
                point = _point_in_band(submanifold, pool[i], rng, low, high, exact_r)
                if point is not None:
                    return point
            return None

        for _ in range(quota):
            pairs.append(('within', draw(eps / 2.0, eps), draw(eps / 2.0, eps)))
        for _ in range(quota):
            pairs.append(('cross', draw(eps / 2.0, eps), draw(eps / 8.0, eps / 2.0)))
        face = [c for c in components if c.touches_boundary()]
        for k in range(quota):
            if face and k == 0:
                component = face[int(rng.integers(len(face)))]
                params = component.random_params(rng, 1)[0]
                params[component.radial_index] = component.bounds[component.radial_index][0]
                pairs.append(('apex', submanifold.sample(component, params), draw(eps / 2.0, eps)))
            else:
                pairs.append(('apex', draw(0.0, eps / 64.0), draw(eps / 2.0, eps)))
        multi = [c for c in components if c.n_params > 1]
        for k in range(quota):
            r = eps / 2.0 if k == 0 else float(rng.uniform(eps / 2.0, eps))
            if len(components) > 1:
                first, second = rng.choice(len(components), size=2, replace=False)
                pair = (draw(0.0, math.inf, r, [components[first]]), draw(0.0, math.inf, r, [components[second]]))
            elif multi:
                pair = (draw(0.0, math.inf, r, multi), draw(0.0, math.inf, r, multi))
            else:
                pair = (draw(eps / 2.0, eps), draw(eps / 2.0, eps))
            pairs.append(('matched',) + pair)
        ladder_pairs.append([(s, a, b) for s, a, b in pairs if a is not None and b is not None])
    return ladder_pairs


def _evaluate(report, submanifold, ambient, ladder_pairs, options, graph=None):
    """Fill a report from per-scale pairs; one inner graph serves the whole ladder"""
    points = [p for pairs in ladder_pairs for _, a, b in pairs for p in (a, b)]
    ambient.prepare(points)
    graph = graph or InnerGraph(submanifold, ambient.base if isinstance(ambient, InnerAmbient) else ambient,
                                points, options)
    running = None
    for eps, pairs in zip(report.ladder, ladder_pairs):
        outer = ambient.outer_batch([(a, b) for _, a, b in pairs]) if pairs else []
        scale_max = None
        for (stratum, a, b), d_out in zip(pairs, outer):
            d_in = graph.distance(a, b)
            if d_out <= 0 or not math.isfinite(d_in):
                report.skipped_pairs += 1
                continue
            ratio = d_in / d_out
            if d_in < d_out * (1.0 - options.inner_outer_slack) - options.inner_outer_slack:
                report.violations += 1
                logger.warning(f"{report.name}: inner {d_in:.12g} < outer {d_out:.12g} for {a.key()} / {b.key()}")
            report.rows.append({'scale': eps, 'stratum': stratum, 'a': list(a.key()), 'b': list(b.key()),
                                'r_a': a.r, 'r_b': b.r, 'outer': float(d_out), 'inner': float(d_in),
                                'ratio': float(ratio)})
            scale_max = ratio if scale_max is None else max(scale_max, ratio)
        if scale_max is None:
            logger.warning(f"{report.name}: no admissible pairs at scale {eps:.6g}, skipped")
            report.skipped_scales.append(eps)
            report.suprema.append(None)
            continue
        running = scale_max if running is None else max(running, scale_max)
        report.suprema.append(running)
        logger.debug(f"{report.name}: scale {eps:.6g} running supremum {running:.6g}")
    report.verdict = scan_verdict(report.suprema, options.growth_tol, options.diverging_run, options.noise_tol)
    report.growth = _growth(report.suprema)
    logger.info(f"{report.name}: verdict {report.verdict}, supremum {report.supremum:.6g}, "
                f"growth per rung {report.growth:.4g}")
    return report


def scale_ladder(height, rungs):
    """eps_k = height / 2^k for k = 1..rungs"""
    return [height / 2.0 ** k for k in range(1, rungs + 1)]


def lne_ratio_scan(submanifold, ambient, scales=None, options=None):
    """
    Inner/outer ratio scan over a shrinking ladder toward the boundary face

    Args:
        submanifold (ParamSubmanifold): X
        ambient: Chart spec, quotient or ambient object
        scales (list): Ladder of heights, eta/2^k for k = 1..rungs by default
        options (LneOptions): Scan settings

    Returns:
        LneReport: Ratios per scale with running supremum and verdict
    """
    options = options or LneOptions.from_tolerances()
    ambient = as_ambient(ambient)
    height = options.height if options.height is not None else submanifold.height
    scales = list(scales) if scales is not None else scale_ladder(height, options.rungs)
    report = LneReport(f"lne-scan:{submanifold.name}", scales)
    try:
        return _evaluate(report, submanifold, ambient, stratified_pairs(submanifold, scales, options), options)
    except Exception as e:
        logger.error(f"LNE scan of {submanifold.name!r} failed: {str(e)}")
        raise


def _offset_point(submanifold, component, rng, centre, h, inner=0.0):
    """Point with parameter offset from the centre of max-norm in [inner h, h] (per-axis relative)"""
    span = component.upper - component.lower
    delta = rng.uniform(-1.0, 1.0, component.n_params) * h * span
    axis = int(rng.integers(component.n_params))
    delta[axis] = np.sign(delta[axis] or 1.0) * rng.uniform(inner, 1.0) * h * span[axis]
    params = centre + delta
    for k in range(component.n_params):
        if component.periodic[k]:
            params[k] = component.lower[k] + (params[k] - component.lower[k]) % span[k]
    params = np.clip(params, component.lower, component.upper)
    return submanifold.sample(component, params)


def local_lne_scan(submanifold, ambient, centre, options=None):
    """
    Ratio scan on shrinking parameter neighbourhoods of a point of X

    Rung k uses the box of relative half-width 2^-k around the centre;
    pairs join the centre to the outer shell of the box, or two box points.
    """
    options = options or LneOptions.from_tolerances()
    ambient = as_ambient(ambient)
    centre = _as_sample(submanifold, centre)
    component = submanifold.component(centre.component)
    rng = np.random.default_rng(options.resolved_seed)
    base = np.asarray(centre.params, dtype=float)
    widths = scale_ladder(1.0, options.rungs)
    ladder_pairs = []
    half = max(1, options.pairs_per_scale // 2)
    for h in widths:
        pairs = [('centre', centre, _offset_point(submanifold, component, rng, base, h, 0.5)) for _ in range(half)]
        pairs += [('within', _offset_point(submanifold, component, rng, base, h, 0.5),
                   _offset_point(submanifold, component, rng, base, h)) for _ in range(half)]
        ladder_pairs.append(pairs)
    report = LneReport(f"local-lne:{submanifold.name}@{centre.key()}", widths)
    return _evaluate(report, submanifold, ambient, ladder_pairs, options)


def global_lne_scan(submanifold, ambient, options=None, samples=None):
    """
    Ratio scan over outer-distance bands (D/2^k, D/2^(k-1)] of random point pairs of X

    Meant for compact X, where boundedness over all bands is the global LNE evidence.
    """
    options = options or LneOptions.from_tolerances()
    ambient = as_ambient(ambient)
    rng = np.random.default_rng(options.resolved_seed)
    samples = samples or 4 * options.pairs_per_scale
    components = list(submanifold.components.values())
    points = []
    for k in range(samples):
        component = components[k % len(components)]
        points.append(submanifold.sample(component, component.random_params(rng, 1)[0]))
    candidates = [(points[i], points[j]) for i in range(samples) for j in range(i + 1, samples)]
    outer = np.array(ambient.outer_batch(candidates), dtype=float)
    diameter = float(outer[np.isfinite(outer)].max())
    ladder = [diameter / 2.0 ** (k - 1) for k in range(1, options.rungs + 1)]
    ladder_pairs = []
    for top in ladder:
        band = np.nonzero((outer > top / 2.0) & (outer <= top))[0]
        if band.size > options.pairs_per_scale:
            band = np.sort(rng.choice(band, options.pairs_per_scale, replace=False))
        ladder_pairs.append([('band',) + candidates[i] for i in band])
    report = LneReport(f"global-lne:{submanifold.name}", ladder)
    return _evaluate(report, submanifold, ambient, ladder_pairs, options)


def local_to_global_check(submanifold, ambient, centres, options=None):
    """
    Local scans at a finite cover of centres followed by the global scan

    Returns:
        dict: {'local': [verdicts], 'global': verdict, 'consistent': bool}
    """
    local = [local_lne_scan(submanifold, ambient, centre, options).verdict for centre in centres]
    overall = global_lne_scan(submanifold, ambient, options).verdict
    consistent = not (all(v == BOUNDED for v in local) and overall != BOUNDED)
    logger.info(f"Local-to-global check of {submanifold.name!r}: local {local}, global {overall}")
    return {'local': local, 'global': overall, 'consistent': consistent}


def hereditary_check(inner_set, outer_set, ambient, options=None):
    """
    Verdict of Y against the ambient distance and against X's inner distance, on one sample set

    Args:
        inner_set (ParamSubmanifold): Y, components named and parametrized as in X
        outer_set (ParamSubmanifold): X containing Y
        ambient: Ambient of X

    Returns:
        tuple: (LneReport against the ambient, LneReport against d_inn of X)
    """
    options = options or LneOptions.from_tolerances()
    ambient = as_ambient(ambient)
    height = options.height if options.height is not None else inner_set.height
    scales = scale_ladder(height, options.rungs)
    pairs = stratified_pairs(inner_set, scales, options)
    direct = _evaluate(LneReport(f"hereditary-ambient:{inner_set.name}", scales), inner_set, ambient, pairs, options)
    relative = InnerAmbient(outer_set, ambient, options)
    through = _evaluate(LneReport(f"hereditary-inner:{inner_set.name}", scales), inner_set, relative, pairs,
                        options, InnerGraph(inner_set, ambient, [p for ps in pairs for _, a, b in ps for p in (a, b)],
                                            options))
    return direct, through


# Boundary subsets and cylinders

@dataclass(frozen=True)
class BoundarySubset:
    """
    Subset Y of a circle boundary: 'full', an 'arc' [start, start + length] in angle, or finitely many 'points'
    """
    kind: str
    start: float = 0.0
    length: float = 0.0
    points: tuple = ()

    def __post_init__(self):
        if self.kind not in ('full', 'arc', 'points'):
            raise InvalidInputError(f"Unknown boundary subset kind '{self.kind}'")
        if self.kind == 'arc' and not 0 < self.length < TWO_PI:
            raise InvalidInputError(f"Arc angle must lie in (0, 2 pi), got {self.length}")
        if self.kind == 'points' and not self.points:
            raise InvalidInputError("A point subset needs at least one point")


def lne_constant(subset, boundary, samples=129):
    """
    Inner/outer constant of Y inside the circle, per connected component

    Returns:
        float: sup over sampled pairs of arc distance within Y over circle distance
    """
    if subset.kind in ('full', 'points'):
        return 1.0
    t = np.linspace(0.0, subset.length, samples)
    a, b = np.meshgrid(t, t, indexing='ij')
    mask = a < b
    inner = boundary.scale * (b - a)[mask]
    outer = boundary.distance_array(((subset.start + a[mask]) % TWO_PI)[:, None],
                                    ((subset.start + b[mask]) % TWO_PI)[:, None])
    return float(np.max(inner / outer))


def predicted_cylinder_bound(spec, constant):
    """
    Ratio bound for Y x [0, eps] from d_inn <= |r - r'| + min(r, r') L d_N and the cone lower bound
    d >= (|r - r'| + (2/pi) min(r, r') min(sqrt(c) d_N, pi)) / 2, widened by the equivalence constants
    """
    equivalence = calibrate_equivalence(spec, r_max=spec.height if math.isfinite(spec.height) else 1.0)
    c = spec.family.scale_at_zero()
    diameter = spec.boundary.diameter()
    bound = 2.0 * max(1.0, 0.5 * math.pi * constant / math.sqrt(c), 0.5 * constant * diameter)
    return bound * equivalence.upper / equivalence.lower


def cylinder_lne_check(subset, spec, options=None, scales=None):
    """
    Scan Y x [0, eps] in a conic chart and compare the supremum with the predicted bound

    Args:
        subset (BoundarySubset): Y in the circle boundary of the chart
        spec (ConicMetricSpec): The chart
        options (LneOptions): Scan settings
        scales (list): Optional ladder

    Returns:
        LneReport: With `predicted` set
    """
    if not isinstance(spec, ConicMetricSpec) or not isinstance(spec.boundary, Circle):
        raise UnsupportedFamilyError(f"Cylinder checks cover conic charts over a circle, got {spec!r}")
    options = options or LneOptions.from_tolerances()
    height = options.height if options.height is not None else (spec.height if math.isfinite(spec.height) else 1.0)
    submanifold = boundary_cylinder(spec.boundary, subset, height)
    constant = lne_constant(subset, spec.boundary)
    report = lne_ratio_scan(submanifold, ChartAmbient(spec), scales, replace(options, height=height))
    report.predicted = predicted_cylinder_bound(spec, constant)
    logger.info(f"Cylinder check {subset.kind}: supremum {report.supremum:.6g}, predicted bound {report.predicted:.6g}")
    return report


# Named families

def _angle_embed(theta_fn, r_fn):
    def embed(params):
        return np.mod(theta_fn(params), TWO_PI), r_fn(params)
    return embed


def radial_ray(boundary, y, height, name='ray', r_min=0.0, piece=None):
    """Ray {y} x [r_min, height]"""
    y = boundary.normalize(y)

    def embed(params):
        count = params.shape[0]
        ys = np.full(count, float(y)) if np.ndim(y) == 0 else np.tile(np.asarray(y, dtype=float), (count, 1))
        return ys, params[:, 0].copy()

    return SubmanifoldComponent(name, boundary, embed, ((r_min, height),), radial_index=0,
                                radius_param=lambda r: r, piece=piece)


def ray_pair(boundary, y1, y2, height):
    """Two radial rays meeting at the apex"""
    return ParamSubmanifold('ray-pair', [radial_ray(boundary, y1, height, 'ray0'),
                                         radial_ray(boundary, y2, height, 'ray1')])


def circle_level(boundary, level, name='level'):
    """Level set {r = level} over a circle boundary"""
    if not isinstance(boundary, Circle):
        raise UnsupportedFamilyError(f"Level curves are provided over a circle, got {boundary!r}")
    embed = _angle_embed(lambda p: p[:, 0], lambda p: np.full(p.shape[0], float(level)))
    component = SubmanifoldComponent(name, boundary, embed, ((0.0, TWO_PI),), periodic=(True,))
    return ParamSubmanifold(f"circle-level-{level:g}", [component])


def tangent_curve(boundary=None, s_max=0.5):
    """
    Ray {theta = 0} together with the curve (theta, r) = (s, s^2), which meets the
    boundary tangentially; not a p-sub-manifold
    """
    boundary = boundary or Circle(TWO_PI)
    top = s_max ** 2
    ray = radial_ray(boundary, 0.0, top, 'ray')
    curve = SubmanifoldComponent('curve', boundary, _angle_embed(lambda p: p[:, 0], lambda p: p[:, 0] ** 2),
                                 ((0.0, s_max),), radial_index=0, radius_param=math.sqrt)
    return ParamSubmanifold('tangent-curve', [ray, curve])


def boundary_cylinder(boundary, subset, height):
    """Y x [0, height] for a subset Y of a circle boundary"""
    if subset.kind == 'points':
        rays = [radial_ray(boundary, y, height, f"ray{k}") for k, y in enumerate(subset.points)]
        return ParamSubmanifold('cylinder-points', rays)
    if subset.kind == 'full':
        bounds, periodic, start = ((0.0, height), (0.0, TWO_PI)), (False, True), 0.0
    else:
        bounds, periodic, start = ((0.0, height), (0.0, subset.length)), (False, False), subset.start
    embed = _angle_embed(lambda p: start + p[:, 1], lambda p: p[:, 0].copy())
    component = SubmanifoldComponent('cylinder', boundary, embed, bounds, periodic, radial_index=0,
                                     radius_param=lambda r: r)
    return ParamSubmanifold(f"cylinder-{subset.kind}", [component])


def plane_ray_pair(quotient, r_min=2.0 ** -12):
    """
    The line through the origin of the plane quotient: rays at angles 0 and pi in
    the core disk and in the end chart, meeting at the apex and across the seam
    """
    core = quotient.pieces['core']
    end = quotient.pieces['end']
    components = []
    for k, angle in enumerate((0.0, math.pi)):
        components.append(radial_ray(core.boundary, angle, core.height, f"core{k}", piece='core'))
        components.append(radial_ray(end.boundary, angle, end.height, f"end{k}", r_min=r_min, piece='end'))
    return ParamSubmanifold('plane-line', components)


def submanifold_from_config(declaration, boundaries, quotients=None):
    """
    Build a named sub-manifold family from its scenario declaration

    Schema: {"family": "radial_ray"|"ray_pair"|"circle_level"|"tangent_curve"|
    "boundary_cylinder"|"plane_ray_pair", "boundary": name, ...family parameters}
    """
    family = declaration.get('family')
    boundary = boundaries.get(declaration.get('boundary')) if declaration.get('boundary') else None
    height = float(declaration.get('height', 1.0))
    if family in ('radial_ray', 'ray_pair', 'circle_level', 'boundary_cylinder') and boundary is None:
        raise InvalidInputError(f"Sub-manifold family '{family}' needs a declared boundary")
    if family == 'radial_ray':
        return ParamSubmanifold('radial-ray', [radial_ray(boundary, declaration.get('y', 0.0), height)])
    if family == 'ray_pair':
        return ray_pair(boundary, declaration['y1'], declaration['y2'], height)
    if family == 'circle_level':
        return circle_level(boundary, float(declaration['level']))
    if family == 'tangent_curve':
        return tangent_curve(boundary, float(declaration.get('s_max', 0.5)))
    if family == 'boundary_cylinder':
        return boundary_cylinder(boundary, subset_from_config(declaration.get('subset', {'kind': 'full'})), height)
    if family == 'plane_ray_pair':
        name = declaration.get('quotient')
        if not quotients or name not in quotients:
            raise InvalidInputError(f"plane_ray_pair references undeclared quotient '{name}'")
        return plane_ray_pair(quotients[name], float(declaration.get('r_min', 2.0 ** -12)))
    raise InvalidInputError(f"Unknown sub-manifold family '{family}'")


def subset_from_config(declaration):
    return BoundarySubset(declaration.get('kind', 'full'), float(declaration.get('start', 0.0)),
                          float(declaration.get('length', 0.0)), tuple(declaration.get('points', ())))
