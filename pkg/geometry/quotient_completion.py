"""
Quotient completion module
Conic singular spaces built as quotients of manifolds with conic metric,
the conic inversion and conic completions with their duality checks
"""

import itertools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from joblib import Parallel, delayed

from geometry.boundary_manifold import Circle
from geometry.conic_metrics import (AcMetricSpec, ChartPoint, ConicMetricSpec, Constant, SuspensionSpec, Tangent,
                                    conformal_gluing_residual, length_model)
from geometry.distance_engine import (DistanceOptions, ac_distance, ac_e_function, conic_distance,
                                      cone_distance_array, suspension_distance_array, truncated_cone_distance_array)
from utils.config import Config
from utils.exceptions import InvalidInputError, InvariantViolation, SingularEvaluationError, UnsupportedFamilyError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QuotientPoint:
    """Chart point of a named piece"""
    piece: str
    point: ChartPoint

    def __repr__(self):
        return f"QuotientPoint({self.piece!r}, {self.point!r})"


class QuotientPiece(ABC):
    """A connected manifold with conic metric taking part in a quotient"""

    components = ()
    exact = True

    def __init__(self, name, spec, options=None):
        self.name = name
        self.spec = spec
        self.options = options or DistanceOptions()

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, {self.spec!r})"

    @property
    def boundary(self):
        return self.spec.boundary

    @property
    def height(self):
        return self.spec.height

    def check_point(self, point):
        self.spec.check_radius(point.r)

    @abstractmethod
    def distance(self, x, x2):
        """Distance inside the piece"""

    @abstractmethod
    def distances_to(self, x, points):
        """Distances from x to each of a list of chart points"""

    def distance_matrix(self, points):
        return np.array([self.distances_to(p, points) for p in points])

    def distance_to_component(self, x, component):
        raise InvalidInputError(f"{self!r} has no boundary component '{component}'")

    def component_distance(self, first, second):
        raise InvalidInputError(f"{self!r} has no boundary components to join")

    def length_model(self):
        return length_model(self.spec)


class ChartPiece(QuotientPiece):
    """Conic chart Cyl(N, eta) whose boundary {r = 0} is one collapsible component"""

    components = ('base',)

    def __init__(self, name, spec, options=None):
        super().__init__(name, spec, options)
        self.exact = spec.family.is_constant

    def distance(self, x, x2):
        return conic_distance(self.spec, x, x2, self.options).value

    def distances_to(self, x, points):
        if not self.exact:
            return np.array([self.distance(x, p) for p in points])
        radii = np.array([p.r for p in points], dtype=float)
        d_n = np.ravel(self.boundary.distances_from(x.y, [p.y for p in points]))
        return cone_distance_array(self.spec.family.g_scale, x.r, radii, d_n)

    def distance_to_component(self, x, component):
        if component != 'base':
            super().distance_to_component(x, component)
        return float(x.r)

    def component_distance(self, first, second):
        return 0.0


class AcChartPiece(QuotientPiece):
    """Asymptotically conic end; r = 0 is at infinity and is not part of the space"""

    def __init__(self, name, spec, options=None):
        super().__init__(name, spec, options)
        self.exact = spec.family.is_constant

    def check_point(self, point):
        if point.r == 0:
            raise SingularEvaluationError(f"r = 0 is the boundary at infinity of {self.name!r}")
        self.spec.check_radius(point.r)

    def distance(self, x, x2):
        return ac_distance(self.spec, x, x2, self.options).value

    def distances_to(self, x, points):
        if not self.exact:
            return np.array([self.distance(x, p) for p in points])
        radii = np.array([p.r for p in points], dtype=float)
        d_n = np.ravel(self.boundary.distances_from(x.y, [p.y for p in points]))
        r_cut = 0.0 if math.isinf(self.height) else 1.0 / self.height
        return truncated_cone_distance_array(self.spec.family.g_scale, r_cut, 1.0 / x.r, 1.0 / radii, d_n)


class SuspensionPiece(QuotientPiece):
    """Spherical suspension with collapsible components 'bottom' and 'top'"""

    components = SuspensionSpec.components

    def distance(self, x, x2):
        return float(self.distances_to(x, [x2])[0])

    def distances_to(self, x, points):
        radii = np.array([p.r for p in points], dtype=float)
        if x.r == 0 or x.r == self.height:
            d_n = np.zeros(len(points))
        else:
            d_n = np.ravel(self.boundary.distances_from(x.y, [p.y for p in points]))
            d_n = np.where((radii == 0) | (radii == self.height), 0.0, d_n)
        return suspension_distance_array(self.spec.rho, x.r, radii, d_n)

    def distance_to_component(self, x, component):
        if component == 'bottom':
            return float(x.r)
        if component == 'top':
            return float(self.height - x.r)
        return super().distance_to_component(x, component)

    def component_distance(self, first, second):
        return 0.0 if first == second else self.height

    def length_model(self):
        raise UnsupportedFamilyError("Suspension pieces carry closed-form distances only")


def make_piece(name, spec, options=None):
    """Piece wrapper matching the metric kind"""
    if isinstance(spec, SuspensionSpec):
        return SuspensionPiece(name, spec, options)
    if isinstance(spec, AcMetricSpec):
        return AcChartPiece(name, spec, options)
    if isinstance(spec, ConicMetricSpec):
        return ChartPiece(name, spec, options)
    raise InvalidInputError(f"Cannot build a quotient piece from {spec!r}")


@dataclass(frozen=True)
class BoundaryCollapse:
    """
    Boundary collapsing map: (piece, component) -> apex label

    Attributes:
        assignments (tuple): (piece, component, label) triples
    """
    assignments: tuple

    @property
    def apexes(self):
        return tuple(sorted({label for _, _, label in self.assignments}))

    def label_of(self, piece, component):
        for name, comp, label in self.assignments:
            if name == piece and comp == component:
                return label
        return None


@dataclass(frozen=True)
class Seam:
    """Identification of {r = level_a} in piece_a with {r = level_b} in piece_b, pointwise in y"""
    piece_a: str
    level_a: float
    piece_b: str
    level_b: float


class QuotientSpace:
    """
    Pieces glued by a boundary collapse and optional seams

    Distances minimize over chains through a finite node set (apexes and seam
    samples); node-to-node distances come from Floyd-Warshall on the node graph.
    """

    def __init__(self, pieces, collapse, seams=(), seam_samples=None, name='quotient'):
        self.name = name
        self.pieces = {}
        for piece in pieces:
            if piece.name in self.pieces:
                raise InvalidInputError(f"Duplicate piece name '{piece.name}'")
            self.pieces[piece.name] = piece
        self.collapse = collapse
        self.seams = tuple(seams)
        self.seam_samples = Config.tolerance('seam_samples') if seam_samples is None else int(seam_samples)
        self._validate()
        self.apexes = collapse.apexes
        self._build_nodes()
        logger.info(f"Quotient '{name}': {len(self.pieces)} pieces, apexes {list(self.apexes)}, "
                    f"{len(self.seams)} seams, {self.n_nodes} nodes")

    def __repr__(self):
        return f"QuotientSpace({self.name!r}, pieces={list(self.pieces)}, apexes={list(self.apexes)})"

    def _validate(self):
        mapped = set()
        for piece, component, label in self.collapse.assignments:
            if piece not in self.pieces:
                raise InvalidInputError(f"Collapse references unknown piece '{piece}'")
            if component not in self.pieces[piece].components:
                raise InvalidInputError(f"Piece '{piece}' has no boundary component '{component}'")
            if (piece, component) in mapped:
                raise InvalidInputError(f"Boundary component '{component}' of '{piece}' is collapsed twice")
            mapped.add((piece, component))
        for name, piece in self.pieces.items():
            for component in piece.components:
                if (name, component) not in mapped:
                    raise InvalidInputError(f"Boundary component '{component}' of '{name}' is not collapsed")
        for seam in self.seams:
            for name, level in ((seam.piece_a, seam.level_a), (seam.piece_b, seam.level_b)):
                if name not in self.pieces:
                    raise InvalidInputError(f"Seam references unknown piece '{name}'")
                piece = self.pieces[name]
                if not piece.exact or isinstance(piece, SuspensionPiece):
                    raise UnsupportedFamilyError(f"Seams need closed-form chart pieces, '{name}' is {piece!r}")
                if not 0 < level <= piece.height:
                    raise InvalidInputError(f"Seam level {level} is outside piece '{name}'")
            if self.pieces[seam.piece_a].boundary.to_config() != self.pieces[seam.piece_b].boundary.to_config():
                raise InvalidInputError(f"Seam joins pieces over different boundaries: {seam}")

    def _build_nodes(self):
        """Node list, per-piece node points and the all-pairs node distance matrix"""
        self.node_labels = list(self.apexes)
        self.touching = {name: [] for name in self.pieces}
        for piece, component, label in self.collapse.assignments:
            self.touching[piece].append((self.apexes.index(label), ('apex', component)))
        for seam in self.seams:
            boundary = self.pieces[seam.piece_a].boundary
            samples = boundary.sample_graph(self.seam_samples).points
            for y in samples:
                index = len(self.node_labels)
                self.node_labels.append(f"seam:{seam.piece_a}@{seam.level_a}|{seam.piece_b}@{seam.level_b}")
                self.touching[seam.piece_a].append((index, ('point', ChartPoint(y, float(seam.level_a)))))
                self.touching[seam.piece_b].append((index, ('point', ChartPoint(y, float(seam.level_b)))))
        self.n_nodes = len(self.node_labels)
        weights = np.full((self.n_nodes, self.n_nodes), np.inf)
        for name, entries in self.touching.items():
            piece = self.pieces[name]
            apex_entries = [(i, kind[1]) for i, kind in entries if kind[0] == 'apex']
            point_entries = [(i, kind[1]) for i, kind in entries if kind[0] == 'point']
            for (i, first), (j, second) in itertools.product(apex_entries, repeat=2):
                weights[i, j] = min(weights[i, j], piece.component_distance(first, second))
            if point_entries:
                indices = np.array([i for i, _ in point_entries])
                points = [p for _, p in point_entries]
                for i, component in apex_entries:
                    to_apex = np.array([piece.distance_to_component(p, component) for p in points])
                    weights[i, indices] = np.minimum(weights[i, indices], to_apex)
                    weights[indices, i] = np.minimum(weights[indices, i], to_apex)
                block = piece.distance_matrix(points)
                current = weights[np.ix_(indices, indices)]
                weights[np.ix_(indices, indices)] = np.minimum(current, block)
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n_nodes))
        rows, cols = np.nonzero(np.isfinite(weights))
        graph.add_weighted_edges_from((int(i), int(j), float(weights[i, j])) for i, j in zip(rows, cols) if i < j)
        self.edge_weights = weights
        self.node_distances = nx.floyd_warshall_numpy(graph, nodelist=range(self.n_nodes), weight='weight')

    def check_point(self, x):
        if isinstance(x, str):
            if x not in self.apexes:
                raise InvalidInputError(f"Unknown apex label '{x}'")
            return
        if not isinstance(x, QuotientPoint) or x.piece not in self.pieces:
            raise InvalidInputError(f"{x!r} is not a point of {self!r}")
        self.pieces[x.piece].check_point(x.point)

    def entry_distances(self, x):
        """Distance from x to each node without leaving x's piece"""
        entries = np.full(self.n_nodes, np.inf)
        if isinstance(x, str):
            entries[self.apexes.index(x)] = 0.0
            return entries
        piece = self.pieces[x.piece]
        apex_entries = [(i, kind[1]) for i, kind in self.touching[x.piece] if kind[0] == 'apex']
        point_entries = [(i, kind[1]) for i, kind in self.touching[x.piece] if kind[0] == 'point']
        for i, component in apex_entries:
            entries[i] = min(entries[i], piece.distance_to_component(x.point, component))
        if point_entries:
            indices = np.array([i for i, _ in point_entries])
            entries[indices] = np.minimum(entries[indices], piece.distances_to(x.point, [p for _, p in point_entries]))
        return entries

    def direct_distance(self, x, x2):
        if isinstance(x, str) or isinstance(x2, str):
            return 0.0 if x == x2 else math.inf
        if x.piece != x2.piece:
            return math.inf
        return self.pieces[x.piece].distance(x.point, x2.point)


def _quotient_key(x):
    if isinstance(x, str):
        return (0, x, 0.0, ())
    y = x.point.y
    coordinates = tuple(np.atleast_1d(np.asarray(y, dtype=float)).tolist()) if not hasattr(y, 'u') else (y.u, y.t)
    return (1, x.piece, x.point.r, coordinates)


def quotient_distance(quotient, x, x2):
    """
    Chain distance d^sigma between two points of a quotient space

    Args:
        quotient (QuotientSpace): The space
        x: QuotientPoint or apex label
        x2: QuotientPoint or apex label

    Returns:
        float: min(direct distance, min over entry/exit nodes a, b of e_x[a] + D[a, b] + e_x'[b])
    """
    quotient.check_point(x)
    quotient.check_point(x2)
    if _quotient_key(x2) < _quotient_key(x):
        x, x2 = x2, x
    direct = quotient.direct_distance(x, x2)
    first = quotient.entry_distances(x)
    second = quotient.entry_distances(x2)
    through = float(np.min(first[:, None] + quotient.node_distances + second[None, :]))
    return float(min(direct, through))


def quotient_distance_batch(quotient, pairs, threads=None):
    """Chain distances for a list of point pairs, in input order"""
    threads = Config.THREADS if threads is None else threads
    return Parallel(n_jobs=threads, prefer='threads')(delayed(quotient_distance)(quotient, x, x2) for x, x2 in pairs)


def chain_enumeration_distance(quotient, x, x2):
    """
    Brute-force chain distance: every chain of distinct apexes is tried

    Only quotients without seams are supported; the node set is then the apex set.
    """
    if quotient.seams:
        raise UnsupportedFamilyError("Chain enumeration covers apex-only quotients")
    quotient.check_point(x)
    quotient.check_point(x2)
    best = quotient.direct_distance(x, x2)
    first = quotient.entry_distances(x)
    second = quotient.entry_distances(x2)
    weights = quotient.edge_weights
    labels = range(len(quotient.apexes))
    for length in range(1, len(quotient.apexes) + 1):
        for chain in itertools.permutations(labels, length):
            total = first[chain[0]]
            for a, b in zip(chain[:-1], chain[1:]):
                total += weights[a, b]
            total += second[chain[-1]]
            best = min(best, total)
    return float(best)


def conic_inversion(x):
    """(y, r) -> (y, 1/r)"""
    if x.r == 0:
        raise SingularEvaluationError("Conic inversion is undefined at r = 0")
    return ChartPoint(x.y, 1.0 / x.r)


@dataclass
class DualityReport:
    """Empirical bracket of a duality ratio over sampled pairs"""
    name: str
    rows: list = field(default_factory=list)
    skipped: int = 0

    @property
    def ratios(self):
        return np.array([row['ratio'] for row in self.rows], dtype=float)

    @property
    def minimum(self):
        return float(self.ratios.min()) if self.rows else math.nan

    @property
    def maximum(self):
        return float(self.ratios.max()) if self.rows else math.nan

    def bracket(self, category=None):
        ratios = [row['ratio'] for row in self.rows if category is None or row.get('category') == category]
        if not ratios:
            return (math.nan, math.nan)
        return (float(min(ratios)), float(max(ratios)))

    def witness(self, which='max'):
        if not self.rows:
            return None
        pick = max if which == 'max' else min
        return pick(self.rows, key=lambda row: row['ratio'])

    def check_bounded(self):
        """Raise InvariantViolation unless every ratio is positive and finite"""
        if not self.rows:
            raise InvariantViolation(f"{self.name}: no admissible sample pairs")
        for row in self.rows:
            if not (row['ratio'] > 0 and math.isfinite(row['ratio'])):
                raise InvariantViolation(f"{self.name}: ratio {row['ratio']} is not positive and finite", pair=row)
        return self.bracket()

    def check_within(self, lower, upper, slack=0.0):
        """Raise InvariantViolation if the bracket leaves [lower (1 - slack), upper (1 + slack)]"""
        low, high = self.check_bounded()
        if low < lower * (1.0 - slack):
            raise InvariantViolation(f"{self.name}: ratio {low:.6g} below frozen bound {lower}", pair=self.witness('min'))
        if high > upper * (1.0 + slack):
            raise InvariantViolation(f"{self.name}: ratio {high:.6g} above frozen bound {upper}", pair=self.witness('max'))
        return low, high

    def to_dict(self):
        categories = sorted({row['category'] for row in self.rows if 'category' in row})
        return {
            'name': self.name,
            'count': len(self.rows),
            'skipped': self.skipped,
            'bracket': list(self.bracket()),
            'by_category': {c: list(self.bracket(c)) for c in categories},
        }


def inversion_duality_check(boundary, family, pairs, simplified=False, options=None, threads=None):
    """
    Bracket of r r' d_inf(x, x') / d_0(x, x') on the full cone P0 = N x (0, inf)

    Args:
        boundary (BoundaryGeometry): N
        family (MetricFamily): Radial family of g0
        pairs (list): (x, x') ChartPoint pairs with r, r' > 0
        simplified (bool): Use |r - r'| + min(r, r') d_N and the e-function in place of the distances
        options (DistanceOptions): Options for numerical families
        threads (int): joblib worker threads

    Returns:
        DualityReport: Rows with y, r, y', r', d0, dinf, ratio
    """
    base = ConicMetricSpec(boundary, math.inf, family)
    ac = AcMetricSpec(base)
    report = DualityReport('inversion-duality' + ('-simplified' if simplified else ''))
    admissible = []
    for x, x2 in pairs:
        if x.r <= 0 or x2.r <= 0:
            raise SingularEvaluationError("Inversion duality needs r, r' > 0")
        if x.r == x2.r and boundary.distance(x.y, x2.y) == 0:
            report.skipped += 1
            continue
        admissible.append((x, x2))

    def evaluate(x, x2):
        d_n = boundary.distance(x.y, x2.y)
        if simplified:
            return abs(x.r - x2.r) + min(x.r, x2.r) * d_n, ac_e_function(x, x2, d_n)
        return conic_distance(base, x, x2, options).value, ac_distance(ac, x, x2, options).value

    threads = Config.THREADS if threads is None else threads
    values = Parallel(n_jobs=threads, prefer='threads')(delayed(evaluate)(x, x2) for x, x2 in admissible)
    for (x, x2), (d_zero, d_inf) in zip(admissible, values):
        report.rows.append({'y': x.y, 'r': x.r, "y'": x2.y, "r'": x2.r, 'd0': d_zero, 'dinf': d_inf,
                            'ratio': x.r * x2.r * d_inf / d_zero})
    logger.info(f"{report.name}: bracket {report.bracket()} over {len(report.rows)} pairs")
    return report


class CompletionSpec:
    """
    Conic completion of a quotient with asymptotically conic ends

    Each ac end is re-read as its base conic chart with its r = 0 boundary
    collapsed to a point at infinity; seams and remaining pieces are kept.
    """

    def __init__(self, interior, completed, infinity_labels, end_pieces):
        self.interior = interior
        self.completed = completed
        self.infinity_labels = tuple(infinity_labels)
        self.end_pieces = tuple(end_pieces)

    def __repr__(self):
        return f"CompletionSpec({self.interior.name!r}, infinity={list(self.infinity_labels)})"

    def distance_E(self, x, x2):
        return quotient_distance(self.interior, x, x2)

    def distance_bar(self, x, x2):
        return quotient_distance(self.completed, x, x2)

    def distance_to_infinity(self, x):
        """d_bar(x, infinity_E), the radius used by the completion duality"""
        return min(quotient_distance(self.completed, x, label) for label in self.infinity_labels)

    def gluing_residual(self, rng, samples=64):
        """Largest gap of r^-4 g0 against the inversion pullback over sampled end points"""
        worst = 0.0
        for name in self.end_pieces:
            base = self.interior.pieces[name].spec.base
            upper = base.height if math.isfinite(base.height) else 4.0
            radii = rng.uniform(0.05, 1.0, samples) * upper
            ys = base.boundary.random_points(rng, samples)
            points = [ChartPoint(y, float(r)) for y, r in zip(ys, radii)]
            tangents = [Tangent(rng.normal(size=base.boundary.dim), float(rng.normal())) for _ in range(samples)]
            worst = max(worst, conformal_gluing_residual(base, points, tangents))
        return worst

    def check_properties(self, rng, samples=32, near=0.25, annulus=(0.5, None)):
        """
        Sanity checks of a completion

        Returns:
            dict: embedding (bool), near_singular_gap (max relative |d - d_bar| near the finite apexes),
                compact_bracket (d_bar / d over points with r in the annulus)
        """
        points = sample_quotient_points(self.interior, rng, samples, r_low=0.05)
        embedding = all(0 < self.distance_to_infinity(p) < math.inf for p in points)
        embedding = embedding and all(self.distance_bar(p, q) > 0
                                      for p, q in zip(points[:-1], points[1:]) if _quotient_key(p) != _quotient_key(q))
        core = [name for name in self.interior.pieces if name not in self.end_pieces]
        near_points = [p for p in sample_quotient_points(self.interior, rng, samples, r_low=0.01, r_high=near)
                       if p.piece in core]
        gaps = [abs(self.distance_E(p, q) - self.distance_bar(p, q)) / max(self.distance_E(p, q), 1e-300)
                for p, q in zip(near_points[:-1], near_points[1:])]
        ring = sample_quotient_points(self.interior, rng, samples, r_low=annulus[0], r_high=annulus[1])
        ratios = [self.distance_bar(p, q) / self.distance_E(p, q) for p, q in zip(ring[:-1], ring[1:])
                  if self.distance_E(p, q) > 0]
        result = {
            'embedding': bool(embedding),
            'near_singular_gap': float(max(gaps)) if gaps else 0.0,
            'compact_bracket': [float(min(ratios)), float(max(ratios))] if ratios else [math.nan, math.nan],
        }
        logger.info(f"Completion properties of {self.interior.name!r}: {result}")
        return result


def build_completion(interior, labels=None):
    """
    Conic completion of a quotient whose unbounded ends are ac charts

    Args:
        interior (QuotientSpace): E
        labels (dict): Optional apex label per ac piece, 'inf' or 'inf:<piece>' by default

    Returns:
        CompletionSpec: The completion
    """
    ends = [name for name, piece in interior.pieces.items() if isinstance(piece, AcChartPiece)]
    if not ends:
        raise InvalidInputError(f"{interior!r} has no asymptotically conic end to complete")
    for name, piece in interior.pieces.items():
        if isinstance(piece, ChartPiece) and math.isinf(piece.height):
            raise InvalidInputError(f"Unbounded piece '{name}' has no ac structure")
    labels = dict(labels or {})
    for name in ends:
        labels.setdefault(name, 'inf' if len(ends) == 1 else f"inf:{name}")
    pieces = []
    for name, piece in interior.pieces.items():
        if name in labels:
            pieces.append(ChartPiece(name, piece.spec.base, piece.options))
        else:
            pieces.append(piece)
    assignments = tuple(interior.collapse.assignments) + tuple((name, 'base', labels[name]) for name in ends)
    completed = QuotientSpace(pieces, BoundaryCollapse(assignments), interior.seams, interior.seam_samples,
                              name=f"{interior.name}-completion")
    return CompletionSpec(interior, completed, sorted(set(labels[name] for name in ends)), ends)


def sample_quotient_points(quotient, rng, n, r_low=0.05, r_high=None, pieces=None):
    """n points spread over the pieces of a quotient with r in [r_low, r_high] of each piece"""
    names = list(pieces or quotient.pieces)
    points = []
    for k in range(n):
        piece = quotient.pieces[names[k % len(names)]]
        top = piece.height if math.isfinite(piece.height) else 4.0
        high = top if r_high is None else min(r_high, top)
        low = min(r_low, high)
        y = piece.boundary.random_points(rng, 1)[0]
        points.append(QuotientPoint(piece.name, ChartPoint(y, float(rng.uniform(low, high)))))
    return points


def completion_duality_check(completion, pairs):
    """
    Bracket of r r' d(x, x') / d_bar(x, x') with r = d_bar(x, infinity_E)

    Args:
        completion (CompletionSpec): The completion
        pairs (list): (x, x') QuotientPoint pairs of E

    Returns:
        DualityReport: Rows tagged 'core', 'end' or 'mixed'
    """
    report = DualityReport('completion-duality')
    ends = set(completion.end_pieces)
    for x, x2 in pairs:
        d = completion.distance_E(x, x2)
        d_bar = completion.distance_bar(x, x2)
        if d_bar == 0:
            report.skipped += 1
            continue
        radius = completion.distance_to_infinity(x)
        radius2 = completion.distance_to_infinity(x2)
        in_end = (x.piece in ends, x2.piece in ends)
        category = 'end' if all(in_end) else ('core' if not any(in_end) else 'mixed')
        report.rows.append({'piece': x.piece, 'y': x.point.y, 'r': x.point.r, "piece'": x2.piece,
                            "y'": x2.point.y, "r'": x2.point.r, 'd': d, 'dbar': d_bar,
                            'rho': radius, "rho'": radius2, 'ratio': radius * radius2 * d / d_bar,
                            'category': category})
    logger.info(f"Completion duality bracket {report.bracket()} by category "
                f"{ {c: report.bracket(c) for c in ('core', 'end', 'mixed')} }")
    return report


def completion_sample_pairs(completion, rng, per_category=32, r_low=0.05):
    """Pairs inside the compact core, inside the ends and mixed, in that order"""
    core = [name for name in completion.interior.pieces if name not in completion.end_pieces]
    ends = list(completion.end_pieces)
    space = completion.interior

    def draw(names):
        return sample_quotient_points(space, rng, per_category, r_low=r_low, pieces=names)

    core_a, core_b = draw(core), draw(core)
    end_a, end_b = draw(ends), draw(ends)
    mixed_a, mixed_b = draw(core), draw(ends)
    return list(zip(core_a, core_b)) + list(zip(end_a, end_b)) + list(zip(mixed_a, mixed_b))


def plane_space(seam_samples=None):
    """
    Euclidean plane as a quotient: the unit disk in blow-up coordinates at the origin
    glued along r = 1 to the chart at infinity of the exterior
    """
    circle = Circle(2.0 * math.pi)
    core = ChartPiece('core', ConicMetricSpec(circle, 1.0, Constant()))
    end = AcChartPiece('end', AcMetricSpec(ConicMetricSpec(circle, 1.0, Constant())))
    collapse = BoundaryCollapse((('core', 'base', 'o'),))
    return QuotientSpace([core, end], collapse, [Seam('core', 1.0, 'end', 1.0)], seam_samples, name='plane')


def completed_plane(seam_samples=None):
    """Completion of the plane: two flat disks glued along their boundary circle"""
    return build_completion(plane_space(seam_samples))


def quotient_from_config(declaration, metrics, name='quotient', options=None):
    """
    Build a quotient from its scenario declaration

    Schema: {"pieces": [{"name": ..., "metric": ...}], "collapse": [[piece, component, label], ...],
    "seams": [{"a": piece, "level_a": r, "b": piece, "level_b": r}], "seam_samples": n}
    """
    pieces = []
    for entry in declaration.get('pieces', []):
        metric = entry.get('metric')
        if metric not in metrics:
            raise InvalidInputError(f"Quotient piece '{entry.get('name')}' references undeclared metric '{metric}'")
        pieces.append(make_piece(entry['name'], metrics[metric], options))
    collapse = BoundaryCollapse(tuple(tuple(item) for item in declaration.get('collapse', [])))
    seams = [Seam(s['a'], float(s['level_a']), s['b'], float(s['level_b'])) for s in declaration.get('seams', [])]
    return QuotientSpace(pieces, collapse, seams, declaration.get('seam_samples'), name=name)
