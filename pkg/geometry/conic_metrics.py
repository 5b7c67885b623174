"""
Conic metrics module
Model conic, warped, tabulated and asymptotically conic metrics on cylinder
charts N x [0, eta), their norms, curve lengths and resolution maps
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from geometry.boundary_manifold import Circle, RoundSphere
from utils.config import Config
from utils.exceptions import DomainError, InvalidInputError, SingularEvaluationError, UnsupportedFamilyError

logger = logging.getLogger(__name__)

# Upper bound on integrand evaluations held in memory at once
_CHUNK_EVALUATIONS = 1 << 21


@dataclass(frozen=True, eq=False)
class ChartPoint:
    """Point (y, r) of a cylinder chart"""
    y: object
    r: float

    def __repr__(self):
        y = self.y.tolist() if isinstance(self.y, np.ndarray) else self.y
        return f"ChartPoint(y={y!r}, r={self.r!r})"


@dataclass(frozen=True, eq=False)
class Tangent:
    """Tangent (xi, lam): xi in orthonormal frame coordinates of g_N, lam radial"""
    xi: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, 'xi', np.atleast_1d(np.asarray(self.xi, dtype=float)))


@dataclass(frozen=True, eq=False)
class CurvePolyline:
    """
    Piecewise-linear chart curve

    Consecutive vertices are joined by chart-straight segments: r moves linearly
    while y follows a minimizing boundary geodesic.
    """
    points: list
    params: np.ndarray = None

    def __post_init__(self):
        if len(self.points) < 2:
            raise InvalidInputError(f"A polyline needs at least 2 points, got {len(self.points)}")
        params = np.arange(len(self.points), dtype=float) if self.params is None else np.asarray(self.params, dtype=float)
        if len(params) != len(self.points) or np.any(np.diff(params) <= 0):
            raise InvalidInputError("Polyline parameters must be strictly increasing, one per point")
        object.__setattr__(self, 'params', params)

    @property
    def radii(self):
        return np.array([p.r for p in self.points], dtype=float)

    def reversed(self):
        return CurvePolyline(self.points[::-1])


class MetricFamily(ABC):
    """Radial family r -> g_d(r) = scale(r) * g_N"""

    name = None
    is_constant = False

    @abstractmethod
    def scale(self, r):
        """Vectorised boundary metric scale factor at radius r"""

    @abstractmethod
    def to_config(self):
        """Serializable declaration of this family"""

    def scale_at_zero(self):
        return float(np.asarray(self.scale(np.array([0.0])))[0])

    def positivity_profile(self, r):
        """Quantity that must stay positive on the chart"""
        return self.scale(r)

    def first_degeneracy(self):
        """Smallest radius where the metric degenerates, when known in closed form"""
        return None

    def validate(self, height):
        limit = self.first_degeneracy()
        if limit is not None and limit < height:
            raise InvalidInputError(f"{self!r} degenerates at r={limit:.6g}, inside [0, {height})")
        if math.isfinite(height):
            radii = np.linspace(0.0, height, 1025)[:-1]
        else:
            # linear near the apex, log-spaced far out
            radii = np.concatenate([np.linspace(0.0, 1.0, 513), np.geomspace(1.0, 1e12, 1025)[1:]])
        with np.errstate(over='ignore', under='ignore'):
            values = np.asarray(self.positivity_profile(radii), dtype=float)
        if not np.all(values > 0):
            bad = radii[~(values > 0)]
            raise InvalidInputError(f"{self!r} is not positive on [0, {height}) (first failure at r={bad[0] if len(bad) else 'nan'})")


class Constant(MetricFamily):
    """Simple conic family g_d(r) = c * g_N"""

    name = 'constant'
    is_constant = True

    def __init__(self, g_scale=1.0):
        if not g_scale > 0 or not math.isfinite(g_scale):
            raise InvalidInputError(f"Constant family scale must be positive, got {g_scale}")
        self.g_scale = float(g_scale)

    def __repr__(self):
        return f"Constant({self.g_scale!r})"

    def scale(self, r):
        return np.full(np.shape(r), self.g_scale)

    def to_config(self):
        return {'family': 'constant', 'scale': self.g_scale}


class Warped(MetricFamily):
    """
    Warped family dr^2 + (r f(r))^2 g_N, so scale(r) = f(r)^2 * g_scale

    Profiles:
        affine:      f(r) = 1 + a r
        exponential: f(r) = exp(a r)
        quadratic:   f(r) = 1 + a r^2
    """

    name = 'warped'
    PROFILES = {
        'affine': lambda r, a: 1.0 + a * r,
        'exponential': lambda r, a: np.exp(a * r),
        'quadratic': lambda r, a: 1.0 + a * r ** 2,
    }

    def __init__(self, profile='affine', coefficient=1.0, g_scale=1.0):
        if profile not in self.PROFILES:
            raise InvalidInputError(f"Unknown warping profile '{profile}', expected one of {sorted(self.PROFILES)}")
        if not g_scale > 0:
            raise InvalidInputError(f"Warped family scale must be positive, got {g_scale}")
        self.profile = profile
        self.coefficient = float(coefficient)
        self.g_scale = float(g_scale)

    def __repr__(self):
        return f"Warped({self.profile!r}, {self.coefficient!r}, {self.g_scale!r})"

    def warp(self, r):
        return self.PROFILES[self.profile](np.asarray(r, dtype=float), self.coefficient)

    def scale(self, r):
        return self.warp(r) ** 2 * self.g_scale

    def positivity_profile(self, r):
        # the warp itself, since its square hides sign changes
        if self.profile == 'exponential':
            return np.ones(np.shape(r))
        return self.warp(r)

    def first_degeneracy(self):
        a = self.coefficient
        if a >= 0 or self.profile == 'exponential':
            return None
        return -1.0 / a if self.profile == 'affine' else 1.0 / math.sqrt(-a)

    def to_config(self):
        return {'family': 'warped', 'profile': self.profile, 'coefficient': self.coefficient, 'scale': self.g_scale}


class Tabulated(MetricFamily):
    """Scale factors sampled at radii from 0, joined by monotone cubic interpolation"""

    name = 'tabulated'

    def __init__(self, radii, scales):
        radii = tuple(float(r) for r in radii)
        scales = tuple(float(s) for s in scales)
        if len(radii) < 2 or len(radii) != len(scales):
            raise InvalidInputError("Tabulated family needs at least two (radius, scale) samples")
        if radii[0] != 0.0 or any(b <= a for a, b in zip(radii[:-1], radii[1:])):
            raise InvalidInputError(f"Tabulated radii must start at 0 and increase strictly: {radii}")
        if any(not s > 0 for s in scales):
            raise InvalidInputError(f"Tabulated scale factors must be positive: {scales}")
        self.radii = radii
        self.scales = scales
        self._interpolator = PchipInterpolator(np.array(radii), np.array(scales), extrapolate=False)

    def __repr__(self):
        return f"Tabulated({list(self.radii)}, {list(self.scales)})"

    def scale(self, r):
        clipped = np.clip(np.asarray(r, dtype=float), 0.0, self.radii[-1])
        return self._interpolator(clipped)

    def to_config(self):
        return {'family': 'tabulated', 'radii': list(self.radii), 'scales': list(self.scales)}


class InvertedFamily(MetricFamily):
    """Family read through the inversion R = 1/r: scale(R) = base.scale(1/R), R > 0"""

    name = 'inverted'

    def __init__(self, base):
        self.base = base

    def __repr__(self):
        return f"InvertedFamily({self.base!r})"

    def scale(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise SingularEvaluationError("Inverted family is evaluated at R = 0, the image of infinity")
        return self.base.scale(1.0 / r)

    def to_config(self):
        return {'family': 'inverted', 'base': self.base.to_config()}


def inverted_family(family):
    """Family of the conic chart obtained through the inversion (y, r) -> (y, 1/r)"""
    if family.is_constant:
        return family
    return InvertedFamily(family)


def family_from_config(declaration):
    """Build a metric family from its scenario declaration"""
    declaration = declaration or {'family': 'constant'}
    name = declaration.get('family', 'constant')
    if name == 'constant':
        return Constant(declaration.get('scale', 1.0))
    if name == 'warped':
        return Warped(declaration.get('profile', 'affine'), declaration.get('coefficient', 1.0),
                      declaration.get('scale', 1.0))
    if name == 'tabulated':
        return Tabulated(declaration['radii'], declaration['scales'])
    raise InvalidInputError(f"Unknown metric family '{name}'")


@dataclass(frozen=True, eq=False)
class ConicMetricSpec:
    """Model conic metric dr^2 + r^2 g_d(r) on Cyl(N, height)"""
    boundary: object
    height: float = math.inf
    family: MetricFamily = field(default_factory=Constant)

    kind = 'conic'

    def __post_init__(self):
        height = float(self.height)
        if not height > 0:
            raise InvalidInputError(f"Chart height must be positive, got {self.height}")
        object.__setattr__(self, 'height', height)
        self.family.validate(height)

    def __repr__(self):
        return f"ConicMetricSpec({self.boundary!r}, height={self.height!r}, family={self.family!r})"

    def scale(self, r):
        return self.family.scale(r)

    def check_radius(self, r, what='point'):
        if not (0.0 <= r <= self.height) or math.isnan(r):
            raise DomainError(f"{what} radius {r} is outside the conic chart [0, {self.height}]")

    def to_config(self):
        return {'kind': 'conic', 'height': _height_to_config(self.height), 'family': self.family.to_config()}


@dataclass(frozen=True, eq=False)
class AcMetricSpec:
    """Asymptotically conic metric g_inf = r^-4 g0 over a model conic base g0"""
    base: ConicMetricSpec

    kind = 'ac'

    def __repr__(self):
        return f"AcMetricSpec({self.base!r})"

    @property
    def boundary(self):
        return self.base.boundary

    @property
    def height(self):
        return self.base.height

    @property
    def family(self):
        return self.base.family

    def scale(self, r):
        return self.base.scale(r)

    def check_radius(self, r, what='point'):
        if not (0.0 < r <= self.height) or math.isnan(r):
            raise DomainError(f"{what} radius {r} is outside the asymptotically conic chart (0, {self.height}]")

    def to_config(self):
        config = self.base.to_config()
        config['kind'] = 'ac'
        return config


@dataclass(frozen=True, eq=False)
class SuspensionSpec:
    """
    Spherical suspension N x [0, pi rho] with metric dr^2 + rho^2 sin^2(r/rho) g_N

    A compact manifold with conic metric and two boundary components,
    'bottom' at r = 0 and 'top' at r = pi rho.
    """
    boundary: object
    rho: float = 1.0

    kind = 'suspension'
    components = ('bottom', 'top')

    def __post_init__(self):
        if not self.rho > 0 or not math.isfinite(self.rho):
            raise InvalidInputError(f"Suspension radius must be positive, got {self.rho}")

    @property
    def height(self):
        return math.pi * self.rho

    def warp_sq(self, r):
        return (self.rho * np.sin(np.asarray(r, dtype=float) / self.rho)) ** 2

    def check_radius(self, r, what='point'):
        if not (0.0 <= r <= self.height) or math.isnan(r):
            raise DomainError(f"{what} radius {r} is outside the suspension [0, {self.height}]")

    def to_config(self):
        return {'kind': 'suspension', 'rho': self.rho}


def _height_to_config(height):
    return 'inf' if math.isinf(height) else height


def _height_from_config(value):
    if value is None or value == 'inf':
        return math.inf
    return float(value)


def metric_from_config(declaration, boundaries):
    """
    Build a metric spec from its scenario declaration

    Args:
        declaration (dict): {"boundary": name, "kind": "conic"|"ac"|"suspension",
            "height": number|"inf", "family": {...}, "rho": number}
        boundaries (dict): Declared boundary geometries by name

    Returns:
        ConicMetricSpec | AcMetricSpec | SuspensionSpec: The declared metric
    """
    name = declaration.get('boundary')
    if name not in boundaries:
        raise InvalidInputError(f"Metric references undeclared boundary '{name}'")
    boundary = boundaries[name]
    kind = declaration.get('kind', 'conic')
    if kind == 'suspension':
        return SuspensionSpec(boundary, float(declaration.get('rho', 1.0)))
    base = ConicMetricSpec(boundary, _height_from_config(declaration.get('height')),
                           family_from_config(declaration.get('family')))
    if kind == 'conic':
        return base
    if kind == 'ac':
        return AcMetricSpec(base)
    raise InvalidInputError(f"Unknown metric kind '{kind}'")


def _check_tangent(spec, v):
    if v.xi.size != spec.boundary.dim:
        raise InvalidInputError(f"Tangent has {v.xi.size} boundary components, {spec.boundary!r} has dimension {spec.boundary.dim}")


def metric_norm_sq(spec, p, v):
    """
    Squared norm of a tangent vector

    Args:
        spec (ConicMetricSpec | AcMetricSpec | SuspensionSpec): The metric
        p (ChartPoint): Base point
        v (Tangent): Tangent at p

    Returns:
        float: lam^2 + r^2 |xi|^2_{g_d(r)}, divided by r^4 for ac metrics
    """
    _check_tangent(spec, v)
    xi_sq = float(np.dot(v.xi, v.xi))
    if isinstance(spec, AcMetricSpec):
        if p.r == 0:
            raise SingularEvaluationError("Asymptotically conic metric is singular at r = 0")
        spec.check_radius(p.r)
        return (v.lam ** 2 + p.r ** 2 * float(spec.scale(p.r)) * xi_sq) / p.r ** 4
    spec.check_radius(p.r)
    if isinstance(spec, SuspensionSpec):
        return v.lam ** 2 + float(spec.warp_sq(p.r)) * xi_sq
    return v.lam ** 2 + p.r ** 2 * float(spec.scale(p.r)) * xi_sq


class LengthModel(ABC):
    """
    Length structure of a chart used by quadrature, graphs and refinement

    Segment lengths are integrals over t in [0, 1] of the metric norm of the
    chart-straight segment velocity (dr, displacement).
    """

    kind = None
    apex_allowed = True

    def __init__(self, spec):
        self.spec = spec
        self.boundary = spec.boundary

    @property
    def height(self):
        return self.spec.height

    @property
    def is_constant(self):
        return False

    @abstractmethod
    def integrand(self, r, dr, disp):
        """Metric speed of the segment at radius r"""

    def check_radius(self, r, what='point'):
        self.spec.check_radius(r, what)

    def lower_bound(self):
        """Smallest admissible radius for refinement bounds"""
        return 0.0

    def displacement(self, ya, yb):
        """Boundary displacement between point sequences (boundary distance)"""
        boundary = self.boundary
        if boundary.supports_frames:
            return boundary.distance_array(boundary.to_array(ya), boundary.to_array(yb))
        return np.array([boundary.distance(a, b) for a, b in zip(ya, yb)], dtype=float)

    def displacement_array(self, ya, yb):
        """Boundary displacement between coordinate arrays"""
        return self.boundary.distance_array(ya, yb)

    def pair_displacement(self, sampling):
        """Displacement of each (i, j) sampling pair in the i -> j direction"""
        return sampling.lengths

    def _midpoint(self, r0, dr, disp, n):
        t = (np.arange(n) + 0.5) / n
        radii = r0[:, None] + dr[:, None] * t[None, :]
        return self.integrand(radii, dr[:, None], disp[:, None]).mean(axis=1)

    def segment_lengths(self, r0, r1, disp, levels=None, rtol=None, max_levels=None):
        """
        Lengths of chart-straight segments by midpoint rule with Richardson extrapolation

        Args:
            r0 (array): Start radii
            r1 (array): End radii
            disp (array): Boundary displacement of each segment
            levels (int): Fixed refinement level; adaptive when None
            rtol (float): Relative convergence threshold for adaptive mode
            max_levels (int): Level cap for adaptive mode

        Returns:
            np.ndarray: Non-negative segment lengths
        """
        r0, r1, disp = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float)) for a in (r0, r1, disp)))
        dr = r1 - r0
        if levels is not None:
            n = 2 ** max(int(levels) - 1, 0)
            coarse = self._midpoint(r0, dr, disp, n)
            fine = self._midpoint(r0, dr, disp, 2 * n)
            return np.maximum((4.0 * fine - coarse) / 3.0, 0.0)
        rtol = Config.tolerance('quadrature_rtol') if rtol is None else rtol
        max_levels = Config.tolerance('quadrature_max_levels') if max_levels is None else max_levels
        result = np.empty(r0.shape, dtype=float)
        chunk = max(1, _CHUNK_EVALUATIONS >> 6)
        for start in range(0, r0.size, chunk):
            part = slice(start, start + chunk)
            result[part] = self._adaptive(r0[part], dr[part], disp[part], rtol, max_levels)
        return result

    def _adaptive(self, r0, dr, disp, rtol, max_levels):
        coarse = self._midpoint(r0, dr, disp, 1)
        previous = coarse.copy()
        result = coarse.copy()
        active = np.arange(r0.size)
        n = 1
        for _ in range(max_levels):
            if active.size == 0:
                break
            fine = np.empty(active.size)
            step = max(1, _CHUNK_EVALUATIONS // (2 * n))
            for start in range(0, active.size, step):
                index = active[start:start + step]
                fine[start:start + step] = self._midpoint(r0[index], dr[index], disp[index], 2 * n)
            estimate = np.maximum((4.0 * fine - coarse[active]) / 3.0, 0.0)
            result[active] = estimate
            converged = np.abs(estimate - previous[active]) <= rtol * np.maximum(np.abs(estimate), 1e-300)
            previous[active] = estimate
            coarse[active] = fine
            active = active[~converged]
            n *= 2
        if active.size:
            logger.debug(f"Quadrature reached the level cap on {active.size} segments")
        return result


class CylinderLengthModel(LengthModel):
    """Length structure of a conic or asymptotically conic cylinder chart"""

    def __init__(self, spec):
        super().__init__(spec)
        self.kind = spec.kind
        self.apex_allowed = spec.kind == 'conic'

    @property
    def is_constant(self):
        return self.spec.family.is_constant

    def lower_bound(self):
        return 1e-12 if self.kind == 'ac' else 0.0

    def integrand(self, r, dr, disp):
        speed_sq = dr ** 2 + r ** 2 * self.spec.scale(r) * disp ** 2
        if self.kind == 'ac':
            return np.sqrt(speed_sq) / r ** 2
        return np.sqrt(speed_sq)


class PolarChartLengthModel(LengthModel):
    """
    Length structure of a plane metric given in polar coordinates (theta, r)

    The boundary displacement is the signed angle change, so metrics with
    dr-dtheta cross terms are measured correctly.
    """

    kind = 'polar'

    def __init__(self, metric):
        super().__init__(metric)

    def check_radius(self, r, what='point'):
        if not r >= 0:
            raise DomainError(f"{what} radius {r} is negative")

    def integrand(self, r, dr, disp):
        return np.sqrt(np.maximum(self.spec.polar_quadratic(r, dr, disp), 0.0))

    def displacement(self, ya, yb):
        return self.boundary._signed_delta(np.asarray(ya, dtype=float), np.asarray(yb, dtype=float))

    def displacement_array(self, ya, yb):
        return self.boundary._signed_delta(np.asarray(ya)[..., 0], np.asarray(yb)[..., 0])

    def pair_displacement(self, sampling):
        points = np.asarray(sampling.points, dtype=float)
        return self.boundary._signed_delta(points[sampling.pairs[:, 0]], points[sampling.pairs[:, 1]])


def length_model(spec):
    """Length structure for a metric spec (or a model passed through)"""
    if isinstance(spec, LengthModel):
        return spec
    if isinstance(spec, (ConicMetricSpec, AcMetricSpec)):
        return CylinderLengthModel(spec)
    if isinstance(spec, LogSpiralMetric):
        return PolarChartLengthModel(spec)
    raise UnsupportedFamilyError(f"No length structure for {spec!r}")


def curve_length(spec, curve, rtol=None):
    """
    Length of a chart polyline

    Args:
        spec: Metric spec or length model
        curve (CurvePolyline): The curve
        rtol (float): Quadrature tolerance override

    Returns:
        float: Sum of segment lengths
    """
    model = length_model(spec)
    radii = curve.radii
    for r in radii:
        if isinstance(model.spec, AcMetricSpec) and r == 0:
            raise DomainError("Curve reaches r = 0, the boundary at infinity of the ac chart")
        model.check_radius(float(r), 'curve vertex')
    ys = [p.y for p in curve.points]
    disp = model.displacement(ys[:-1], ys[1:])
    return float(np.sum(model.segment_lengths(radii[:-1], radii[1:], disp, rtol=rtol)))


def blowup_pullback_euclidean(n):
    """
    Euclidean metric of R^n read in spherical blow-up coordinates at the origin

    Returns:
        ConicMetricSpec: dr^2 + r^2 du^2 over the unit sphere S^(n-1)
    """
    if n < 2:
        raise InvalidInputError(f"Blow-up needs dimension at least 2, got {n}")
    if n == 2:
        return ConicMetricSpec(Circle(2.0 * math.pi), math.inf, Constant())
    if n == 3:
        return ConicMetricSpec(RoundSphere(2, 1.0), math.inf, Constant())
    raise UnsupportedFamilyError(f"Blow-up coordinates are provided for dimensions 2 and 3, got {n}")


def infinity_pullback_euclidean(n):
    """Euclidean metric near infinity in coordinates (u, r = 1/|x|): r^-4 (dr^2 + r^2 du^2)"""
    return AcMetricSpec(blowup_pullback_euclidean(n))


def associated_simple_metric(spec):
    """Constant family with g_N replaced by g_d(0), same boundary and height"""
    if spec.family.is_constant:
        return spec
    simple = ConicMetricSpec(spec.boundary, spec.height, Constant(spec.family.scale_at_zero()))
    logger.debug(f"Associated simple metric of {spec!r} is {simple!r}")
    return simple


def _sweep_heights(spec, r_max, samples):
    if r_max is None:
        r_max = spec.height / 2.0 if math.isfinite(spec.height) else 1.0
    return np.linspace(0.0, min(r_max, spec.height), samples)


def norm_ratio_bracket(spec, other=None, r_max=None, samples=513):
    """
    Empirical equivalence constants between two conic metrics on the same chart

    The squared-norm ratio of lam^2 + r^2 s1 |xi|^2 over lam^2 + r^2 s2 |xi|^2
    ranges between 1 and s1/s2, so the sweep runs over the scale ratio only.

    Args:
        spec (ConicMetricSpec): Numerator metric
        other (ConicMetricSpec): Denominator metric, the associated simple metric by default
        r_max (float): Sweep upper radius, eta/2 by default
        samples (int): Number of sweep radii

    Returns:
        tuple: (lower, upper) bounds of |v|_spec / |v|_other over nonzero v
    """
    other = associated_simple_metric(spec) if other is None else other
    radii = _sweep_heights(spec, r_max, samples)
    ratio = np.asarray(spec.scale(radii)) / np.asarray(other.scale(radii))
    lower = math.sqrt(min(1.0, float(ratio.min())))
    upper = math.sqrt(max(1.0, float(ratio.max())))
    return lower, upper


def equivalence_height(spec, bound, r_max=None, samples=1025):
    """
    Largest sampled sub-height on which the norm ratio to the simple metric stays within [1/bound, bound]

    Returns:
        float: The sub-height; 0.0 when the bound fails immediately past r = 0
    """
    if not bound >= 1.0:
        raise InvalidInputError(f"Equivalence bound must be at least 1, got {bound}")
    upper = r_max if r_max is not None else (spec.height if math.isfinite(spec.height) else 1.0)
    radii = np.linspace(0.0, upper, samples)
    simple = associated_simple_metric(spec)
    ratio = np.sqrt(np.asarray(spec.scale(radii)) / np.asarray(simple.scale(radii)))
    inside = (ratio <= bound) & (ratio >= 1.0 / bound)
    if inside.all():
        return float(upper)
    first_bad = int(np.argmin(inside))
    return float(radii[first_bad - 1]) if first_bad > 0 else 0.0


def conformal_gluing_residual(spec, points, tangents):
    """
    Largest relative gap between r^-4 g0 and the inversion pullback of the inverted conic chart

    Args:
        spec (ConicMetricSpec): The conic metric g0
        points (list): ChartPoints with r > 0
        tangents (list): Tangents at those points

    Returns:
        float: max |a - b| / max(a, 1) over the samples
    """
    inverted = inverted_family(spec.family)
    worst = 0.0
    for p, v in zip(points, tangents):
        if p.r <= 0:
            raise SingularEvaluationError("Inversion is undefined at r = 0")
        xi_sq = float(np.dot(v.xi, v.xi))
        direct = (v.lam ** 2 + p.r ** 2 * float(spec.scale(p.r)) * xi_sq) / p.r ** 4
        big_r = 1.0 / p.r
        # d(1/r) = -dr / r^2
        d_big_r = -v.lam / p.r ** 2
        pulled = d_big_r ** 2 + big_r ** 2 * float(inverted.scale(big_r)) * xi_sq
        worst = max(worst, abs(direct - pulled) / max(direct, 1.0))
    return worst


class LogSpiralMetric:
    """
    Plane metric g_o = h / |x|^2 with
    h = (2x^2 - 2xy + y^2) dx^2 + 2(x^2 + xy - y^2) dx dy + (x^2 + 2xy + 2y^2) dy^2,
    in polar coordinates 2 dr^2 + 2r dr dtheta + r^2 dtheta^2
    """

    kind = 'polar'
    height = math.inf

    def __init__(self):
        self.boundary = Circle(2.0 * math.pi)

    def __repr__(self):
        return "LogSpiralMetric()"

    def polar_matrix(self, r):
        """Gram matrix in the (dr, dtheta) basis"""
        if not r > 0:
            raise SingularEvaluationError("Log-spiral metric is singular at the origin")
        return np.array([[2.0, r], [r, r * r]])

    def polar_quadratic(self, r, dr, dtheta):
        return 2.0 * dr ** 2 + 2.0 * r * dr * dtheta + (r * dtheta) ** 2

    def norm_sq_polar(self, r, dr, dtheta):
        if not r > 0:
            raise SingularEvaluationError("Log-spiral metric is singular at the origin")
        return float(self.polar_quadratic(r, dr, dtheta))

    def cartesian_matrix(self, point):
        """Gram matrix in the (dx, dy) basis at a Cartesian point"""
        x, y = (float(c) for c in point)
        norm_sq = x * x + y * y
        if norm_sq == 0:
            raise SingularEvaluationError("Log-spiral metric is singular at the origin")
        cross = x * x + x * y - y * y
        return np.array([[2 * x * x - 2 * x * y + y * y, cross],
                         [cross, x * x + 2 * x * y + 2 * y * y]]) / norm_sq

    def norm_sq_cartesian(self, point, vector):
        vector = np.asarray(vector, dtype=float)
        return float(vector @ self.cartesian_matrix(point) @ vector)

    def geodesic_angle(self, theta0, r0, r):
        """Angle along the unit-speed geodesic through (theta0, r0) into the origin"""
        return (theta0 - np.log(np.asarray(r, dtype=float) / r0)) % (2.0 * math.pi)


class ResolutionMap(ABC):
    """Coordinate transform from a cylinder chart into a model plane or space"""

    name = None

    def __init__(self, boundary):
        self.boundary = boundary

    @abstractmethod
    def forward(self, y, r):
        """Cartesian image of the chart point (y, r)"""

    @abstractmethod
    def inverse(self, x):
        """Chart point (y, r) of a Cartesian point on the smooth part"""

    @abstractmethod
    def jacobian(self, y, r):
        """(target_dim, dim + 1) matrix sending (xi, lam) to the Cartesian velocity"""

    def _unit_frame(self, y):
        if isinstance(self.boundary, Circle):
            angle = self.boundary.normalize(y)
            return np.array([math.cos(angle), math.sin(angle)]), np.array([[-math.sin(angle), math.cos(angle)]])
        u = self.boundary.normalize(y)
        return u, self.boundary.frames_array(u[None, :])[0]

    def _angle_of(self, direction):
        if isinstance(self.boundary, Circle):
            return math.atan2(direction[1], direction[0]) % (2.0 * math.pi)
        return direction


class BlowupAtPoint(ResolutionMap):
    """Spherical blow-up at the origin: (u, r) -> r u"""

    name = 'blowup-point'

    def forward(self, y, r):
        u, _ = self._unit_frame(y)
        return r * u

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        radius = float(np.linalg.norm(x))
        if radius == 0:
            raise SingularEvaluationError("The origin is the blown-up point; its preimage is the boundary")
        return self._angle_of(x / radius), radius

    def jacobian(self, y, r):
        u, frame = self._unit_frame(y)
        return np.column_stack([r * frame.T, u])


class BlowupAtInfinity(ResolutionMap):
    """Spherical blow-up at infinity: (u, r) -> u / r"""

    name = 'blowup-infinity'

    def forward(self, y, r):
        if not r > 0:
            raise SingularEvaluationError("r = 0 is the boundary at infinity")
        u, _ = self._unit_frame(y)
        return u / r

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        radius = float(np.linalg.norm(x))
        if radius == 0:
            raise SingularEvaluationError("The origin is not covered by the chart at infinity")
        return self._angle_of(x / radius), 1.0 / radius

    def jacobian(self, y, r):
        if not r > 0:
            raise SingularEvaluationError("r = 0 is the boundary at infinity")
        u, frame = self._unit_frame(y)
        return np.column_stack([frame.T / r, -u / r ** 2])


class LogSpiralMap(ResolutionMap):
    """phi(theta, r) = r exp(i (theta - ln r)), phi(., 0) = 0"""

    name = 'log-spiral'

    def __init__(self):
        super().__init__(Circle(2.0 * math.pi))

    def forward(self, y, r):
        if r == 0:
            return np.zeros(2)
        angle = self.boundary.normalize(y) - math.log(r)
        return r * np.array([math.cos(angle), math.sin(angle)])

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        radius = float(np.linalg.norm(x))
        if radius == 0:
            raise SingularEvaluationError("The origin is the image of the whole boundary circle")
        return (math.atan2(x[1], x[0]) + math.log(radius)) % (2.0 * math.pi), radius

    def jacobian(self, y, r):
        if not r > 0:
            raise SingularEvaluationError("phi is not differentiable in r at r = 0")
        angle = self.boundary.normalize(y) - math.log(r)
        c, s = math.cos(angle), math.sin(angle)
        return np.array([[-r * s, c + s],
                         [r * c, s - c]])


def model_gram_matrix(spec, p):
    """Gram matrix of a cylinder metric in (frame xi, lam) coordinates"""
    dim = spec.boundary.dim
    gram = np.zeros((dim + 1, dim + 1))
    gram[:dim, :dim] = np.eye(dim) * p.r ** 2 * float(spec.scale(p.r))
    gram[dim, dim] = 1.0
    if isinstance(spec, AcMetricSpec):
        gram /= p.r ** 4
    return gram


def pullback_defect(resolution, target_matrix, spec, points):
    """
    Largest entrywise gap between J^T G J and the chart metric at sampled points

    Args:
        resolution (ResolutionMap): The map
        target_matrix (callable): Cartesian point -> Gram matrix of the target metric
        spec: Chart metric expected after pullback
        points (list): ChartPoints on the smooth part

    Returns:
        float: Maximum absolute entry of the difference
    """
    worst = 0.0
    for p in points:
        jacobian = resolution.jacobian(p.y, p.r)
        target = target_matrix(resolution.forward(p.y, p.r))
        pulled = jacobian.T @ target @ jacobian
        worst = max(worst, float(np.max(np.abs(pulled - model_gram_matrix(spec, p)))))
    return worst


def euclidean_gram(point):
    return np.eye(len(point))


def logspiral_example():
    """
    Worked plane example with a spiralling metric

    Returns:
        tuple: (LogSpiralMetric, LogSpiralMap, ConicMetricSpec of the pullback dr^2 + r^2 dtheta^2)
    """
    metric = LogSpiralMetric()
    resolution = LogSpiralMap()
    model = ConicMetricSpec(resolution.boundary, math.inf, Constant())
    return metric, resolution, model
