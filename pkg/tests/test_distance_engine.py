"""
Distance engine test suite
Closed forms, grid graphs, refinement and the metric-axiom checks of conic and ac distances
"""

import pytest
import logging
import math
import time

import numpy as np

from geometry.boundary_manifold import Circle
from geometry.conic_metrics import AcMetricSpec, ChartPoint, ConicMetricSpec, Constant, SuspensionSpec, Warped
from geometry.distance_engine import (DistanceOptions, GridDiscretization, ac_distance, ac_e_function,
                                      build_graph, calibrate_equivalence, chart_distance, conic_distance,
                                      conic_sandwich_bounds, cone_distance_array, distance_batch, distance_to_apex,
                                      graph_distance, logspiral_geodesic, suspension_distance)
from geometry.conic_metrics import logspiral_example
from utils.exceptions import InvalidGridError, SingularEvaluationError, UnsupportedFamilyError

logger = logging.getLogger(__name__)


def point(entry):
    return ChartPoint(float(entry[0]), float(entry[1]))


def height_of(value):
    return math.inf if value == 'inf' else float(value)


def exhaustive_shortest(matrix):
    """All-pairs minimum over every edge sequence of at most n - 1 edges"""
    weights = matrix.toarray()
    weights[weights == 0] = np.inf
    np.fill_diagonal(weights, 0.0)
    best = weights.copy()
    for _ in range(len(weights) - 2):
        best = np.minimum(best, np.min(best[:, :, None] + weights[None, :, :], axis=1))
    return best


def random_points(rng, n, r_low, r_high):
    return [ChartPoint(float(y), float(r))
            for y, r in zip(rng.uniform(0, 2 * math.pi, n), rng.uniform(r_low, r_high, n))]


def euclidean(spec, x):
    direction = np.array([math.cos(x.y), math.sin(x.y)])
    return direction / x.r if isinstance(spec, AcMetricSpec) else direction * x.r


@pytest.fixture(scope="module")
def warped_spec(circle):
    return ConicMetricSpec(circle, 1.0, Warped('affine', 0.5))


class TestClosedForms:
    """Test class for exact distances of simple metrics"""

    @pytest.mark.smoke
    @pytest.mark.distance
    def test_cone_law_of_cosines(self, test_data, circle):
        logger.info("Starting test_cone_law_of_cosines")
        for case in test_data["cone_distances"]:
            spec = ConicMetricSpec(circle, math.inf, Constant(case["scale"]))
            value = conic_distance(spec, point(case["a"]), point(case["b"])).value
            assert value == pytest.approx(case["expected"], rel=1e-12), f"Cone distance mismatch for {case}"

    @pytest.mark.distance
    def test_ac_through_inversion(self, test_data, circle):
        for case in test_data["ac_distances"]:
            spec = AcMetricSpec(ConicMetricSpec(circle, height_of(case["height"]), Constant()))
            value = ac_distance(spec, point(case["a"]), point(case["b"])).value
            assert value == pytest.approx(case["expected"], rel=1e-12), f"Ac distance mismatch for {case}"

    @pytest.mark.distance
    def test_suspension(self, test_data, circle):
        for case in test_data["suspension_distances"]:
            spec = SuspensionSpec(circle, case["rho"])
            value = suspension_distance(spec, point(case["a"]), point(case["b"]))
            assert value == pytest.approx(case["expected"], rel=1e-12)

    @pytest.mark.distance
    def test_apex_distance_is_radius(self, flat_cone):
        assert distance_to_apex(flat_cone, ChartPoint(2.0, 0.7)) == 0.7
        assert conic_distance(flat_cone, ChartPoint(0.0, 0.0), ChartPoint(3.0, 0.0)).value == 0.0

    @pytest.mark.distance
    def test_exact_result_provenance(self, flat_cone):
        result = chart_distance(flat_cone, ChartPoint(0.0, 0.2), ChartPoint(1.0, 0.4))
        assert result.method == 'exact'
        assert result.path is None

    @pytest.mark.distance
    def test_no_closed_form_for_warped(self, warped_spec):
        with pytest.raises(UnsupportedFamilyError):
            conic_distance(warped_spec, ChartPoint(0.0, 0.2), ChartPoint(1.0, 0.4), DistanceOptions(method='exact'))

    @pytest.mark.distance
    def test_ac_rejects_infinity(self, flat_end):
        with pytest.raises(SingularEvaluationError):
            ac_distance(flat_end, ChartPoint(0.0, 0.0), ChartPoint(1.0, 0.4))

    @pytest.mark.distance
    def test_simplified_forms(self):
        x, x2 = ChartPoint(0.0, 0.5), ChartPoint(1.0, 0.25)
        assert conic_sandwich_bounds(x, x2, 1.0) == pytest.approx((0.25, 0.5))
        assert ac_e_function(x, x2, 1.0) == pytest.approx(4.0)


class TestSandwich:
    """Test class for the simple-metric sandwich estimate"""

    @pytest.mark.acceptance
    @pytest.mark.distance
    def test_sandwich_grid_has_no_violations(self, test_data):
        """
        Test Case: A (|r - r'| + min(r, r') d_N) <= d^c <= B (...) on a 10 x 10 x 100 grid

        Steps:
        1. Build the (r, r', d_N) grid with d_N up to pi for c = 1 and c = 4
        2. Evaluate the cone law of cosines
        3. Count pairs outside the bounds
        """
        logger.info("Starting test_sandwich_grid_has_no_violations")
        sandwich = test_data["sandwich"]
        radii = np.arange(1, sandwich["n_r"] + 1) / sandwich["n_r"]
        for c in (1.0, 4.0):
            d_ns = np.linspace(0.0, math.pi / math.sqrt(c), sandwich["n_dn"])
            r1, r2, d_n = (a.ravel() for a in np.meshgrid(radii, radii, d_ns, indexing='ij'))
            distances = cone_distance_array(c, r1, r2, d_n)
            bound = np.abs(r1 - r2) + np.minimum(r1, r2) * math.sqrt(c) * d_n
            below = distances < sandwich["lower"] * bound - 1e-12
            above = distances > sandwich["upper"] * bound + 1e-12
            assert distances.size == 10000
            assert not np.any(below | above), f"{int(np.sum(below | above))} sandwich breaches for c = {c}"


class TestMetricAxioms:
    """Test class for symmetry and the triangle inequality"""

    @pytest.mark.acceptance
    @pytest.mark.distance
    def test_conic_axioms_on_triples(self, flat_cone, rng):
        points = random_points(rng, 3000, 0.0, 1.0)
        for a, b, c in zip(points[0::3], points[1::3], points[2::3]):
            ab = conic_distance(flat_cone, a, b).value
            assert ab == pytest.approx(conic_distance(flat_cone, b, a).value, rel=1e-12, abs=1e-15), \
                "Conic distance should be symmetric"
            bc = conic_distance(flat_cone, b, c).value
            ac = conic_distance(flat_cone, a, c).value
            assert ac <= ab + bc + 1e-9, f"Triangle inequality fails for {a!r}, {b!r}, {c!r}"

    @pytest.mark.acceptance
    @pytest.mark.distance
    def test_ac_axioms_on_triples(self, circle, rng):
        spec = AcMetricSpec(ConicMetricSpec(circle, 1.0, Constant()))
        points = random_points(rng, 3000, 0.05, 1.0)
        for a, b, c in zip(points[0::3], points[1::3], points[2::3]):
            ab = ac_distance(spec, a, b).value
            assert abs(ab - ac_distance(spec, b, a).value) <= 1e-9 * max(1.0, ab)
            bc = ac_distance(spec, b, c).value
            ac = ac_distance(spec, a, c).value
            assert ac <= ab + bc + 1e-9 * max(1.0, ac), f"Triangle inequality fails for {a!r}, {b!r}, {c!r}"

    @pytest.mark.distance
    def test_truncated_chart_is_not_shorter_than_full_plane(self, circle, rng):
        truncated = AcMetricSpec(ConicMetricSpec(circle, 1.0, Constant()))
        full = AcMetricSpec(ConicMetricSpec(circle, math.inf, Constant()))
        for a, b in zip(random_points(rng, 50, 0.05, 1.0), random_points(rng, 50, 0.05, 1.0)):
            assert ac_distance(truncated, a, b).value >= ac_distance(full, a, b).value - 1e-12


class TestGraphs:
    """Test class for grid graphs"""

    @pytest.mark.distance
    def test_grid_rejects_too_few_samples(self, flat_cone):
        with pytest.raises(InvalidGridError):
            build_graph(flat_cone, GridDiscretization(n_r=8, n_y=2))

    @pytest.mark.distance
    def test_ac_grid_has_no_apex(self, flat_end):
        with pytest.raises(InvalidGridError):
            build_graph(flat_end, GridDiscretization(n_r=8, n_y=8, include_apex=True))

    @pytest.mark.distance
    def test_graph_is_an_upper_estimate(self, flat_cone):
        graph = build_graph(flat_cone, GridDiscretization(n_r=32, n_y=32))
        a, b = ChartPoint(graph.sampling.points[0], 0.5), ChartPoint(graph.sampling.points[8], 0.5)
        seeded = graph_distance(graph, a, b)
        exact = conic_distance(flat_cone, a, b).value
        assert seeded.value >= exact - 1e-9
        assert seeded.value <= 1.2 * exact

    @pytest.mark.distance
    def test_path_through_apex(self, flat_cone):
        graph = build_graph(flat_cone, GridDiscretization(n_r=16, n_y=16))
        a = ChartPoint(graph.sampling.points[0], float(graph.levels[2]))
        b = ChartPoint(graph.sampling.points[8], float(graph.levels[2]))
        seeded = graph_distance(graph, a, b)
        assert seeded.value == pytest.approx(2 * graph.levels[2])
        assert min(p.r for p in seeded.path.points) == 0.0

    @pytest.mark.distance
    def test_matches_exhaustive_search(self, flat_cone):
        """
        Test Case: grid shortest paths on a 5x5 grid with apex equal the exhaustive minimum

        Steps:
        1. Build the 5x5 graph with its apex node
        2. Minimize over every edge sequence of the adjacency
        3. Compare with graph_distance for every node pair
        """
        graph = build_graph(flat_cone, GridDiscretization(n_r=5, n_y=5, stencil=1))
        assert graph.n_nodes == 26
        expected = exhaustive_shortest(graph.matrix)
        for i in range(graph.n_nodes):
            for j in range(i + 1, graph.n_nodes):
                value = graph_distance(graph, graph.node_point(i), graph.node_point(j)).value
                assert value == pytest.approx(expected[i, j], rel=1e-12, abs=1e-15), \
                    f"Nodes {i}-{j}: {value} against {expected[i, j]}"
        level = graph.node_point(graph.node_index(0, 3))
        assert graph_distance(graph, graph.node_point(graph.apex), level).value == pytest.approx(graph.levels[0])


class TestNumericalDistances:
    """Test class for graph-seeded refinement"""

    @pytest.mark.acceptance
    @pytest.mark.distance
    def test_euclidean_oracle(self, flat_cone, test_data, rng):
        """
        Test Case: graph plus refinement agrees with planar distance in blow-up coordinates

        Steps:
        1. Draw 200 seeded pairs with r, r' in [0.05, 0.95]
        2. Run graph plus refinement on the 128x128 grid, timing the batch
        3. Compare each value with the planar distance of the pushed-forward points
        """
        logger.info("Starting test_euclidean_oracle")
        oracle = test_data["oracle"]
        low, high = oracle["r_range"]
        grid = GridDiscretization(n_r=oracle["grid"], n_y=oracle["grid"])
        options = DistanceOptions(method='refined', grid=grid)
        points = random_points(rng, 2 * oracle["pairs"], low, high)
        pairs = list(zip(points[0::2], points[1::2]))
        started = time.perf_counter()
        results = distance_batch(flat_cone, pairs, options)
        elapsed = time.perf_counter() - started
        assert len(results) == oracle["pairs"]
        assert elapsed < oracle["max_seconds"], f"Batch took {elapsed:.1f} s"
        for (a, b), result in zip(pairs, results):
            expected = float(np.linalg.norm(euclidean(flat_cone, a) - euclidean(flat_cone, b)))
            error = abs(result.value - expected) / expected
            assert error <= oracle["relative"], f"Relative error {error:.4g} for {a!r}, {b!r}"

    @pytest.mark.distance
    def test_warped_radial_segment(self, warped_spec):
        a, b = ChartPoint(1.0, 0.3), ChartPoint(1.0, 0.7)
        value = conic_distance(warped_spec, a, b, DistanceOptions(grid=GridDiscretization(n_r=48, n_y=48))).value
        assert value == pytest.approx(0.4, rel=1e-2)

    @pytest.mark.distance
    def test_warped_symmetric_and_within_equivalence(self, warped_spec, rng):
        options = DistanceOptions(grid=GridDiscretization(n_r=48, n_y=48))
        constants = calibrate_equivalence(warped_spec, 1.0)
        for a, b in zip(random_points(rng, 6, 0.1, 0.9), random_points(rng, 6, 0.1, 0.9)):
            value = conic_distance(warped_spec, a, b, options).value
            assert value == conic_distance(warped_spec, b, a, options).value, "Warped distance should be symmetric"
            simple = conic_distance(constants.simple, a, b).value
            assert constants.lower * simple * 0.98 <= value <= constants.upper * simple * 1.02

    @pytest.mark.distance
    def test_calibration_is_cached(self, warped_spec):
        assert calibrate_equivalence(warped_spec, 1.0) is calibrate_equivalence(warped_spec, 1.0)

    @pytest.mark.distance
    def test_batch_keeps_order(self, flat_cone, rng):
        points = random_points(rng, 20, 0.1, 0.9)
        pairs = list(zip(points[0::2], points[1::2]))
        values = [r.value for r in distance_batch(flat_cone, pairs, threads=2)]
        assert values == [conic_distance(flat_cone, a, b).value for a, b in pairs]


class TestLogSpiralGeodesic:
    """Test class for the spiralling geodesic"""

    @pytest.mark.acceptance
    @pytest.mark.distance
    def test_trace_follows_spiral(self, test_data):
        """
        Test Case: refined curve from (theta0, r0) into the origin follows theta(r) = theta0 - ln(r / r0)
        """
        logger.info("Starting test_trace_follows_spiral")
        case = test_data["log_spiral"]
        metric, _, _ = logspiral_example()
        result = logspiral_geodesic(metric, case["theta0"], case["r0"])
        low, high = case["r_window"]
        circle = Circle()
        deviations = [circle.distance(p.y, metric.geodesic_angle(case["theta0"], case["r0"], p.r))
                      for p in result.path.points if low <= p.r <= high]
        assert deviations, "Trace should have vertices inside the radius window"
        assert max(deviations) < case["max_deviation"], f"Spiral deviation {max(deviations):.4g} rad"
        assert case["r0"] * (1.0 - 1e-3) <= result.value <= 1.05 * case["r0"]
