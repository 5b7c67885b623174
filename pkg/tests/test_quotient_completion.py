"""
Quotient and completion test suite
Chain distances, collapse validation, conic inversion and the duality brackets
"""

import pytest
import logging
import math

import numpy as np

from geometry.boundary_manifold import Circle
from geometry.conic_metrics import AcMetricSpec, ChartPoint, ConicMetricSpec, Constant, SuspensionSpec
from geometry.quotient_completion import (AcChartPiece, BoundaryCollapse, ChartPiece, QuotientPoint, QuotientSpace,
                                          Seam, SuspensionPiece, build_completion, chain_enumeration_distance,
                                          completed_plane, completion_duality_check, completion_sample_pairs,
                                          conic_inversion, inversion_duality_check, plane_space,
                                          quotient_distance, quotient_from_config, sample_quotient_points)
from utils.exceptions import InvalidInputError, SingularEvaluationError, UnsupportedFamilyError

logger = logging.getLogger(__name__)


def cone_piece(name, height=1.0):
    return ChartPiece(name, ConicMetricSpec(Circle(), height, Constant()))


@pytest.fixture(scope="module")
def wedge():
    """Two cones at p, two suspensions from p to q, one cone at q"""
    circle = Circle()
    pieces = [cone_piece('a'), cone_piece('b', 1.5), cone_piece('c'),
              SuspensionPiece('s', SuspensionSpec(circle, 0.5)), SuspensionPiece('t', SuspensionSpec(circle, 0.25))]
    collapse = BoundaryCollapse((('a', 'base', 'p'), ('b', 'base', 'p'), ('s', 'bottom', 'p'), ('s', 'top', 'q'),
                                 ('t', 'bottom', 'q'), ('t', 'top', 'p'), ('c', 'base', 'q')))
    return QuotientSpace(pieces, collapse, name='wedge')


def chained_quotient(rhos, shortcut, name):
    """Apexes p0..pk joined in a row by suspensions, a shortcut suspension from p0 to pk, one cone per apex"""
    circle = Circle()
    labels = [f"p{k}" for k in range(len(rhos) + 1)]
    pieces, assignments = [], []
    for k, label in enumerate(labels):
        pieces.append(cone_piece(f"c{k}", 1.0 + 0.25 * k))
        assignments.append((f"c{k}", 'base', label))
    for k, rho in enumerate(rhos):
        pieces.append(SuspensionPiece(f"s{k}", SuspensionSpec(circle, rho)))
        assignments += [(f"s{k}", 'bottom', labels[k]), (f"s{k}", 'top', labels[k + 1])]
    pieces.append(SuspensionPiece('shortcut', SuspensionSpec(circle, shortcut)))
    assignments += [('shortcut', 'bottom', labels[0]), ('shortcut', 'top', labels[-1])]
    return QuotientSpace(pieces, BoundaryCollapse(tuple(assignments)), name=name)


@pytest.fixture(scope="module")
def three_apexes():
    return chained_quotient((0.2, 0.3), 0.6, 'three-apexes')


@pytest.fixture(scope="module")
def five_apexes():
    return chained_quotient((0.1, 0.15, 0.1, 0.2), 0.4, 'five-apexes')


@pytest.fixture(scope="module")
def plane():
    return plane_space()


class TestQuotientDistance:
    """Test class for chain distances in quotients"""

    @pytest.mark.smoke
    @pytest.mark.quotient
    def test_distance_through_shared_apex(self, wedge):
        logger.info("Starting test_distance_through_shared_apex")
        x = QuotientPoint('a', ChartPoint(0.0, 0.3))
        x2 = QuotientPoint('b', ChartPoint(1.0, 0.4))
        assert quotient_distance(wedge, x, x2) == pytest.approx(0.7), "Chain should pass through apex p"

    @pytest.mark.quotient
    def test_shortest_suspension_wins(self, wedge):
        x = QuotientPoint('a', ChartPoint(0.0, 0.2))
        x2 = QuotientPoint('c', ChartPoint(2.0, 0.3))
        assert quotient_distance(wedge, x, x2) == pytest.approx(0.2 + 0.25 * math.pi + 0.3)
        assert quotient_distance(wedge, 'p', 'q') == pytest.approx(0.25 * math.pi)

    @pytest.mark.quotient
    def test_same_piece_matches_cone(self, wedge):
        x = QuotientPoint('a', ChartPoint(0.0, 0.3))
        x2 = QuotientPoint('a', ChartPoint(1.0, 0.6))
        expected = math.sqrt(0.09 + 0.36 - 2 * 0.18 * math.cos(1.0))
        assert quotient_distance(wedge, x, x2) == pytest.approx(expected)

    @pytest.mark.acceptance
    @pytest.mark.quotient
    def test_chain_enumeration_agrees(self, wedge, rng):
        """
        Test Case: node-graph shortest paths equal brute-force chain enumeration

        Steps:
        1. Sample points over every piece of the wedge
        2. Compare both distances on consecutive pairs
        """
        points = sample_quotient_points(wedge, rng, 40)
        for x, x2 in zip(points[:-1], points[1:]):
            fast = quotient_distance(wedge, x, x2)
            slow = chain_enumeration_distance(wedge, x, x2)
            assert fast == pytest.approx(slow, rel=1e-12), f"Chain mismatch for {x!r}, {x2!r}"

    @pytest.mark.quotient
    def test_three_apex_chain_through_middle(self, three_apexes):
        assert quotient_distance(three_apexes, 'p0', 'p2') == pytest.approx(0.5 * math.pi), \
            "Two suspensions through p1 should beat the shortcut"
        x = QuotientPoint('c0', ChartPoint(0.0, 0.2))
        x2 = QuotientPoint('c2', ChartPoint(1.0, 0.3))
        assert quotient_distance(three_apexes, x, x2) == pytest.approx(0.2 + 0.5 * math.pi + 0.3)

    @pytest.mark.quotient
    def test_five_apex_chains_and_shortcut(self, five_apexes):
        assert quotient_distance(five_apexes, 'p0', 'p4') == pytest.approx(0.4 * math.pi)
        assert quotient_distance(five_apexes, 'p0', 'p3') == pytest.approx(0.35 * math.pi)
        assert quotient_distance(five_apexes, 'p1', 'p4') == pytest.approx(0.45 * math.pi)

    @pytest.mark.acceptance
    @pytest.mark.quotient
    @pytest.mark.parametrize("space", ["three_apexes", "five_apexes"])
    def test_chain_enumeration_with_many_apexes(self, space, request, rng):
        """
        Test Case: chains through several apexes equal brute-force enumeration

        Steps:
        1. Sample points over cones and suspensions of a row of apexes
        2. Enumerate every chain of distinct apexes
        3. Compare with the node-graph distance, including apex labels
        """
        quotient = request.getfixturevalue(space)
        points = sample_quotient_points(quotient, rng, 60) + list(quotient.apexes)
        for x, x2 in zip(points[:-1], points[1:]):
            fast = quotient_distance(quotient, x, x2)
            slow = chain_enumeration_distance(quotient, x, x2)
            assert fast == pytest.approx(slow, rel=1e-12), f"Chain mismatch for {x!r}, {x2!r}"

    @pytest.mark.acceptance
    @pytest.mark.quotient
    def test_metric_axioms(self, wedge, rng):
        points = sample_quotient_points(wedge, rng, 3000)
        for x, x2, x3 in zip(points[0::3], points[1::3], points[2::3]):
            d12 = quotient_distance(wedge, x, x2)
            assert d12 == quotient_distance(wedge, x2, x), "Quotient distance should be symmetric"
            d13 = quotient_distance(wedge, x, x3)
            d23 = quotient_distance(wedge, x2, x3)
            assert d13 <= d12 + d23 + 1e-9, f"Triangle inequality fails for {x!r}, {x2!r}, {x3!r}"

    @pytest.mark.quotient
    def test_chain_enumeration_needs_apex_only_quotient(self, plane):
        x = QuotientPoint('core', ChartPoint(0.0, 0.5))
        with pytest.raises(UnsupportedFamilyError):
            chain_enumeration_distance(plane, x, x)

    @pytest.mark.quotient
    def test_unknown_apex_label(self, wedge):
        with pytest.raises(InvalidInputError):
            quotient_distance(wedge, 'p', 'z')


class TestQuotientValidation:
    """Test class for collapse and seam declarations"""

    @pytest.mark.quotient
    def test_every_component_must_collapse(self):
        pieces = [SuspensionPiece('s', SuspensionSpec(Circle()))]
        with pytest.raises(InvalidInputError):
            QuotientSpace(pieces, BoundaryCollapse((('s', 'bottom', 'p'),)))

    @pytest.mark.quotient
    def test_component_collapsed_twice(self):
        with pytest.raises(InvalidInputError):
            QuotientSpace([cone_piece('a')], BoundaryCollapse((('a', 'base', 'p'), ('a', 'base', 'q'))))

    @pytest.mark.quotient
    def test_unknown_piece(self):
        with pytest.raises(InvalidInputError):
            QuotientSpace([cone_piece('a')], BoundaryCollapse((('a', 'base', 'p'), ('b', 'base', 'p'))))

    @pytest.mark.quotient
    def test_duplicate_piece_names(self):
        with pytest.raises(InvalidInputError):
            QuotientSpace([cone_piece('a'), cone_piece('a')], BoundaryCollapse((('a', 'base', 'p'),)))

    @pytest.mark.quotient
    def test_seam_needs_closed_form_pieces(self):
        pieces = [cone_piece('a'), SuspensionPiece('s', SuspensionSpec(Circle()))]
        collapse = BoundaryCollapse((('a', 'base', 'p'), ('s', 'bottom', 'p'), ('s', 'top', 'q')))
        with pytest.raises(UnsupportedFamilyError):
            QuotientSpace(pieces, collapse, [Seam('a', 1.0, 's', 1.0)])

    @pytest.mark.quotient
    def test_seam_level_inside_piece(self):
        collapse = BoundaryCollapse((('a', 'base', 'p'), ('b', 'base', 'q')))
        with pytest.raises(InvalidInputError):
            QuotientSpace([cone_piece('a'), cone_piece('b')], collapse, [Seam('a', 2.0, 'b', 1.0)])

    @pytest.mark.quotient
    def test_declaration_references_metric(self, flat_cone):
        declaration = {'pieces': [{'name': 'a', 'metric': 'cone'}], 'collapse': [['a', 'base', 'p']]}
        quotient = quotient_from_config(declaration, {'cone': flat_cone}, name='single')
        assert quotient.apexes == ('p',)
        with pytest.raises(InvalidInputError):
            quotient_from_config(declaration, {}, name='single')


class TestPlaneQuotient:
    """Test class for the plane glued from a disk and its exterior"""

    @pytest.mark.quotient
    def test_distance_across_seam_is_euclidean(self, plane):
        x = QuotientPoint('core', ChartPoint(0.0, 0.5))
        x2 = QuotientPoint('end', ChartPoint(math.pi / 2, 0.5))
        expected = math.hypot(0.5, 2.0)
        value = quotient_distance(plane, x, x2)
        assert expected - 1e-9 <= value <= expected * 1.01, f"Got {value}, Euclidean distance is {expected}"

    @pytest.mark.quotient
    def test_radial_crossing_is_exact(self, plane):
        x = QuotientPoint('core', ChartPoint(0.0, 0.5))
        x2 = QuotientPoint('end', ChartPoint(0.0, 0.5))
        assert quotient_distance(plane, x, x2) == pytest.approx(1.5)

    @pytest.mark.quotient
    def test_metric_axioms(self, plane, rng):
        points = sample_quotient_points(plane, rng, 90)
        for x, x2, x3 in zip(points[0::3], points[1::3], points[2::3]):
            d12 = quotient_distance(plane, x, x2)
            assert d12 == quotient_distance(plane, x2, x)
            assert quotient_distance(plane, x, x3) <= d12 + quotient_distance(plane, x2, x3) + 1e-9


class TestConicInversion:
    """Test class for the conic inversion and its duality"""

    @pytest.mark.quotient
    def test_inversion_swaps_radius(self):
        inverted = conic_inversion(ChartPoint(1.0, 4.0))
        assert (inverted.y, inverted.r) == (1.0, 0.25)
        x = ChartPoint(2.0, 0.3)
        assert conic_inversion(conic_inversion(x)).r == pytest.approx(x.r, rel=1e-15)

    @pytest.mark.quotient
    def test_inversion_undefined_at_zero(self):
        with pytest.raises(SingularEvaluationError):
            conic_inversion(ChartPoint(0.0, 0.0))

    @pytest.mark.acceptance
    @pytest.mark.quotient
    def test_flat_duality_ratio_is_one(self, circle, rng, frozen_brackets):
        """
        Test Case: r r' d_inf / d_0 on the flat cone equals 1 for every sampled pair

        Steps:
        1. Sample pairs with r in [0.25, 2]
        2. Evaluate closed-form d_0 and d_inf
        3. Check the bracket and the simplified forms
        """
        logger.info("Starting test_flat_duality_ratio_is_one")
        ys = rng.uniform(0, 2 * math.pi, (500, 2))
        rs = rng.uniform(0.25, 2.0, (500, 2))
        pairs = [(ChartPoint(float(y[0]), float(r[0])), ChartPoint(float(y[1]), float(r[1]))) for y, r in zip(ys, rs)]
        report = inversion_duality_check(circle, Constant(), pairs)
        low, high = report.check_within(*frozen_brackets["inversion_constant"], slack=1e-9)
        assert low == pytest.approx(1.0, abs=1e-9) and high == pytest.approx(1.0, abs=1e-9)
        simplified = inversion_duality_check(circle, Constant(), pairs, simplified=True)
        assert np.allclose(simplified.ratios, 1.0, rtol=1e-9), "Simplified duality ratio should be exactly 1"

    @pytest.mark.quotient
    def test_coincident_pairs_are_skipped(self, circle):
        x = ChartPoint(1.0, 0.5)
        report = inversion_duality_check(circle, Constant(), [(x, x), (x, ChartPoint(2.0, 0.5))])
        assert report.skipped == 1
        assert report.to_dict()['count'] == 1

    @pytest.mark.quotient
    def test_duality_needs_positive_radius(self, circle):
        with pytest.raises(SingularEvaluationError):
            inversion_duality_check(circle, Constant(), [(ChartPoint(0.0, 0.0), ChartPoint(1.0, 1.0))])


class TestCompletion:
    """Test class for conic completions"""

    @pytest.fixture(scope="class")
    def completion(self):
        return completed_plane()

    @pytest.mark.quotient
    def test_infinity_label(self, completion):
        assert completion.infinity_labels == ('inf',)
        assert completion.end_pieces == ('end',)
        assert completion.distance_to_infinity(QuotientPoint('end', ChartPoint(0.0, 0.4))) == pytest.approx(0.4)
        assert completion.distance_to_infinity(QuotientPoint('core', ChartPoint(0.0, 0.4))) == pytest.approx(1.6)

    @pytest.mark.acceptance
    @pytest.mark.quotient
    def test_duality_bracket(self, completion, rng, frozen_brackets):
        """
        Test Case: r r' d / d_bar stays inside the frozen completion bracket
        """
        pairs = completion_sample_pairs(completion, rng, per_category=12)
        report = completion_duality_check(completion, pairs)
        lower, upper = frozen_brackets["completion_plane"]
        report.check_within(lower, upper, frozen_brackets["slack"])
        low, high = report.bracket('end')
        assert low == pytest.approx(1.0, abs=0.05) and high == pytest.approx(1.0, abs=0.05)
        assert set(report.to_dict()['by_category']) == {'core', 'end', 'mixed'}

    @pytest.mark.quotient
    def test_properties(self, completion, rng):
        properties = completion.check_properties(rng, samples=16)
        assert properties['embedding']
        assert properties['near_singular_gap'] < 1e-9
        low, high = properties['compact_bracket']
        assert 0 < low <= high < math.inf
        assert completion.gluing_residual(rng, samples=16) < 1e-9

    @pytest.mark.quotient
    def test_needs_an_ac_end(self, wedge):
        with pytest.raises(InvalidInputError):
            build_completion(wedge)

    @pytest.mark.quotient
    def test_unbounded_conic_piece_rejected(self):
        circle = Circle()
        pieces = [ChartPiece('a', ConicMetricSpec(circle, math.inf, Constant())),
                  AcChartPiece('e', AcMetricSpec(ConicMetricSpec(circle, 1.0, Constant())))]
        with pytest.raises(InvalidInputError):
            build_completion(QuotientSpace(pieces, BoundaryCollapse((('a', 'base', 'p'),))))
