"""
LNE analysis test suite
p-sub-manifold checks, inner and outer distances, ratio scans and their verdicts
"""

import pytest
import logging
import math

from geometry.lne_analysis import (BOUNDED, DIVERGING, BoundarySubset, LneOptions, ParamSubmanifold,
                                   check_p_submanifold, circle_level, cylinder_lne_check, global_lne_scan,
                                   hereditary_check, inner_distance, lne_constant, lne_ratio_scan, local_lne_scan,
                                   outer_distance, radial_ray, ray_pair, scale_ladder, scan_verdict,
                                   submanifold_from_config, tangent_curve)
from utils.exceptions import InvalidInputError

logger = logging.getLogger(__name__)


@pytest.fixture(scope="module")
def quick_options():
    return LneOptions.from_tolerances(rungs=5, pairs_per_scale=12)


class TestVerdict:
    """Test class for the ladder verdict rule"""

    @pytest.mark.smoke
    @pytest.mark.lne
    def test_steady_growth_diverges(self):
        logger.info("Starting test_steady_growth_diverges")
        assert scan_verdict([1.0, 1.5, 2.2, 3.3], 1.5, 3, 0.02) == DIVERGING

    @pytest.mark.lne
    def test_noise_stays_bounded(self):
        assert scan_verdict([1.0, 1.01, 1.01, 1.015, 1.02], 1.5, 3, 0.02) == BOUNDED

    @pytest.mark.lne
    def test_growth_must_be_consecutive(self):
        assert scan_verdict([1.0, 1.5, 1.5, 2.25, 2.25, 3.4], 1.5, 3, 0.02) == BOUNDED

    @pytest.mark.lne
    def test_skipped_scales_are_ignored(self):
        assert scan_verdict([1.0, None, 1.5, 2.2, None, 3.3], 1.5, 3, 0.02) == DIVERGING

    @pytest.mark.lne
    def test_scale_ladder(self):
        assert scale_ladder(1.0, 3) == [0.5, 0.25, 0.125]

    @pytest.mark.lne
    def test_options_accept_overrides(self):
        options = LneOptions.from_tolerances(rungs=3, pairs_per_scale=8, seed=5)
        assert (options.rungs, options.pairs_per_scale, options.resolved_seed) == (3, 8, 5)


class TestSubmanifolds:
    """Test class for sub-manifold families and the p-sub-manifold check"""

    @pytest.mark.lne
    def test_rays_are_p_submanifolds(self, circle):
        check = check_p_submanifold(ray_pair(circle, 0.0, 2.0, 1.0))
        assert check, f"Ray pair should pass, diagnostics {check.diagnostics}"
        assert check.min_radial == pytest.approx(1.0)

    @pytest.mark.lne
    def test_tangent_curve_fails(self):
        check = check_p_submanifold(tangent_curve())
        assert not check
        assert any(d['reason'] == 'tangent to the boundary' for d in check.diagnostics)

    @pytest.mark.lne
    def test_level_curve_has_no_trace(self, circle):
        check = check_p_submanifold(circle_level(circle, 0.5))
        assert check and check.trace_size == 0

    @pytest.mark.lne
    def test_tangent_curve_height(self):
        assert tangent_curve(s_max=0.5).height == pytest.approx(0.25)

    @pytest.mark.lne
    def test_duplicate_component_names(self, circle):
        with pytest.raises(InvalidInputError):
            ParamSubmanifold('twice', [radial_ray(circle, 0.0, 1.0), radial_ray(circle, 1.0, 1.0)])

    @pytest.mark.lne
    def test_declarations(self, circle):
        level = submanifold_from_config({'family': 'circle_level', 'boundary': 'c', 'level': 0.5}, {'c': circle})
        assert list(level.components) == ['level']
        with pytest.raises(InvalidInputError):
            submanifold_from_config({'family': 'radial_ray'}, {})
        with pytest.raises(InvalidInputError):
            submanifold_from_config({'family': 'plane_ray_pair', 'quotient': 'plane'}, {}, {})
        with pytest.raises(InvalidInputError):
            submanifold_from_config({'family': 'helix'}, {})


class TestInnerOuter:
    """Test class for inner and outer distances"""

    @pytest.mark.lne
    def test_rays_meet_at_apex(self, circle, flat_cone):
        rays = ray_pair(circle, 0.0, 2.0, 1.0)
        a, b = ('ray0', [0.5]), ('ray1', [0.5])
        assert inner_distance(rays, flat_cone, a, b) == pytest.approx(1.0, rel=1e-6)
        assert outer_distance(rays, flat_cone, a, b) == pytest.approx(math.sin(1.0), rel=1e-12)

    @pytest.mark.lne
    def test_single_ray_is_straight(self, circle, flat_cone):
        ray = ParamSubmanifold('ray', [radial_ray(circle, 1.0, 1.0)])
        assert inner_distance(ray, flat_cone, ('ray', [0.2]), ('ray', [0.7])) == pytest.approx(0.5, rel=1e-6)

    @pytest.mark.lne
    def test_level_curve_arc(self, circle, flat_cone):
        level = circle_level(circle, 0.5)
        a, b = ('level', [0.0]), ('level', [math.pi])
        assert inner_distance(level, flat_cone, a, b) == pytest.approx(0.5 * math.pi, rel=1e-3)
        assert outer_distance(level, flat_cone, a, b) == pytest.approx(1.0)


class TestScans:
    """Test class for ladder, local, global and hereditary scans"""

    @pytest.mark.acceptance
    @pytest.mark.lne
    def test_ray_pair_bounded(self, circle, flat_cone, quick_options):
        """
        Test Case: two rays meeting at the apex are LNE

        Steps:
        1. Scan the ray pair toward the apex
        2. Verify the BOUNDED verdict and the supremum 1 / sin(1)
        """
        logger.info("Starting test_ray_pair_bounded")
        report = lne_ratio_scan(ray_pair(circle, 0.0, 2.0, 1.0), flat_cone, options=quick_options)
        assert report.verdict == BOUNDED
        assert report.violations == 0, "Inner distance should never undercut the outer one"
        assert 1.0 <= report.supremum <= 1.0 / math.sin(1.0) + 1e-3
        assert len(report.suprema) == quick_options.rungs

    @pytest.mark.acceptance
    @pytest.mark.lne
    def test_tangent_curve_diverges(self, flat_cone, test_data):
        """
        Test Case: the curve (s, s^2) with the ray {theta = 0} is not LNE

        Steps:
        1. Scan the default ladder
        2. Verify DIVERGING and the per-rung growth near sqrt(2)
        """
        report = lne_ratio_scan(tangent_curve(), flat_cone)
        low, high = test_data["lne"]["tangent_growth_range"]
        assert report.verdict == DIVERGING, f"Suprema {report.suprema}"
        assert low <= report.growth <= high
        report.check_inner_outer()

    @pytest.mark.acceptance
    @pytest.mark.lne
    def test_full_cylinder_within_prediction(self, flat_cone, quick_options, test_data):
        report = cylinder_lne_check(BoundarySubset('full'), flat_cone, quick_options)
        assert report.predicted == pytest.approx(test_data["lne"]["cylinder_full_bound"])
        assert report.verdict == BOUNDED
        assert report.within_prediction, f"Supremum {report.supremum} above {report.predicted}"

    @pytest.mark.lne
    def test_point_cylinder(self, flat_cone, quick_options):
        report = cylinder_lne_check(BoundarySubset('points', points=(0.0, 1.5, 3.5)), flat_cone, quick_options)
        assert report.verdict == BOUNDED
        assert report.within_prediction

    @pytest.mark.lne
    def test_level_curve_global_and_local(self, circle, flat_cone, quick_options):
        level = circle_level(circle, 0.5)
        overall = global_lne_scan(level, flat_cone, quick_options)
        assert overall.verdict == BOUNDED
        assert overall.supremum <= 0.5 * math.pi + 1e-3
        local = local_lne_scan(level, flat_cone, ('level', [1.0]), quick_options)
        assert local.verdict == BOUNDED
        assert local.supremum <= 0.5 * math.pi + 1e-3

    @pytest.mark.lne
    def test_hereditary(self, circle, flat_cone, quick_options):
        direct, through = hereditary_check(ray_pair(circle, 0.0, 2.0, 0.5), ray_pair(circle, 0.0, 2.0, 1.0),
                                           flat_cone, quick_options)
        assert direct.verdict == BOUNDED and through.verdict == BOUNDED
        assert through.supremum <= 1.0 + 1e-6


class TestBoundarySubsets:
    """Test class for circle subsets and their constants"""

    @pytest.mark.lne
    def test_constants(self, circle):
        assert lne_constant(BoundarySubset('full'), circle) == 1.0
        assert lne_constant(BoundarySubset('points', points=(0.0, 1.0)), circle) == 1.0
        arc = lne_constant(BoundarySubset('arc', 0.0, 4.0), circle)
        assert arc == pytest.approx(4.0 / (2 * math.pi - 4.0), rel=1e-9)

    @pytest.mark.lne
    def test_invalid_subsets(self):
        with pytest.raises(InvalidInputError):
            BoundarySubset('arc', 0.0, 7.0)
        with pytest.raises(InvalidInputError):
            BoundarySubset('points')
        with pytest.raises(InvalidInputError):
            BoundarySubset('annulus')
