"""
Scenario runner module
Executes scenario tasks in order and writes their CSV tables and JSON reports
"""

import logging
import math
import os
from dataclasses import replace

import numpy as np

from geometry.boundary_manifold import MeshPoint
from geometry.conic_metrics import (AcMetricSpec, BlowupAtInfinity, BlowupAtPoint, ChartPoint, ConicMetricSpec,
                                    Tangent, blowup_pullback_euclidean, conformal_gluing_residual, euclidean_gram,
                                    family_from_config, infinity_pullback_euclidean, logspiral_example,
                                    pullback_defect)
from geometry.distance_engine import (DistanceOptions, GridDiscretization, calibrate_equivalence, chart_distance,
                                      cone_distance_array, distance_batch, logspiral_geodesic)
from geometry.lne_analysis import (ChartAmbient, LneOptions, check_p_submanifold, cylinder_lne_check,
                                   global_lne_scan, hereditary_check, local_lne_scan, lne_ratio_scan,
                                   subset_from_config)
from geometry.quotient_completion import (QuotientPoint, chain_enumeration_distance, completion_duality_check,
                                          completion_sample_pairs, inversion_duality_check, quotient_distance,
                                          sample_quotient_points)
from utils.config import Config
from utils.exceptions import ConicGeometryError, InvalidInputError, InvariantViolation
from utils.report_writer import ReportWriter

logger = logging.getLogger(__name__)

SANDWICH_LOWER = 0.5
SANDWICH_UPPER = 1.0


def _parse_y(boundary, value):
    if boundary.kind == 'mesh':
        return boundary.normalize(MeshPoint(*value) if isinstance(value, (list, tuple)) else int(value))
    if isinstance(value, (list, tuple)):
        return boundary.normalize(np.asarray(value, dtype=float))
    return boundary.normalize(float(value))


def parse_point(boundary, value):
    """[y, r] scenario entry as a ChartPoint"""
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise InvalidInputError(f"Expected a point [y, r], got {value!r}")
    return ChartPoint(_parse_y(boundary, value[0]), float(value[1]))


def grid_from_config(declaration):
    if not declaration:
        return None
    return GridDiscretization(**declaration)


def _euclidean_position(spec, point):
    """Cartesian position of a chart point of the Euclidean blow-up charts"""
    y = point.y
    direction = np.array([math.cos(y), math.sin(y)]) if spec.boundary.kind == 'circle' else np.asarray(y)
    if isinstance(spec, AcMetricSpec):
        return direction / point.r
    return direction * point.r


def _check_euclidean_oracle(spec):
    base = spec.base if isinstance(spec, AcMetricSpec) else spec
    if not isinstance(base, ConicMetricSpec) or base.boundary.kind not in ('circle', 'sphere'):
        raise InvalidInputError(f"The Euclidean oracle needs a circle or sphere chart, got {spec!r}")
    if base.boundary.kind == 'circle' and abs(base.boundary.circumference - 2.0 * math.pi) > 1e-12:
        raise InvalidInputError("The Euclidean oracle needs the unit circle")
    if base.boundary.kind == 'sphere' and base.boundary.radius != 1.0:
        raise InvalidInputError("The Euclidean oracle needs the unit sphere")
    if not base.family.is_constant or base.family.scale_at_zero() != 1.0:
        raise InvalidInputError("The Euclidean oracle needs the flat family")
    if isinstance(spec, AcMetricSpec) and math.isfinite(spec.height):
        raise InvalidInputError("The Euclidean oracle at infinity needs an unbounded ac chart")


class ScenarioRunner:
    """
    Runs the tasks of a loaded scenario

    Each task gets its own random generator seeded from (seed, task index) so
    results do not depend on which other tasks run before it.
    """

    def __init__(self, scenario, out_dir=None, seed=None, threads=None):
        self.scenario = scenario
        self.seed = seed if seed is not None else scenario.seed
        self.threads = Config.THREADS if threads is None else threads
        self.tolerances = scenario.tolerances
        self.writer = ReportWriter(os.path.join(out_dir or Config.OUT_DIR, scenario.name))
        self.violations = []
        self.handlers = {
            'distance-batch': self.run_distance_batch,
            'geodesic': self.run_geodesic,
            'sandwich-verify': self.run_sandwich_verify,
            'duality': self.run_duality,
            'lne-scan': self.run_lne_scan,
            'quotient-distance': self.run_quotient_distance,
            'example-replay': self.run_example_replay,
        }

    def rng(self, index):
        seed = Config.DEFAULT_SEED if self.seed is None else int(self.seed)
        return np.random.default_rng([seed, index])

    def distance_options(self, task):
        return DistanceOptions.from_tolerances(self.tolerances, method=task.get('method', 'auto'),
                                               grid=grid_from_config(task.get('grid')),
                                               refine=task.get('refine', True))

    def output(self, task, index, suffix):
        stem = task.get('output') or f"{index:02d}-{task['type']}"
        return os.path.splitext(stem)[0] + suffix

    def run(self):
        """
        Execute every task in order

        Returns:
            dict: Per-task status and artifacts; violations are collected, not raised
        """
        summary = {'scenario': self.scenario.name, 'seed': self.seed, 'tasks': []}
        for index, task in enumerate(self.scenario.tasks):
            logger.info(f"Task {index} ({task['type']}) of scenario '{self.scenario.name}'")
            before = len(self.writer.written)
            entry = {'index': index, 'type': task['type'], 'status': 'ok'}
            try:
                entry['result'] = self.handlers[task['type']](task, index)
            except InvariantViolation as e:
                logger.error(f"Task {index} ({task['type']}) violated an invariant: {str(e)}")
                entry['status'] = 'violation'
                entry['message'] = str(e)
                self.violations.append(e)
            except ConicGeometryError as e:
                logger.error(f"Task {index} ({task['type']}) failed: {str(e)}")
                raise
            entry['artifacts'] = [os.path.basename(p) for p in self.writer.written[before:]]
            summary['tasks'].append(entry)
        if self.scenario.tasks:
            self.writer.write_json('summary.json', summary)
        return summary

    # Tasks

    def _random_pairs(self, boundary, rng, count, r_range):
        ys = boundary.random_points(rng, 2 * count)
        rs = rng.uniform(r_range[0], r_range[1], 2 * count)
        points = [ChartPoint(y, float(r)) for y, r in zip(ys, rs)]
        return list(zip(points[0::2], points[1::2]))

    def _pairs(self, spec, task, rng):
        declared = task.get('pairs', {'count': 100})
        if isinstance(declared, list):
            return [(parse_point(spec.boundary, a), parse_point(spec.boundary, b)) for a, b in declared]
        top = spec.height if math.isfinite(spec.height) else 1.0
        r_range = declared.get('r_range', [0.05 * top, 0.95 * top])
        return self._random_pairs(spec.boundary, rng, int(declared.get('count', 100)), r_range)

    def run_distance_batch(self, task, index):
        """Distances of sampled or listed pairs, with an optional Euclidean oracle and symmetry check"""
        spec = self.scenario.metrics[task['metric']]
        rng = self.rng(index)
        oracle = task.get('oracle')
        if oracle == 'euclidean':
            _check_euclidean_oracle(spec)
        elif oracle is not None:
            raise InvalidInputError(f"Unknown oracle '{oracle}'")
        pairs = self._pairs(spec, task, rng)
        options = self.distance_options(task)
        results = distance_batch(spec, pairs, options, self.threads)
        rows = []
        worst = None
        for (x, x2), result in zip(pairs, results):
            row = {'y': x.y, 'r': x.r, "y'": x2.y, "r'": x2.r, 'distance': result.value, 'method': result.method,
                   'residual': result.residual, 'snap_error': result.snap_error}
            if oracle:
                expected = float(np.linalg.norm(_euclidean_position(spec, x) - _euclidean_position(spec, x2)))
                error = abs(result.value - expected) / max(expected, 1e-12)
                row.update({'oracle': expected, 'rel_error': error})
                if worst is None or error > worst['rel_error']:
                    worst = row
            rows.append(row)
        self.writer.write_csv(self.output(task, index, '.csv'), rows)
        if task.get('symmetry'):
            reversed_results = distance_batch(spec, [(b, a) for a, b in pairs], options, self.threads)
            tol = self.tolerances['symmetry']
            for row, result in zip(rows, reversed_results):
                if abs(row['distance'] - result.value) > tol * max(1.0, row['distance']):
                    raise InvariantViolation(f"Asymmetric distance {row['distance']!r} vs {result.value!r}", pair=row)
        report = {'pairs': len(rows), 'max_rel_error': None if worst is None else worst['rel_error']}
        if worst is not None and worst['rel_error'] > self.tolerances['oracle_rel']:
            raise InvariantViolation(f"Distance misses the Euclidean oracle by {worst['rel_error']:.4g}", pair=worst)
        return report

    def run_geodesic(self, task, index):
        """Refined minimizing curve: the log-spiral trace, or a chart geodesic between two points"""
        options = DistanceOptions.from_tolerances(self.tolerances)
        if task.get('example') == 'log-spiral':
            metric, _, _ = logspiral_example()
            theta0 = float(task.get('theta0', 0.0))
            r0 = float(task.get('r0', 1.0))
            result = logspiral_geodesic(metric, theta0, r0, grid_from_config(task.get('grid')), options)
            low, high = task.get('r_window', [0.05, 1.0])
            rows = []
            for point in result.path.points:
                if point.r <= 0:
                    continue
                predicted = float(metric.geodesic_angle(theta0, r0, point.r))
                deviation = metric.boundary.distance(point.y, predicted)
                rows.append({'r': point.r, 'theta': point.y, 'theta_predicted': predicted, 'deviation': deviation,
                             'in_window': low <= point.r <= high})
            self.writer.write_csv(self.output(task, index, '.csv'), rows)
            window = [row for row in rows if row['in_window']]
            worst = max(window, key=lambda row: row['deviation']) if window else None
            report = {'length': result.value, 'r0': r0, 'theta0': theta0, 'residual': result.residual,
                      'max_deviation': None if worst is None else worst['deviation']}
            self.writer.write_json(self.output(task, index, '.json'), report)
            if worst is not None and worst['deviation'] > float(task.get('max_deviation', 0.05)):
                raise InvariantViolation(f"Spiral trace deviates by {worst['deviation']:.4g} rad", pair=worst)
            return report
        spec = self.scenario.metrics[task['metric']]
        start = parse_point(spec.boundary, task['from'])
        end = parse_point(spec.boundary, task['to'])
        result = chart_distance(spec, start, end, replace(self.distance_options(task), method='refined'))
        if result.path is None:
            rows = [{'index': 0, 'y': start.y, 'r': start.r}, {'index': 1, 'y': end.y, 'r': end.r}]
        else:
            rows = [{'index': k, 'y': p.y, 'r': p.r} for k, p in enumerate(result.path.points)]
        self.writer.write_csv(self.output(task, index, '.csv'), rows)
        return {'length': result.value, 'method': result.method, 'vertices': len(rows)}

    def run_sandwich_verify(self, task, index):
        """Check A (|r - r'| + min(r, r') d) <= d^c <= B (...) over an (r, r', d_N) grid"""
        spec = self.scenario.metrics[task['metric']]
        if not isinstance(spec, ConicMetricSpec):
            raise InvalidInputError(f"Sandwich verification needs a conic chart, got {spec!r}")
        c = spec.family.scale_at_zero()
        n_r = int(task.get('n_r', 10))
        n_dn = int(task.get('n_dn', 100))
        top = float(task.get('r_max', min(spec.height, 1.0)))
        radii = top * np.arange(1, n_r + 1) / n_r
        d_max = min(spec.boundary.diameter(), math.pi / math.sqrt(c))
        d_ns = np.linspace(0.0, d_max, n_dn)
        r1, r2, d_n = (a.ravel() for a in np.meshgrid(radii, radii, d_ns, indexing='ij'))
        lower, upper = SANDWICH_LOWER, SANDWICH_UPPER
        slack = 1e-12
        if spec.family.is_constant:
            distances = cone_distance_array(c, r1, r2, d_n)
        else:
            constants = calibrate_equivalence(spec, r_max=top)
            lower *= constants.lower
            upper *= constants.upper
            slack = self.tolerances['oracle_rel']
            if spec.boundary.kind != 'circle':
                raise InvalidInputError("Numerical sandwich checks place boundary points on a circle")
            pairs = [(ChartPoint(0.0, float(a)), ChartPoint(float(d / spec.boundary.scale), float(b)))
                     for a, b, d in zip(r1, r2, d_n)]
            distances = np.array([res.value for res in distance_batch(spec, pairs, self.distance_options(task),
                                                                       self.threads)])
        # d_N measured by g_d(0)
        bound = np.abs(r1 - r2) + np.minimum(r1, r2) * math.sqrt(c) * d_n
        low_ok = distances >= lower * bound * (1.0 - slack) - slack
        high_ok = distances <= upper * bound * (1.0 + slack) + slack
        rows = [{'r': a, "r'": b, 'd_N': d, 'distance': dist, 'lower': lower * s, 'upper': upper * s,
                 'inside': bool(lo and hi)}
                for a, b, d, dist, s, lo, hi in zip(r1, r2, d_n, distances, bound, low_ok, high_ok)]
        self.writer.write_csv(self.output(task, index, '.csv'), rows)
        failures = [row for row in rows if not row['inside']]
        report = {'pairs': len(rows), 'violations': len(failures), 'A': lower, 'B': upper}
        if failures:
            raise InvariantViolation(f"{len(failures)} sandwich breaches", pair=failures[0])
        return report

    def run_duality(self, task, index):
        """Inversion duality on the full cone, or completion duality on a completed space"""
        rng = self.rng(index)
        mode = task.get('mode', 'inversion')
        slack = self.tolerances['regression_slack']
        if mode == 'inversion':
            boundary = self.scenario.boundaries[task['boundary']]
            family = family_from_config(task.get('family'))
            options = self.distance_options(task)
            r_range = task.get('r_range', [0.25, 4.0])
            pairs = self._random_pairs(boundary, rng, int(task.get('count', 1000)), r_range)
            report = inversion_duality_check(boundary, family, pairs, task.get('simplified', False), options,
                                             self.threads)
            payload = report.to_dict()
            if task.get('radial'):
                ys = boundary.random_points(rng, int(task.get('radial_count', 100)))
                radial = [(ChartPoint(y, float(a)), ChartPoint(y, float(b)))
                          for y, a, b in zip(ys, rng.uniform(*r_range, len(ys)), rng.uniform(*r_range, len(ys)))]
                simplified = inversion_duality_check(boundary, family, radial, True, options, self.threads)
                self.writer.write_csv(self.output(task, index, '-radial.csv'), simplified.rows)
                payload['radial'] = simplified.to_dict()
                for row in simplified.rows:
                    if abs(row['ratio'] - 1.0) > 1e-9:
                        raise InvariantViolation(f"Radial simplified ratio {row['ratio']!r} differs from 1", pair=row)
        elif mode == 'completion':
            completion = self.scenario.completions[task['completion']]
            pairs = completion_sample_pairs(completion, rng, int(task.get('per_category', 32)))
            report = completion_duality_check(completion, pairs)
            payload = report.to_dict()
        else:
            raise InvalidInputError(f"Unknown duality mode '{mode}'")
        self.writer.write_csv(self.output(task, index, '.csv'), report.rows)
        self.writer.write_json(self.output(task, index, '.json'), payload)
        report.check_bounded()
        if task.get('bracket'):
            report.check_within(task['bracket'][0], task['bracket'][1], slack)
        return payload

    def _ambient(self, task):
        if 'quotient' in task:
            return self.scenario.quotients[task['quotient']]
        return ChartAmbient(self.scenario.metrics[task['metric']], self.distance_options(task), self.threads)

    def _lne_options(self, task):
        overrides = {key: task[key] for key in ('rungs', 'pairs_per_scale', 'height', 'n_radial', 'n_other', 'refine')
                     if key in task}
        seed = Config.DEFAULT_SEED if self.seed is None else int(self.seed)
        return LneOptions.from_tolerances(self.tolerances, seed=seed, **overrides)

    def run_lne_scan(self, task, index):
        """Inner/outer ratio scans with verdict, growth and p-sub-manifold expectations"""
        options = self._lne_options(task)
        kind = task.get('kind', 'ladder')
        extra = {}
        if kind == 'cylinder':
            spec = self.scenario.metrics[task['metric']]
            report = cylinder_lne_check(subset_from_config(task.get('subset', {})), spec, options)
        else:
            submanifold = self.scenario.submanifolds[task['submanifold']]
            ambient = self._ambient(task)
            if kind == 'ladder':
                report = lne_ratio_scan(submanifold, ambient, task.get('scales'), options)
            elif kind == 'local':
                centre = task['centre']
                report = local_lne_scan(submanifold, ambient, (centre['component'], centre['params']), options)
            elif kind == 'global':
                report = global_lne_scan(submanifold, ambient, options)
            elif kind == 'hereditary':
                direct, report = hereditary_check(submanifold, self.scenario.submanifolds[task['within']], ambient,
                                                  options)
                extra['ambient_verdict'] = direct.verdict
                extra['ambient_supremum'] = direct.supremum
            else:
                raise InvalidInputError(f"Unknown LNE scan kind '{kind}'")
            if task.get('check_p') is not None:
                check = check_p_submanifold(submanifold)
                extra['p_submanifold'] = bool(check)
                extra['min_radial'] = check.min_radial
        payload = report.to_dict()
        payload.update(extra)
        self.writer.write_csv(self.output(task, index, '.csv'), report.csv_rows())
        self.writer.write_json(self.output(task, index, '.json'), payload)
        report.check_inner_outer()
        expect = task.get('expect')
        if expect and report.verdict != expect:
            raise InvariantViolation(f"{report.name}: verdict {report.verdict}, expected {expect}",
                                     pair=report.witness)
        if 'p_submanifold' in extra and extra['p_submanifold'] != bool(task['check_p']):
            raise InvariantViolation(f"{report.name}: p-sub-manifold check gave {extra['p_submanifold']}")
        if task.get('growth_range'):
            low, high = task['growth_range']
            if not low <= report.growth <= high:
                raise InvariantViolation(f"{report.name}: growth {report.growth:.4g} outside [{low}, {high}]")
        if not report.within_prediction:
            raise InvariantViolation(f"{report.name}: supremum {report.supremum:.6g} exceeds the predicted "
                                     f"bound {report.predicted:.6g}", pair=report.witness)
        return payload

    def run_quotient_distance(self, task, index):
        """Chain distances on sampled quotient points with metric-axiom and brute-force checks"""
        quotient = self.scenario.quotients[task['quotient']]
        rng = self.rng(index)
        points = sample_quotient_points(quotient, rng, int(task.get('count', 24)),
                                        float(task.get('r_low', 0.05)))
        if task.get('apexes', True):
            points += list(quotient.apexes)
        chain = task.get('chain_check', not quotient.seams)
        rows = []

        def describe(p):
            if isinstance(p, str):
                return {'piece': p, 'y': '', 'r': 0.0}
            return {'piece': p.piece, 'y': p.point.y, 'r': p.point.r}

        matrix = np.zeros((len(points), len(points)))
        for i, a in enumerate(points):
            for j in range(i + 1, len(points)):
                b = points[j]
                d = quotient_distance(quotient, a, b)
                matrix[i, j] = d
                matrix[j, i] = quotient_distance(quotient, b, a)
                row = {f"{k}": v for k, v in describe(a).items()}
                row.update({f"{k}'": v for k, v in describe(b).items()})
                row['distance'] = d
                if chain:
                    row['chain'] = chain_enumeration_distance(quotient, a, b)
                rows.append(row)
        self.writer.write_csv(self.output(task, index, '.csv'), rows)
        symmetry = self.tolerances['symmetry']
        asymmetric = np.abs(matrix - matrix.T) > symmetry * np.maximum(1.0, matrix)
        if np.any(asymmetric):
            i, j = np.argwhere(asymmetric)[0]
            raise InvariantViolation("Asymmetric quotient distance", pair=(points[i], points[j]))
        for row in rows:
            if chain and abs(row['chain'] - row['distance']) > 1e-12 * max(1.0, row['distance']):
                raise InvariantViolation("Apex-graph distance differs from chain enumeration", pair=row)
        triangle = self.tolerances['triangle']
        triples = rng.integers(0, len(points), size=(int(task.get('triples', 200)), 3))
        for i, j, k in triples:
            if matrix[i, k] > matrix[i, j] + matrix[j, k] + triangle * max(1.0, matrix[i, k]):
                raise InvariantViolation("Triangle inequality fails", pair=(points[i], points[j], points[k]))
        return {'points': len(points), 'pairs': len(rows), 'diameter': float(matrix.max())}

    def _grid_points(self, boundary, rng, samples, r_low=0.05, r_high=1.0):
        """samples chart points: a regular angle-radius grid on a circle, random directions otherwise"""
        side = max(2, int(round(math.sqrt(samples))))
        radii = np.linspace(r_low, r_high, side)
        if boundary.kind == 'circle':
            angles = 2.0 * math.pi * np.arange(side) / side
            return [ChartPoint(float(y), float(r)) for y in angles for r in radii]
        ys = boundary.random_points(rng, side * side)
        return [ChartPoint(y, float(radii[k % side])) for k, y in enumerate(ys)]

    def _defect_rows(self, resolution, target, spec, points):
        rows = []
        for p in points:
            rows.append({'y': p.y, 'r': p.r, 'defect': pullback_defect(resolution, target, spec, [p])})
        return rows

    def run_example_replay(self, task, index):
        """Consistency tables of the worked examples"""
        rng = self.rng(index)
        example = task.get('example')
        samples = int(task.get('samples', 100))
        tol = self.tolerances['pullback']
        if example in ('euclidean-blowup', 'infinity-blowup'):
            n = int(task.get('dimension', 2))
            if example == 'euclidean-blowup':
                spec = blowup_pullback_euclidean(n)
                resolution = BlowupAtPoint(spec.boundary)
            else:
                spec = infinity_pullback_euclidean(n)
                resolution = BlowupAtInfinity(spec.boundary)
            rows = self._defect_rows(resolution, euclidean_gram, spec, self._grid_points(spec.boundary, rng, samples))
            value = max(row['defect'] for row in rows)
        elif example == 'log-spiral-pullback':
            metric, resolution, model = logspiral_example()
            rows = self._defect_rows(resolution, metric.cartesian_matrix, model,
                                     self._grid_points(model.boundary, rng, samples))
            value = max(row['defect'] for row in rows)
        elif example == 'conformal-gluing':
            spec = self.scenario.metrics[task['metric']]
            base = spec.base if isinstance(spec, AcMetricSpec) else spec
            top = base.height if math.isfinite(base.height) else 4.0
            rows = []
            for p in self._grid_points(base.boundary, rng, samples, 0.05 * top, top):
                v = Tangent(rng.normal(size=base.boundary.dim), float(rng.normal()))
                rows.append({'y': p.y, 'r': p.r, 'defect': conformal_gluing_residual(base, [p], [v])})
            value = max(row['defect'] for row in rows)
        elif example == 'completion-properties':
            completion = self.scenario.completions[task['completion']]
            properties = completion.check_properties(rng, int(task.get('samples', 32)))
            properties['gluing_residual'] = completion.gluing_residual(rng, int(task.get('samples', 32)))
            self.writer.write_json(self.output(task, index, '.json'), properties)
            if not properties['embedding']:
                raise InvariantViolation("Completion does not embed the interior", pair=properties)
            if properties['near_singular_gap'] > self.tolerances['oracle_rel']:
                raise InvariantViolation(f"Completion changes distances near the finite apexes by "
                                         f"{properties['near_singular_gap']:.4g}", pair=properties)
            if properties['gluing_residual'] > tol:
                raise InvariantViolation(f"Conformal gluing residual {properties['gluing_residual']:.4g}")
            return properties
        else:
            raise InvalidInputError(f"Unknown example '{example}'")
        self.writer.write_csv(self.output(task, index, '.csv'), rows)
        report = {'example': example, 'samples': len(rows), 'max_defect': value}
        self.writer.write_json(self.output(task, index, '.json'), report)
        if value > tol:
            worst = max(rows, key=lambda row: row['defect'])
            raise InvariantViolation(f"{example}: defect {value:.4g} above {tol}", pair=worst)
        return report
