"""
Scenario CLI test suite
Exit codes, scenario validation, artifacts and run determinism
"""

import pytest
import json
import logging
import os

import conic_cli
from utils.config import Config
from utils.exceptions import ScenarioError
from utils.scenario_loader import list_examples, load_scenario

logger = logging.getLogger(__name__)

SMALL_SCENARIO = {
    "schema_version": 1,
    "name": "small",
    "seed": 11,
    "boundaries": {"circle": {"type": "circle"}},
    "metrics": {
        "cone": {"boundary": "circle", "kind": "conic", "height": 1.0},
        "spindle": {"boundary": "circle", "kind": "suspension", "rho": 0.5}
    },
    "quotients": {
        "pair": {
            "pieces": [{"name": "a", "metric": "cone"}, {"name": "s", "metric": "spindle"}],
            "collapse": [["a", "base", "p"], ["s", "bottom", "p"], ["s", "top", "q"]]
        }
    },
    "tasks": [
        {"type": "distance-batch", "metric": "cone", "pairs": {"count": 20}, "oracle": "euclidean",
         "symmetry": True, "output": "cone-distances"},
        {"type": "sandwich-verify", "metric": "cone", "n_r": 4, "n_dn": 10},
        {"type": "quotient-distance", "quotient": "pair", "count": 8, "triples": 50}
    ]
}


def write_scenario(directory, payload, name='scenario.json'):
    path = os.path.join(str(directory), name)
    with open(path, 'w', encoding='utf-8') as file:
        if isinstance(payload, str):
            file.write(payload)
        else:
            json.dump(payload, file, indent=2)
    return path


def read_tree(root):
    contents = {}
    for folder, _, files in os.walk(root):
        for name in files:
            path = os.path.join(folder, name)
            with open(path, 'rb') as file:
                contents[os.path.relpath(path, root)] = file.read()
    return contents


class TestArguments:
    """Test class for command-line parsing"""

    @pytest.mark.smoke
    @pytest.mark.cli
    def test_global_flags(self):
        logger.info("Starting test_global_flags")
        args = conic_cli.parse_args(['--seed', '5', '--threads', '2', '--out-dir', 'o', 'run', 'x.json'])
        assert (args.command, args.file, args.seed, args.threads, args.out_dir) == ('run', 'x.json', 5, 2, 'o')

    @pytest.mark.cli
    def test_flags_after_run(self):
        args = conic_cli.parse_args(['run', 'x.json', '--out-dir', 'o', '--seed', '5', '--threads', '2', '--verbose'])
        assert (args.file, args.out_dir, args.seed, args.threads, args.verbose) == ('x.json', 'o', 5, 2, True)

    @pytest.mark.cli
    def test_flags_on_both_sides(self):
        args = conic_cli.parse_args(['--seed', '5', '--out-dir', 'early', 'run', 'x.json', '--out-dir', 'late'])
        assert (args.seed, args.out_dir) == (5, 'late')
        assert args.threads == Config.THREADS
        assert args.verbose is False

    @pytest.mark.cli
    def test_flags_after_run_reach_the_run(self, tmp_path):
        path = write_scenario(tmp_path, SMALL_SCENARIO)
        out = str(tmp_path / "late")
        assert conic_cli.main(['run', path, '--out-dir', out, '--threads', '1']) == conic_cli.EXIT_OK
        assert os.path.exists(os.path.join(out, 'small', 'summary.json'))

    @pytest.mark.cli
    def test_command_required(self):
        with pytest.raises(SystemExit):
            conic_cli.parse_args([])


class TestListExamples:
    """Test class for the bundled scenario catalog"""

    @pytest.mark.acceptance
    @pytest.mark.cli
    def test_catalog_json(self, capsys, test_data):
        """
        Test Case: list-examples --json prints every bundled scenario

        Steps:
        1. Run the list-examples command with --json
        2. Parse the output and compare names
        """
        code = conic_cli.main(['list-examples', '--json'])
        assert code == conic_cli.EXIT_OK
        catalog = json.loads(capsys.readouterr().out)
        names = [entry['name'] for entry in catalog]
        assert len(names) >= 6
        assert names == test_data["bundled_scenarios"]
        assert all(entry['description'] and entry['anchor'] for entry in catalog)

    @pytest.mark.cli
    def test_every_bundled_scenario_loads(self):
        for entry in list_examples():
            scenario = load_scenario(os.path.join(Config.SCENARIO_PATH, entry['file']))
            assert scenario.name == entry['name'], f"{entry['file']} should declare the name {entry['name']}"
            assert scenario.tasks, f"{entry['name']} should carry tasks"


class TestScenarioValidation:
    """Test class for scenario errors and their exit codes"""

    @pytest.mark.acceptance
    @pytest.mark.cli
    def test_empty_task_list(self, tmp_path, out_dir):
        path = write_scenario(tmp_path, {"schema_version": 1, "name": "empty", "tasks": []})
        assert conic_cli.run_scenario(path, out_dir) == conic_cli.EXIT_OK
        assert not os.path.exists(os.path.join(out_dir, 'empty')), "An empty scenario should write no artifacts"

    @pytest.mark.acceptance
    @pytest.mark.cli
    def test_malformed_json_reports_line(self, tmp_path, out_dir):
        text = '{\n  "schema_version": 1,\n  "name": "broken",,\n  "tasks": []\n}\n'
        path = write_scenario(tmp_path, text)
        with pytest.raises(ScenarioError) as error:
            load_scenario(path)
        assert error.value.line == 3
        assert f"{path}:3:" in str(error.value)
        assert conic_cli.run_scenario(path, out_dir) == conic_cli.EXIT_CONFIG

    @pytest.mark.acceptance
    @pytest.mark.cli
    def test_undeclared_reference(self, tmp_path, out_dir):
        payload = {"schema_version": 1, "name": "dangling", "seed": 1,
                   "tasks": [{"type": "distance-batch", "metric": "missing"}]}
        path = write_scenario(tmp_path, payload)
        with pytest.raises(ScenarioError) as error:
            load_scenario(path)
        assert "missing" in str(error.value)
        assert error.value.line is not None
        assert conic_cli.run_scenario(path, out_dir) == conic_cli.EXIT_CONFIG

    @pytest.mark.cli
    def test_sampling_task_needs_seed(self, tmp_path):
        payload = {"schema_version": 1, "name": "unseeded",
                   "boundaries": {"circle": {"type": "circle"}},
                   "metrics": {"cone": {"boundary": "circle", "kind": "conic", "height": 1.0}},
                   "tasks": [{"type": "distance-batch", "metric": "cone"}]}
        with pytest.raises(ScenarioError):
            load_scenario(write_scenario(tmp_path, payload))

    @pytest.mark.cli
    def test_unknown_schema_version(self, tmp_path, out_dir):
        path = write_scenario(tmp_path, {"schema_version": 2, "name": "future", "tasks": []})
        assert conic_cli.run_scenario(path, out_dir) == conic_cli.EXIT_CONFIG

    @pytest.mark.cli
    def test_unknown_task_type(self, tmp_path):
        path = write_scenario(tmp_path, {"schema_version": 1, "name": "odd", "tasks": [{"type": "teleport"}]})
        with pytest.raises(ScenarioError):
            load_scenario(path)

    @pytest.mark.cli
    def test_bad_declaration(self, tmp_path, out_dir):
        payload = {"schema_version": 1, "name": "bad", "boundaries": {"klein": {"type": "klein-bottle"}},
                   "tasks": []}
        path = write_scenario(tmp_path, payload)
        assert conic_cli.run_scenario(path, out_dir) == conic_cli.EXIT_CONFIG

    @pytest.mark.cli
    def test_missing_file(self, tmp_path, out_dir):
        assert conic_cli.run_scenario(os.path.join(str(tmp_path), 'nope.json'), out_dir) == conic_cli.EXIT_CONFIG


class TestScenarioRuns:
    """Test class for scenario execution and artifacts"""

    @pytest.mark.cli
    def test_artifacts_and_summary(self, tmp_path, out_dir):
        path = write_scenario(tmp_path, SMALL_SCENARIO)
        assert conic_cli.run_scenario(path, out_dir) == conic_cli.EXIT_OK
        files = sorted(os.listdir(os.path.join(out_dir, 'small')))
        assert files == ['01-sandwich-verify.csv', '02-quotient-distance.csv', 'cone-distances.csv', 'summary.json']
        with open(os.path.join(out_dir, 'small', 'summary.json'), 'r', encoding='utf-8') as file:
            summary = json.load(file)
        assert summary['seed'] == 11
        assert [task['status'] for task in summary['tasks']] == ['ok', 'ok', 'ok']

    @pytest.mark.cli
    def test_distance_columns(self, tmp_path, out_dir):
        path = write_scenario(tmp_path, SMALL_SCENARIO)
        conic_cli.run_scenario(path, out_dir)
        with open(os.path.join(out_dir, 'small', 'cone-distances.csv'), 'r', encoding='utf-8') as file:
            header = file.readline().strip().split(',')
        assert header == ['y', 'r', "y'", "r'", 'distance', 'method', 'residual', 'snap_error', 'oracle', 'rel_error']

    @pytest.mark.acceptance
    @pytest.mark.cli
    def test_runs_are_byte_identical(self, tmp_path):
        """
        Test Case: two runs with the same seed write identical bytes

        Steps:
        1. Run the scenario into two output directories
        2. Compare every artifact
        """
        path = write_scenario(tmp_path, SMALL_SCENARIO)
        first, second = str(tmp_path / "first"), str(tmp_path / "second")
        assert conic_cli.run_scenario(path, first) == conic_cli.EXIT_OK
        assert conic_cli.run_scenario(path, second, threads=1) == conic_cli.EXIT_OK
        assert read_tree(first) == read_tree(second)

    @pytest.mark.cli
    def test_seed_override_changes_samples(self, tmp_path):
        path = write_scenario(tmp_path, SMALL_SCENARIO)
        default, overridden = str(tmp_path / "default"), str(tmp_path / "overridden")
        conic_cli.run_scenario(path, default)
        conic_cli.run_scenario(path, overridden, seed=99)
        name = os.path.join('small', 'cone-distances.csv')
        assert read_tree(default)[name] != read_tree(overridden)[name]

    @pytest.mark.cli
    def test_violation_exit_code(self, tmp_path, out_dir):
        payload = {"schema_version": 1, "name": "strict", "seed": 3,
                   "boundaries": {"circle": {"type": "circle"}},
                   "tasks": [{"type": "duality", "mode": "inversion", "boundary": "circle", "count": 20,
                              "bracket": [2.0, 3.0]}]}
        path = write_scenario(tmp_path, payload)
        assert conic_cli.run_scenario(path, out_dir) == conic_cli.EXIT_VIOLATION
        with open(os.path.join(out_dir, 'strict', 'summary.json'), 'r', encoding='utf-8') as file:
            summary = json.load(file)
        assert summary['tasks'][0]['status'] == 'violation'

    @pytest.mark.acceptance
    @pytest.mark.cli
    @pytest.mark.parametrize("name", ["euclidean-cone", "infinity-chart", "quotient-wedge"])
    def test_bundled_scenario_passes(self, name, out_dir):
        path = os.path.join(Config.SCENARIO_PATH, f"{name}.json")
        assert conic_cli.run_scenario(path, out_dir) == conic_cli.EXIT_OK
        assert os.path.exists(os.path.join(out_dir, name, 'summary.json'))
