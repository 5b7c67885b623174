"""
Command-line entry point for the conic geometry engine
Runs scenario files and lists the bundled scenarios
"""

import argparse
import json
import logging
import sys

from utils.config import Config
from utils.exceptions import ConicGeometryError, InvariantViolation, ScenarioError
from utils.scenario_loader import list_examples, load_scenario
from utils.scenario_runner import ScenarioRunner

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2


def common_options(suppress=False):
    """Global flags; the copy on a subcommand only overrides values given after it"""
    def default(value):
        return argparse.SUPPRESS if suppress else value

    options = argparse.ArgumentParser(add_help=False)
    options.add_argument('--out-dir', default=default(Config.OUT_DIR), help='Directory for CSV/JSON artifacts')
    options.add_argument('--seed', type=int, default=default(None), help='Override the scenario seed')
    options.add_argument('--threads', type=int, default=default(Config.THREADS),
                         help='Worker threads for pair batches')
    options.add_argument('--verbose', action='store_true', default=default(False), help='Log at DEBUG level')
    return options


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        prog='conic_cli',
        description='Conic and asymptotically conic distance experiments driven by JSON scenarios',
        parents=[common_options()],
    )
    commands = parser.add_subparsers(dest='command', required=True)
    run = commands.add_parser('run', help='Run a scenario file', parents=[common_options(suppress=True)])
    run.add_argument('file', help='Scenario JSON file')
    catalog = commands.add_parser('list-examples', help='List bundled scenarios')
    catalog.add_argument('--json', action='store_true', help='Print the catalog as JSON')
    return parser.parse_args(argv)


def setup_logging(verbose=False):
    level = logging.DEBUG if verbose else getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format=Config.LOG_FORMAT,
        handlers=[
            logging.FileHandler(Config.LOG_FILE),
            logging.StreamHandler()
        ],
        force=True
    )


def run_scenario(path, out_dir=None, seed=None, threads=None):
    """
    Load and run one scenario

    Args:
        path (str): Scenario file
        out_dir (str): Artifact root; artifacts go to <out_dir>/<scenario name>/
        seed (int): Seed override
        threads (int): Worker threads

    Returns:
        int: Exit code
    """
    try:
        scenario = load_scenario(path)
        runner = ScenarioRunner(scenario, out_dir, seed, threads)
        runner.run()
    except ScenarioError as e:
        logger.error(f"Scenario error: {str(e)}")
        return EXIT_CONFIG
    except InvariantViolation as e:
        logger.error(f"Invariant violation: {str(e)}")
        return EXIT_VIOLATION
    except ConicGeometryError as e:
        logger.error(f"Invalid scenario input: {str(e)}")
        return EXIT_CONFIG
    if runner.violations:
        for violation in runner.violations:
            logger.error(f"Invariant violation: {str(violation)}")
        return EXIT_VIOLATION
    logger.info(f"Scenario '{scenario.name}' completed: {len(runner.writer.written)} artifacts")
    return EXIT_OK


def print_examples(as_json=False):
    catalog = list_examples()
    if as_json:
        print(json.dumps(catalog, indent=2, sort_keys=True))
        return
    for entry in catalog:
        print(f"{entry['name']:<22} {entry['description']} [{entry['anchor']}]")


def main(argv=None):
    args = parse_args(argv)
    setup_logging(args.verbose)
    if args.command == 'list-examples':
        try:
            print_examples(args.json)
        except ScenarioError as e:
            logger.error(f"Scenario error: {str(e)}")
            return EXIT_CONFIG
        return EXIT_OK
    return run_scenario(args.file, args.out_dir, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
