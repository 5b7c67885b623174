"""
Scenario loader module
Parses JSON scenario files, checks their schema and resolves every named declaration
"""

import glob
import json
import logging
import os
from dataclasses import dataclass, field

from geometry.boundary_manifold import geometry_from_config
from geometry.conic_metrics import metric_from_config
from geometry.lne_analysis import submanifold_from_config
from geometry.quotient_completion import build_completion, completed_plane, plane_space, quotient_from_config
from utils.config import Config
from utils.exceptions import ConicGeometryError, ScenarioError

logger = logging.getLogger(__name__)

TASK_TYPES = ('distance-batch', 'geodesic', 'sandwich-verify', 'duality', 'lne-scan', 'quotient-distance',
              'example-replay')
SAMPLING_TASKS = ('distance-batch', 'duality', 'lne-scan', 'quotient-distance')

# Task keys that name declarations, and the section they must resolve in
REFERENCES = {
    'metric': 'metrics',
    'boundary': 'boundaries',
    'quotient': 'quotients',
    'completion': 'completions',
    'submanifold': 'submanifolds',
}


@dataclass
class Scenario:
    """A parsed scenario with its declarations built"""
    name: str
    path: str
    description: str = ''
    anchor: str = ''
    seed: int = None
    tolerances: dict = field(default_factory=dict)
    boundaries: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    quotients: dict = field(default_factory=dict)
    completions: dict = field(default_factory=dict)
    submanifolds: dict = field(default_factory=dict)
    tasks: list = field(default_factory=list)


def _line_of(text, token):
    """1-based line of the first occurrence of a quoted token, or None"""
    needle = json.dumps(token)
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


def read_scenario_file(path):
    """Raw scenario payload and text; JSON errors carry the line number"""
    try:
        with open(path, 'r', encoding='utf-8') as file:
            text = file.read()
    except FileNotFoundError:
        logger.error(f"Scenario file not found: {path}")
        raise ScenarioError("file not found", path)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        logger.error(f"Invalid JSON in scenario {path}: {str(e)}")
        raise ScenarioError(e.msg, path, e.lineno)
    if not isinstance(payload, dict):
        raise ScenarioError("top level must be an object", path, 1)
    return payload, text


def _build_section(payload, text, path, section, builder):
    built = {}
    for name, declaration in payload.get(section, {}).items():
        try:
            built[name] = builder(name, declaration)
        except ConicGeometryError as e:
            raise ScenarioError(f"{section}.{name}: {str(e)}", path, _line_of(text, name))
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError(f"{section}.{name}: invalid declaration ({e!r})", path, _line_of(text, name))
    return built


def load_scenario(path):
    """
    Load and validate a scenario file

    Args:
        path (str): Scenario JSON path

    Returns:
        Scenario: Built declarations and the task list
    """
    payload, text = read_scenario_file(path)
    version = payload.get('schema_version')
    if version != Config.SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version!r}, expected {Config.SCHEMA_VERSION}",
                            path, _line_of(text, 'schema_version'))
    if 'name' not in payload:
        raise ScenarioError("missing scenario name", path)
    tasks = payload.get('tasks', [])
    if not isinstance(tasks, list):
        raise ScenarioError("tasks must be a list", path, _line_of(text, 'tasks'))
    for index, task in enumerate(tasks):
        if task.get('type') not in TASK_TYPES:
            raise ScenarioError(f"task {index}: unknown type {task.get('type')!r}", path,
                                _line_of(text, task.get('type', 'tasks')))
    if any(task['type'] in SAMPLING_TASKS for task in tasks) and payload.get('seed') is None:
        raise ScenarioError("sampling tasks need a seed", path, _line_of(text, 'tasks'))
    try:
        tolerances = Config.get_tolerances(payload.get('tolerances'))
    except ConicGeometryError as e:
        raise ScenarioError(str(e), path, _line_of(text, 'tolerances'))

    base_dir = os.path.dirname(os.path.abspath(path))
    boundaries = _build_section(payload, text, path, 'boundaries',
                                lambda name, d: geometry_from_config(d, base_dir))
    metrics = _build_section(payload, text, path, 'metrics', lambda name, d: metric_from_config(d, boundaries))

    def quotient(name, declaration):
        if declaration.get('builtin') == 'plane':
            return plane_space(declaration.get('seam_samples', tolerances['seam_samples']))
        return quotient_from_config(declaration, metrics, name)

    quotients = _build_section(payload, text, path, 'quotients', quotient)

    def completion(name, declaration):
        if declaration.get('builtin') == 'plane':
            return completed_plane(declaration.get('seam_samples', tolerances['seam_samples']))
        if declaration.get('quotient') not in quotients:
            raise ScenarioError(f"completions.{name}: undeclared quotient '{declaration.get('quotient')}'",
                                path, _line_of(text, name))
        return build_completion(quotients[declaration['quotient']], declaration.get('labels'))

    completions = _build_section(payload, text, path, 'completions', completion)
    submanifolds = _build_section(payload, text, path, 'submanifolds',
                                  lambda name, d: submanifold_from_config(d, boundaries, quotients))
    sections = {'metrics': metrics, 'boundaries': boundaries, 'quotients': quotients,
                'completions': completions, 'submanifolds': submanifolds}
    for index, task in enumerate(tasks):
        for key, section in REFERENCES.items():
            if key in task and task[key] not in sections[section]:
                if key == 'metric' and task[key] in quotients:
                    continue
                raise ScenarioError(f"task {index} ({task['type']}): undeclared {key} '{task[key]}'",
                                    path, _line_of(text, task[key]))
    scenario = Scenario(payload['name'], path, payload.get('description', ''), payload.get('anchor', ''),
                        payload.get('seed'), tolerances, boundaries, metrics, quotients, completions,
                        submanifolds, tasks)
    logger.info(f"Loaded scenario '{scenario.name}' with {len(tasks)} tasks from {path}")
    return scenario


def list_examples(directory=None):
    """
    Catalog of bundled scenarios

    Returns:
        list: {'name', 'file', 'description', 'anchor'} per scenario, sorted by name
    """
    directory = directory or Config.SCENARIO_PATH
    catalog = []
    for path in sorted(glob.glob(os.path.join(directory, '*.json'))):
        payload, _ = read_scenario_file(path)
        catalog.append({'name': payload.get('name'), 'file': os.path.basename(path),
                        'description': payload.get('description', ''), 'anchor': payload.get('anchor', '')})
    return sorted(catalog, key=lambda entry: entry['name'])
