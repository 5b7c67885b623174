"""
Pytest configuration and fixtures
Contains shared fixtures, logging setup and custom markers
"""

import pytest
import json
import math
import os
import logging
from datetime import datetime

import numpy as np

from geometry.boundary_manifold import Circle
from geometry.conic_metrics import AcMetricSpec, ConicMetricSpec, Constant
from utils.config import Config

# Configure logging
logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
    format=Config.LOG_FORMAT,
    handlers=[
        logging.FileHandler('test_execution.log'),
        logging.StreamHandler()
    ]
)

logger = logging.getLogger(__name__)


@pytest.fixture(scope="session")
def test_data():
    """
    Load test data from JSON file

    Returns:
        dict: Oracle values, frozen brackets and acceptance constants
    """
    try:
        with open(Config.TEST_DATA_PATH, 'r', encoding='utf-8') as file:
            data = json.load(file)
            logger.info("Test data loaded successfully")
            return data
    except FileNotFoundError:
        logger.error(f"Test data file not found: {Config.TEST_DATA_PATH}")
        raise
    except json.JSONDecodeError as e:
        logger.error(f"Invalid JSON in test data file: {str(e)}")
        raise


@pytest.fixture(scope="function")
def rng():
    """Seeded generator; every test starts from the same state"""
    return np.random.default_rng(Config.DEFAULT_SEED)


@pytest.fixture(scope="session")
def circle():
    return Circle(2.0 * math.pi)


@pytest.fixture(scope="session")
def flat_cone(circle):
    """Euclidean plane in blow-up coordinates, cut at r = 1"""
    return ConicMetricSpec(circle, 1.0, Constant())


@pytest.fixture(scope="session")
def flat_end(circle):
    """Euclidean plane near infinity"""
    return AcMetricSpec(ConicMetricSpec(circle, math.inf, Constant()))


@pytest.fixture(scope="function")
def frozen_brackets(test_data):
    """
    Get the calibrated regression brackets

    Args:
        test_data (dict): Test data dictionary

    Returns:
        dict: Brackets and their slack
    """
    return test_data["frozen_brackets"]


@pytest.fixture(scope="function")
def out_dir(tmp_path):
    """Artifact directory isolated per test"""
    return str(tmp_path / "out")


@pytest.fixture(autouse=True)
def setup_test_environment(request):
    """
    Setup test environment before each test
    This fixture runs automatically before each test
    """
    os.makedirs(os.path.join(Config.ROOT_PATH, 'reports'), exist_ok=True)

    logger.info(f"Starting test: {request.node.nodeid}")

    yield

    logger.info(f"Completed test: {request.node.nodeid}")


def pytest_configure(config):
    """Configure pytest with custom markers"""
    config.addinivalue_line(
        "markers", "smoke: mark test as smoke test"
    )
    config.addinivalue_line(
        "markers", "regression: mark test as regression test against frozen values"
    )
    config.addinivalue_line(
        "markers", "acceptance: mark test as an acceptance criterion check"
    )
    config.addinivalue_line(
        "markers", "boundary: mark test as boundary manifold test"
    )
    config.addinivalue_line(
        "markers", "metrics: mark test as conic metric test"
    )
    config.addinivalue_line(
        "markers", "distance: mark test as distance engine test"
    )
    config.addinivalue_line(
        "markers", "quotient: mark test as quotient and completion test"
    )
    config.addinivalue_line(
        "markers", "lne: mark test as LNE analysis test"
    )
    config.addinivalue_line(
        "markers", "cli: mark test as scenario CLI test"
    )


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """
    Hook to capture test results and log them
    """
    # Execute all other hooks to obtain the report object
    outcome = yield
    rep = outcome.get_result()

    setattr(item, f"rep_{rep.when}", rep)

    if rep.when == "call":
        if rep.failed:
            logger.error(f"Test failed: {item.nodeid}")
        elif rep.passed:
            logger.info(f"Test passed: {item.nodeid}")


def pytest_html_report_title(report):
    """Customize HTML report title"""
    report.title = "Conic Geometry Engine Test Report"


def pytest_html_results_summary(prefix, summary, postfix):
    """Customize HTML report summary"""
    prefix.extend([
        "<h2>Test Environment Information</h2>",
        f"<p>Default seed: {Config.DEFAULT_SEED}</p>",
        f"<p>Threads: {Config.THREADS}</p>",
        f"<p>Grid: {Config.GRID_N_R} x {Config.GRID_N_Y}</p>",
        f"<p>Test Execution Date: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}</p>"
    ])
