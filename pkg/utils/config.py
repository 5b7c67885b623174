"""
Configuration module for the conic geometry engine
Contains all configuration settings, tolerances and constants
"""

import os
from dotenv import load_dotenv

from utils.exceptions import InvalidInputError

# Load environment variables from .env file
load_dotenv()


class Config:
    """Configuration class containing all engine settings"""

    # Paths
    ROOT_PATH = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
    DATA_PATH = os.path.join(ROOT_PATH, 'data')
    TEST_DATA_PATH = os.path.join(DATA_PATH, 'test_data.json')
    SCENARIO_PATH = os.path.join(DATA_PATH, 'scenarios')
    MESH_PATH = os.path.join(DATA_PATH, 'meshes')

    # Output settings
    OUT_DIR = os.getenv('CONIC_OUT_DIR', os.path.join(ROOT_PATH, 'reports'))
    LOG_FILE = os.getenv('CONIC_LOG_FILE', 'conic_run.log')

    # Logging settings
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    # Run settings
    DEFAULT_SEED = int(os.getenv('CONIC_SEED', '20240611'))
    THREADS = int(os.getenv('CONIC_THREADS', '1'))
    SCHEMA_VERSION = 1

    # Grid defaults
    GRID_N_R = int(os.getenv('CONIC_GRID_NR', '64'))
    GRID_N_Y = int(os.getenv('CONIC_GRID_NY', '64'))

    # Numerical tolerances (overridable per scenario)
    TOLERANCES = {
        'quadrature_rtol': 1e-8,
        'quadrature_max_levels': 20,
        'refine_tol': 1e-7,
        'refine_max_iter': 500,
        'refine_max_vertices': 48,
        'radial_ratio': 0.9,
        'stencil': 2,
        'symmetry': 1e-9,
        'triangle': 1e-9,
        'mesh_snap': 1e-12,
        'pullback': 1e-9,
        'oracle_rel': 0.02,
        'growth_tol': 1.5,
        'diverging_run': 3,
        'noise_tol': 0.02,
        'ladder_rungs': 8,
        'pairs_per_scale': 24,
        'inner_outer_slack': 1e-6,
        'seam_samples': 256,
        'apex_samples': 32,
        'regression_slack': 0.10,
    }

    @classmethod
    def get_tolerances(cls, overrides=None):
        """
        Get the tolerance table with scenario overrides applied

        Args:
            overrides (dict): Tolerance values replacing the defaults

        Returns:
            dict: Merged tolerance table
        """
        tolerances = dict(cls.TOLERANCES)
        for key, value in (overrides or {}).items():
            if key not in tolerances:
                raise InvalidInputError(f"Unknown tolerance '{key}'")
            tolerances[key] = type(tolerances[key])(value)
        return tolerances

    @classmethod
    def tolerance(cls, key):
        """Get a single default tolerance"""
        return cls.TOLERANCES[key]
