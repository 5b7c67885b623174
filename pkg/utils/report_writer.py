"""
Report writer module
Writes CSV tables and JSON reports with a fixed float format so identical runs produce identical bytes
"""

import csv
import json
import logging
import math
import os

import numpy as np

logger = logging.getLogger(__name__)


def plain(value):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe Python values"""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return plain(value.item())
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    if hasattr(value, 'u') and hasattr(value, 't'):
        return [value.u, value.v, value.t]
    return value


def _cell(value):
    value = plain(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return json.dumps(value)
    return value


class ReportWriter:
    """Writes task artifacts under an output directory"""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.written = []

    def _path(self, name):
        path = os.path.join(self.out_dir, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return path

    def write_csv(self, name, rows, fieldnames=None):
        """
        Write a list of dicts as CSV

        Args:
            name (str): File name relative to the output directory
            rows (list): Row dictionaries
            fieldnames (list): Column order, the keys of the first row by default

        Returns:
            str: Written path
        """
        path = self._path(name)
        fieldnames = fieldnames or (list(rows[0].keys()) if rows else [])
        try:
            with open(path, 'w', newline='', encoding='utf-8') as file:
                writer = csv.DictWriter(file, fieldnames=fieldnames, lineterminator='\n')
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: _cell(row.get(k)) for k in fieldnames})
        except OSError as e:
            logger.error(f"Failed to write CSV {path}: {str(e)}")
            raise
        self.written.append(path)
        logger.info(f"Wrote {len(rows)} rows to {path}")
        return path

    def write_json(self, name, payload):
        """Write a JSON report with sorted keys"""
        path = self._path(name)
        try:
            with open(path, 'w', encoding='utf-8') as file:
                json.dump(plain(payload), file, indent=2, sort_keys=True)
                file.write('\n')
        except OSError as e:
            logger.error(f"Failed to write JSON {path}: {str(e)}")
            raise
        self.written.append(path)
        logger.info(f"Wrote report {path}")
        return path
