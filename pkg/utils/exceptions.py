"""
Exception hierarchy for the conic geometry engine
"""


class ConicGeometryError(Exception):
    """Base class for every engine error"""


class InvalidInputError(ConicGeometryError, ValueError):
    """A point, parameter or declaration is not valid for the object it targets"""


class SingularEvaluationError(ConicGeometryError):
    """Evaluation requested on a singular locus where the quantity is undefined"""


class DomainError(ConicGeometryError):
    """A curve or point leaves the domain of a chart"""


class UnsupportedFamilyError(ConicGeometryError):
    """Operation is not available for the given metric family or boundary kind"""


class InvalidGridError(ConicGeometryError):
    """Grid discretization incompatible with the metric it discretizes"""


class NoPathError(ConicGeometryError):
    """No path connects the requested endpoints"""


class ScenarioError(ConicGeometryError):
    """Scenario file could not be parsed or references undeclared names"""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        location = ''
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class InvariantViolation(ConicGeometryError):
    """A checked metric invariant failed; carries the offending pair"""

    def __init__(self, message, pair=None):
        self.pair = pair
        super().__init__(message if pair is None else f"{message} (pair: {pair})")
