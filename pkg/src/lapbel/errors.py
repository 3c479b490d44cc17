"""Exception hierarchy.

Errors are grouped by how the command line reports them: configuration
problems, solver failures and everything else.
"""


class LapbelError(Exception):
    """Base class for all package errors."""


class ConfigError(LapbelError):
    """Malformed or incomplete experiment configuration."""


class ConfigParse(ConfigError):
    pass


class UnknownExperiment(ConfigError):
    pass


class GeometryError(LapbelError):
    pass


class PointOutsideTubularNeighborhood(GeometryError):
    pass


class DegenerateTriangle(GeometryError):
    pass


class LevelTooLarge(GeometryError):
    pass


class InvalidAtomNode(LapbelError):
    pass


class IncompatibleReference(LapbelError):
    pass


class EvaluationAtSingularity(LapbelError):
    pass


class SolverError(LapbelError):
    """Any failure of a linear or optimization solve."""


class NoConvergence(SolverError):
    pass


class SingularMatrix(SolverError):
    pass


class PdasNoConvergence(SolverError):
    pass


class SlaterViolation(SolverError):
    pass


class SaddleSolveFailure(SolverError):
    pass


class ZeroError(LapbelError):
    """An exactly vanishing error makes the convergence order undefined."""


class InsufficientData(LapbelError):
    pass
