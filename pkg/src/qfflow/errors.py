"""Exception hierarchy shared by all modules.

Numerical failures derive from ``NumericalFailure`` so the CLI can map them to
exit code 3; configuration problems derive from ``ConfigError`` (exit code 2).
"""


class QFError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(QFError, ValueError):
    pass


class DomainError(QFError, ValueError):
    """A point lies outside the open unit disk (or too close to its rim)."""


class ResourceError(QFError, ValueError):
    """A request exceeds a resource guard."""


class NumericalFailure(QFError, RuntimeError):
    pass


class ConstructionError(NumericalFailure):
    pass


class NonTermination(NumericalFailure):
    pass


class BoundaryZero(NumericalFailure):
    pass


class NonConvergence(NumericalFailure):
    pass


class IndefiniteLinearization(NumericalFailure):
    pass


class MeshError(NumericalFailure):
    pass


class StepFailure(NumericalFailure):
    pass


class NotHyperbolic(NumericalFailure):
    pass


class ContinuationFailure(NumericalFailure):
    pass


class InsufficientSamples(NumericalFailure):
    pass


class LineSearchFailure(NumericalFailure):
    pass


class Degenerate(NumericalFailure):
    pass


class StepTooLarge(NumericalFailure):
    pass


class StepCollapse(NumericalFailure):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last
