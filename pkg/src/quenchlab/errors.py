"""Exception hierarchy.

Every error raised by quenchlab derives from QuenchLabError and carries an
exit code used by the CLI: 2 usage/validation, 3 numerical/accuracy,
4 budget, 5 corrupt file.
"""


class QuenchLabError(Exception):
    exit_code = 1


class UsageError(QuenchLabError):
    """Bad arguments, violated preconditions, invalid configuration."""
    exit_code = 2


class DomainError(UsageError):
    """Point, cylinder or window outside the sampled domain."""
    exit_code = 2


class ValidationError(UsageError):
    """A type invariant failed during construction or config loading."""
    exit_code = 2


class NumericalError(QuenchLabError):
    """Non-finite values, failed linear solves."""
    exit_code = 3


class AccuracyError(NumericalError):
    """Quadrature degraded beyond the declared thresholds."""
    exit_code = 3


class SingularIntegrandError(AccuracyError):
    """The field vanishes on too large a set for a u^-p style integral."""
    exit_code = 3


class StiffnessError(NumericalError):
    """Adaptive time step fell below dt_min."""
    exit_code = 3


class DegenerateFitError(NumericalError):
    """A log-log fit had no usable scaling window."""
    exit_code = 3

    def __init__(self, message, radii=None, counts=None):
        super().__init__(message)
        self.radii = radii
        self.counts = counts


class BudgetError(QuenchLabError):
    """Step or work budget exhausted; partial results may be attached."""
    exit_code = 4

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class CorruptFileError(QuenchLabError):
    """Bad magic, failed checksum or truncated payload."""
    exit_code = 5


class AccuracyWarning(UserWarning):
    """Non-fatal accuracy degradation (value still returned)."""
