"""Exception hierarchy.  The CLI maps these onto exit codes 1/2/3."""


class GaplineError(Exception):
    pass


class ValidationError(GaplineError, ValueError):
    """Bad input: malformed spec, out-of-class function, mismatched grids."""


class GridMismatch(ValidationError):
    pass


class ClassViolation(ValidationError):
    """A function fails its class constraint.  ``where`` locates the failure."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class UnsortedKnots(ValidationError):
    pass


class SolverError(GaplineError, RuntimeError):
    pass


class MoreThanTwoCrossings(SolverError):
    pass


class PropertyViolation(GaplineError):
    """A checked inequality or identity failed beyond tolerance."""
