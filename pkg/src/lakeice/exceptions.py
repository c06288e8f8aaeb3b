"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class LakeIceError(Exception):
    exit_code = 1


class ValidationError(LakeIceError, ValueError):
    """Malformed input: bad geometry, bad file, inconsistent arguments."""

    exit_code = 2


class ParseError(ValidationError):
    pass


class InvalidGeometryError(ValidationError):
    pass


class GeometryMismatchError(ValidationError):
    pass


class NumericError(LakeIceError, ArithmeticError):
    """A numerical procedure failed (singular fit, no convergence, ...)."""

    exit_code = 3


class SingularFitError(NumericError):
    pass


class SingularAtmosphereError(NumericError):
    pass


class ConvergenceError(NumericError):
    pass


class InsufficientDataError(LakeIceError):
    exit_code = 4
