"""Exception hierarchy.

``ValidationError`` subclasses signal bad inputs (CLI exit code 1); the rest
are runtime failures (exit code 2).
"""


class OmnisalError(Exception):
    pass


class ValidationError(OmnisalError, ValueError):
    pass


class ZeroMass(ValidationError):
    """Map has zero total mass and cannot be normalized."""


class ShapeMismatch(ValidationError):
    pass


class InvalidFov(ValidationError):
    pass


class InvalidInterval(ValidationError):
    pass


class UnsupportedMode(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class BiasShapeMismatch(ShapeMismatch):
    pass


class MissingLatitude(ValidationError):
    pass


class ZeroVariance(ValidationError):
    pass


class NoFixations(ValidationError):
    pass


class DegenerateSet(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class RangeError(ParseError):
    pass


class Divergence(OmnisalError):
    pass


class IoError(OmnisalError, OSError):
    pass
