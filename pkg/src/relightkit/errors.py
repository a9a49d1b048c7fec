"""Exception types shared across relightkit."""


class RelightError(Exception):
    """Base class for all errors raised by relightkit."""


class ObjParseError(RelightError, ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class MeshStructureError(RelightError, ValueError):
    """Mesh connectivity or content is unusable (bad indices, empty mesh)."""


class ShapeError(RelightError, ValueError):
    """Array or raster dimensions do not satisfy an operation's contract."""


class DegenerateInputError(RelightError, ValueError):
    """Input is well-formed but carries no usable signal (all black, empty mask)."""


class NumericalError(RelightError, ArithmeticError):
    pass


class PreconditionError(RelightError, ValueError):
    pass


class ConfigError(RelightError, ValueError):
    pass
