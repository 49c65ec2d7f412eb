"""Exception hierarchy shared by every kinshape module.

Each class carries the process exit code the CLI maps it to.
"""


class KinshapeError(Exception):
    exit_code = 1


class InvalidInputError(KinshapeError, ValueError):
    """Non-finite entries, asymmetric input to a symmetric routine, etc."""

    exit_code = 3


class ShapeMismatchError(KinshapeError, ValueError):
    exit_code = 3


class DegenerateShapeError(KinshapeError, ValueError):
    """Landmarks are collinear (or too few) so the shape spans < 2 dims."""

    exit_code = 4


class DegenerateSpectrumError(KinshapeError, ArithmeticError):
    """Singular values too close for the SVD-based backward pass."""

    exit_code = 4


class ConfigError(KinshapeError, ValueError):
    exit_code = 2


class DataError(KinshapeError):
    exit_code = 3


class DataFormatError(DataError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class StateError(KinshapeError, RuntimeError):
    """A backward pass was handed a cache that does not match the params."""

    exit_code = 1


class DivergenceError(KinshapeError, FloatingPointError):
    exit_code = 5

    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"epoch {epoch}: {message}")
        self.epoch = epoch
