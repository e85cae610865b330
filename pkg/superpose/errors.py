"""Exception hierarchy shared by the library and the CLI."""


class SuperposeError(Exception):
    """Base class for every error raised by superpose."""


class InputError(SuperposeError, ValueError):
    """Invalid arguments, unreadable files or mismatched grids."""


class TruncationError(SuperposeError, ValueError):
    """No integer source allocation reaches the requested N."""

    def __init__(self, message: str, deficit: int):
        super().__init__(message)
        self.deficit = deficit


class DegenerateBasisError(SuperposeError, ArithmeticError):
    """The least-squares basis for the alpha refit vanishes on the grid."""


class BoundError(SuperposeError, ArithmeticError):
    """A term of the uncertainty bound is nonpositive where it must be positive."""


class CalibrationError(SuperposeError):
    """IRF calibration could not produce a usable model."""


class EvaluationError(SuperposeError, ValueError):
    """Reconstruction quality cannot be computed for the given inputs."""
