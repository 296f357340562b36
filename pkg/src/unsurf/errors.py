"""Exception hierarchy.

``ValidationError`` subclasses map to CLI exit code 1, ``FormatError`` and
``OSError`` to exit code 2.
"""


class UnsurfError(Exception):
    pass


class ValidationError(UnsurfError, ValueError):
    pass


class InputError(ValidationError):
    pass


class GridError(ValidationError):
    pass


class OrientationError(ValidationError):
    pass


class EmptySurfaceError(ValidationError):
    pass


class OutOfBoundsError(ValidationError):
    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = indices


class InsufficientSamplesError(ValidationError):
    pass


class UndefinedStatisticError(ValidationError):
    pass


class RankError(ValidationError):
    pass


class SpecError(ValidationError):
    pass


class FormatError(UnsurfError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class StageError(UnsurfError):
    """Pipeline stage failure; wraps the original error with context."""

    def __init__(self, stage, path, cause):
        super().__init__(f"stage '{stage}' failed (input: {path}): {cause}")
        self.stage = stage
        self.path = path
        self.cause = cause
