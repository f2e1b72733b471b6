"""Exception types shared across the package.

Validation errors (bad parameters or malformed inputs) map to CLI exit
code 2; I/O and model-file errors map to exit code 1.
"""


class CapsegError(Exception):
    """Base class for all package errors."""


class ValidationError(CapsegError):
    """Bad parameters or inputs that violate a documented precondition."""


class InvalidParam(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ImageTooSmall(ValidationError):
    pass


class EmptyManifest(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class EmptyConfusion(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class TooFewFrames(ValidationError):
    pass


class SingleClass(ValidationError):
    pass


class DegenerateGraph(ValidationError):
    pass


class NotFound(CapsegError):
    pass


class UnsupportedFormat(CapsegError):
    pass


class CorruptModel(CapsegError):
    pass


class VersionMismatch(CapsegError):
    pass
