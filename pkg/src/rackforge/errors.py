"""Exception types shared across the package."""


class ForgeError(Exception):
    """Base class; ``kind`` is the machine-readable tag printed by the CLI."""

    kind = "ForgeError"


class NoVisibleRack(ForgeError):
    kind = "NoVisibleRack"


class GenerationInfeasible(ForgeError):
    kind = "GenerationInfeasible"


class InvalidSplit(ForgeError):
    kind = "InvalidSplit"


class ShapeError(ForgeError, ValueError):
    kind = "ShapeError"


class EmptyBatch(ForgeError, ValueError):
    kind = "EmptyBatch"


class SequenceTooShort(ForgeError, ValueError):
    kind = "SequenceTooShort"


class UndefinedMetric(ForgeError):
    kind = "UndefinedMetric"


class AlignmentError(ForgeError):
    kind = "AlignmentError"

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class NoOverlap(ForgeError):
    kind = "NoOverlap"

    def __init__(self, message, frame_index=None):
        super().__init__(message)
        self.frame_index = frame_index


class FormatError(ForgeError):
    kind = "FormatError"

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(ForgeError):
    kind = "ValidationError"

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
