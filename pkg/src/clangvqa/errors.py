"""Exception types shared across the package."""


class ClangError(Exception):
    """Base class for all errors raised by clangvqa."""


class DimensionError(ClangError, ValueError):
    pass


class NumericError(ClangError, ArithmeticError):
    pass


class ContractError(ClangError, ValueError):
    """A documented precondition of an operation was violated."""


class BackwardError(ContractError):
    pass


class LayoutError(ClangError, ValueError):
    pass


class ScheduleError(ClangError, ValueError):
    pass


class VocabularyError(ClangError, KeyError):
    pass


class SpecError(ClangError, ValueError):
    pass


class FormatError(ClangError, ValueError):
    pass


class CorruptionError(FormatError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CheckpointError(ClangError, ValueError):
    pass


class TrainingError(ClangError, RuntimeError):
    pass
