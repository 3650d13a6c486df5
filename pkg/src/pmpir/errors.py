"""Exception hierarchy shared by every module."""


class PmpirError(Exception):
    """Base class for all errors raised by this package."""


class FieldError(PmpirError, ValueError):
    pass


class ModulusMismatchError(FieldError):
    pass


class ShapeError(PmpirError, ValueError):
    pass


class SingularMatrixError(PmpirError, ArithmeticError):
    pass


class InconsistentSystemError(PmpirError, ArithmeticError):
    pass


class RankDeficientError(PmpirError, ArithmeticError):
    """The system has more than one solution."""


class ParameterError(PmpirError, ValueError):
    """Code or scheme parameters violate a construction constraint."""


class EncodingMatrixError(ParameterError):
    pass


class RepairError(PmpirError):
    pass


class NodeStateError(PmpirError):
    """A dead node was read, or a live node was treated as failed."""


class FormatError(PmpirError, ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DecodeError(PmpirError):
    pass


class NotDecodableError(DecodeError):
    """The retrieval equations do not determine the desired records uniquely."""


class ExperimentFailure(PmpirError):
    def __init__(self, message, seed=None):
        if seed is not None:
            message = f"{message} [trial seed {seed}]"
        super().__init__(message)
        self.seed = seed
