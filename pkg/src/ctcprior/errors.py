"""Exception hierarchy shared by every module in the package."""


class CTCPriorError(Exception):
    """Base class for all errors raised by ctcprior."""


class InvalidToken(CTCPriorError, ValueError):
    pass


class EmptySequence(CTCPriorError, ValueError):
    pass


class ShapeMismatch(CTCPriorError, ValueError):
    pass


class InfeasibleLength(CTCPriorError, ValueError):
    """The number of frames is too small for any path to reach the transcript."""


class ZeroLikelihood(CTCPriorError, ArithmeticError):
    """Every feasible path has score -inf."""


class OracleTooLarge(CTCPriorError, ValueError):
    pass


class NotNormalized(CTCPriorError, ValueError):
    pass


class EmptyAccumulator(CTCPriorError, ValueError):
    pass


class NoFeasiblePath(CTCPriorError, ArithmeticError):
    pass


class UnsegmentableTranscript(CTCPriorError, ValueError):
    pass


class TierMismatch(CTCPriorError, ValueError):
    pass


class EmptyCorpus(CTCPriorError, ValueError):
    pass


class Diverged(CTCPriorError, ArithmeticError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class FormatError(CTCPriorError, ValueError):
    """Base class for file-format errors."""


class BadMagic(FormatError):
    pass


class MalformedHeader(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class TrailingData(FormatError):
    pass
