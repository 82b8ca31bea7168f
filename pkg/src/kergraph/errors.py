"""Exception types raised across the package."""


class KergraphError(Exception):
    """Base class for all package errors."""


class DegenerateData(KergraphError, ValueError):
    pass


class NonFinite(KergraphError, ArithmeticError):
    pass


class NonPositiveKernel(KergraphError, ValueError):
    pass


class DimensionMismatch(KergraphError, ValueError):
    pass


class LengthMismatch(KergraphError, ValueError):
    pass


class SvdFailure(KergraphError, RuntimeError):
    pass


class SingularSystem(KergraphError, RuntimeError):
    pass


class EigenFailure(KergraphError, RuntimeError):
    pass


class NegativeInput(KergraphError, ValueError):
    pass


class ParseError(KergraphError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RaggedRows(ParseError):
    pass


class MissingLabelColumn(KergraphError, KeyError):
    pass


class IoError(KergraphError, OSError):
    pass


class StageError(KergraphError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
