class RcsError(Exception):
    pass


class RcsValidationError(RcsError):
    pass


class InvalidPartitionError(RcsValidationError):
    pass


class DimensionError(RcsValidationError):
    pass


class InvalidStepError(RcsValidationError):
    pass


class InvalidLambdaError(RcsValidationError):
    pass


class NotApplicableError(RcsError):
    pass


class EmptyTraceError(RcsError):
    pass


class DivergenceError(RcsError):
    """Raised when an iterate or objective value stops being finite"""

    def __init__(self, k, message=None):
        self.k = k
        super().__init__(message or f"solver diverged at iteration {k}")


class DatasetError(RcsError):
    pass


class DatasetParseError(DatasetError):
    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")
