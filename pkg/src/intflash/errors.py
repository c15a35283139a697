class IntFlashError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(IntFlashError, ValueError):
    pass


class ParameterError(IntFlashError, ValueError):
    pass


class TensorFormatError(IntFlashError, ValueError):
    pass


class AccumulatorOverflowError(IntFlashError, ArithmeticError):
    """An int32 accumulation could exceed 2**31 - 1 for the given shapes."""


class UndefinedMetricError(IntFlashError, ValueError):
    pass
