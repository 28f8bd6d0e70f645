"""Exception types raised across the package."""


class SedidError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SedidError, ValueError):
    pass


class FormatError(SedidError):
    """A tensor archive could not be decoded.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UndefinedTimestep(SedidError, ValueError):
    pass


class TrainingDiverged(SedidError, RuntimeError):
    def __init__(self, message, step):
        super().__init__(f"{message} (step {step})")
        self.step = step


class SamplerDiverged(SedidError, RuntimeError):
    def __init__(self, t):
        super().__init__(f"non-finite sampler state at t={t}")
        self.t = t


class DegenerateCalibration(SedidError, ValueError):
    pass


class UndefinedMetric(SedidError, ValueError):
    pass
