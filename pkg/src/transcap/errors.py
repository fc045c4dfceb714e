"""Exception hierarchy shared by all transcap modules."""


class TranscapError(Exception):
    """Base class for every error raised by this package."""


class HorizonError(TranscapError, IndexError):
    """A slot index lies beyond the horizon of a table or process."""


class ModelError(TranscapError, ValueError):
    """A network or MAC model was built from inconsistent inputs."""


class ParameterError(TranscapError, ValueError):
    """A numeric parameter is outside its admissible range."""


class CapacityError(TranscapError):
    """A state space grew beyond the configured cap."""

    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count


class ConnectivityError(TranscapError):
    """A source-destination pair has no path at the given range."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class NumericError(TranscapError, ArithmeticError):
    """A numerical routine failed to converge or hit a singular system."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
