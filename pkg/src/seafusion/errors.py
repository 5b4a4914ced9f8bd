"""Exception hierarchy shared by all seafusion modules."""


class SeafusionError(Exception):
    """Base class for every error raised by this package."""


class ParseError(SeafusionError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)


class DegenerateCalibrationError(SeafusionError):
    pass


class DegeneratePixelError(SeafusionError):
    pass


class DegenerateFrustumError(SeafusionError):
    pass


class InvalidPatchError(SeafusionError, ValueError):
    pass


class DimensionError(SeafusionError, ValueError):
    pass


class InvalidCostError(SeafusionError, ValueError):
    pass


class NumericalFailureError(SeafusionError, ArithmeticError):
    pass


class SequencingError(SeafusionError):
    """Timestamps or frame indices went backwards."""


class InvalidOrientationError(SeafusionError, ValueError):
    pass


class InvalidClusterError(SeafusionError, ValueError):
    pass


class InvalidScenarioError(SeafusionError, ValueError):
    pass


class ConfigError(SeafusionError):
    pass


class LookupFrameError(SeafusionError, LookupError):
    pass
