"""Exception hierarchy shared by every stage of the pipeline."""


class FdiDseError(Exception):
    """Base class for all errors raised by fdidse."""


class Divergence(FdiDseError):
    """A simulated trajectory left its sanity band or became non-finite."""


class ParseError(FdiDseError):
    pass


class GridError(FdiDseError):
    """Timestamps of a loaded trajectory are not on a uniform grid."""


class NotPSD(FdiDseError):
    pass


class SingularInnovation(FdiDseError):
    pass


class DegenerateScale(FdiDseError):
    """Median residual scale collapsed to zero."""


class DegenerateMeasurement(FdiDseError):
    pass


class DegenerateDenominator(FdiDseError):
    pass


class ConfigError(FdiDseError):
    def __init__(self, key, reason):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")


class CalibrationError(FdiDseError):
    pass


class MissingArtifact(FdiDseError):
    pass
