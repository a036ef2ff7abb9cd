"""Exception types raised by the calibration engine."""


class No2CalError(Exception):
    """Base class for all errors raised by this package."""


class IngestionError(No2CalError):
    """Malformed input data (bad timestamps, implausible values, bad CSV)."""


class InsufficientData(No2CalError):
    """A window did not meet the required coverage fraction."""

    def __init__(self, achieved: float, required: float | None = None):
        self.achieved = achieved
        self.required = required
        msg = f"window coverage {achieved:.3f}"
        if required is not None:
            msg += f" below required {required:.3f}"
        super().__init__(msg)


class EmptyWindow(No2CalError):
    """A statistical kernel received no samples."""


class BinMismatch(No2CalError):
    """Two histograms do not share identical bin edges."""


class DegenerateVariance(No2CalError):
    """A variance needed as a denominator is zero."""


class OrderingError(No2CalError):
    """A state update arrived out of time order."""


class ConfigError(No2CalError):
    """Invalid network configuration (bad proxies, cyclic dependencies, ...)."""


class ScenarioError(No2CalError):
    """Inconsistent synthetic scenario description."""


class EmptyInput(No2CalError):
    """An operation that needs at least one value received none."""
