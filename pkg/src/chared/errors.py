"""Exception types shared across the package."""


class CharedError(Exception):
    """Base class for every error raised by this package."""


class EmptySupport(CharedError):
    """An operation needed a nonempty table or distribution and got none."""


class InvalidWeight(CharedError):
    """Mixing weight outside [0, 1]."""


class ZeroMass(CharedError):
    """Total probability mass too small to renormalize or condition on."""


class UnknownContext(CharedError):
    """A toy model was queried at a context it has no conditional for."""


class ProviderUnavailable(CharedError):
    """A provider could not be reached after the configured retries."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class MalformedResponse(CharedError):
    """A provider returned something that cannot be turned into a distribution."""


class LoadError(CharedError):
    """A model document or record store failed to parse or validate."""


class ReplayMiss(CharedError):
    """Replay provider was asked for a prefix that was never recorded."""


class CombinatorialBudgetExceeded(CharedError):
    """Exact enumeration grew past the configured node cap."""


class HorizonMismatch(CharedError):
    """Two string distributions with different horizons cannot be compared."""


class DecodeFinished(CharedError):
    """step() was called on a decoder state that already terminated."""
