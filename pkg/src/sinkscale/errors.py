"""Exception hierarchy shared by every sinkscale module."""


class SinkscaleError(Exception):
    """Base class for all library errors."""


class InvalidInstance(SinkscaleError, ValueError):
    """Input matrix or targets violate a structural requirement."""


class ZeroMarginal(SinkscaleError):
    """A row or column sum about to be divided by is zero; SK is undefined."""


class NonFinite(SinkscaleError):
    """Direct-domain iterate overflowed, underflowed or lost support.

    Callers should retry with the log-domain engine.
    """


class NotStandardized(SinkscaleError, ValueError):
    """Neither all row sums nor all column sums equal one."""


class AllZeroKernel(SinkscaleError):
    """Every Gibbs kernel entry underflowed to zero."""


class EmptySupport(SinkscaleError):
    """A row or column of a log-domain matrix is entirely -inf."""


class LTooSmall(SinkscaleError, ValueError):
    """Discretization multiplier leaves some floor(L * target) at zero."""


class TooLarge(SinkscaleError, ValueError):
    """Problem size exceeds a hard limit (permanent order, reduced size)."""


class InfeasibleWindow(SinkscaleError, ValueError):
    """Block-family constraints cannot be met; ``condition`` names which one."""

    def __init__(self, condition, message):
        super().__init__(f"condition {condition}: {message}")
        self.condition = condition


class BadDim(SinkscaleError, ValueError):
    """Requested dimension is not allowed by the instance family."""


class NotScalable(SinkscaleError, ValueError):
    """Support pattern cannot carry the requested marginals."""


class InfeasibleGammaPair(SinkscaleError, ValueError):
    """(gamma, gamma') is not a suffix/prefix sum pair of the targets."""
