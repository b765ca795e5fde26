"""Exception types raised by the simulator."""


class TrpsError(Exception):
    """Base class for all simulator errors."""


class InvariantViolation(TrpsError):
    """A numerical invariant (trace, positivity, non-negativity, ...) failed."""


class StepTooLarge(TrpsError, ValueError):
    pass


class DegenerateRates(TrpsError):
    """gamma_plus and gamma_minus coincide; the closed forms need their limit."""


class OutOfTrajectory(TrpsError, ValueError):
    pass


class TrajectoryTooCoarse(TrpsError, ValueError):
    pass


class NotConverged(TrpsError):
    pass


class GridTooNarrow(TrpsError, ValueError):
    pass


class NoPeaks(TrpsError):
    pass


class ConfigError(TrpsError, ValueError):
    """Configuration schema violation; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
