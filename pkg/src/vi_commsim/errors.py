"""Exception types shared across the package."""


class VicommError(Exception):
    """Base class for all errors raised by vi_commsim."""


class DimensionError(VicommError, ValueError):
    """A vector or matrix has the wrong shape for the requested operation."""


class ConfigError(VicommError, ValueError):
    """Invalid configuration value (bad divisibility, out-of-range parameter, ...)."""


class EnumerationSizeError(VicommError, ValueError):
    """Exact permutation enumeration was requested for a space that is too large."""


class PowerIterationError(VicommError, RuntimeError):
    """Power iteration failed to converge within its iteration budget."""

    def __init__(self, msg, iterations=None, estimate=None, last_change=None):
        super().__init__(msg)
        self.iterations = iterations
        self.estimate = estimate
        self.last_change = last_change


class LinearSolveError(VicommError, RuntimeError):
    """Direct solve for the exact solution failed or left a large residual."""


class DivergenceError(VicommError, RuntimeError):
    """A solver produced non-finite values or an exploding iterate.

    Carries the round index and the offending norm; the simulator attaches the
    partial metrics collected so far under ``partial_metrics``.
    """

    def __init__(self, round_index, norm):
        super().__init__(
            f"divergence detected at round {round_index}: ||z|| = {norm!r}"
        )
        self.round_index = round_index
        self.norm = norm
        self.partial_metrics = None


class DivergedSeedsError(VicommError, RuntimeError):
    """Cross-seed aggregation found diverged runs."""

    def __init__(self, seeds):
        super().__init__(f"runs diverged for seeds {sorted(seeds)}")
        self.seeds = sorted(seeds)
