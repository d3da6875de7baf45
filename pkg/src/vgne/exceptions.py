"""Exception types raised across the package."""


class ContractViolation(ValueError):
    """An input broke a documented precondition (shapes, ranges, structure)."""


class NotStronglyMonotone(ValueError):
    """The sampled pseudo-gradient failed the strong monotonicity certificate."""


class MetricConstructionError(ValueError):
    """The weighted metric could not be built from the declared constants."""


class InadmissibleStep(ValueError):
    """Step size outside the window where the contraction guarantee holds.

    The valid open interval is available as ``interval``.
    """

    def __init__(self, alpha, interval):
        self.alpha = alpha
        self.interval = interval
        lo, hi = interval
        super().__init__(
            f"inadmissible step size {alpha!r}: must lie in ({lo:.6g}, {hi:.6g})"
        )


class DegenerateGame(ValueError):
    """The affine KKT system is singular."""


class DivergenceError(FloatingPointError):
    """Iterates became non-finite."""

    def __init__(self, message, *, agent=None, t=None, k=None):
        self.agent = agent
        self.t = t
        self.k = k
        super().__init__(message)


class NoStableStep(RuntimeError):
    """Step-size backtracking underflowed without finding a stable step."""
