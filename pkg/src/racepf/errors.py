"""Exception hierarchy shared across the package."""


class RacePFError(Exception):
    """Base class for all package-specific errors."""


class InvalidWeights(RacePFError, ValueError):
    """Weight vector is empty, contains negative/NaN/inf entries, or is all-zero."""


class EmptyInput(RacePFError, ValueError):
    """An operation that needs at least one element received none."""


class InvalidParameter(RacePFError, ValueError):
    """A numeric parameter is outside its admissible range."""


class InvalidTime(RacePFError, ValueError):
    """A time point lies outside the interval it must belong to."""


class InvalidStep(RacePFError, ValueError):
    """A requested filter step does not exist in the stored output."""


class InsufficientDraws(RacePFError, ValueError):
    """Too few draws for the requested estimator (the MVUE needs at least two)."""


class EstimatorRangeViolation(RacePFError, RuntimeError):
    """A [0,1]-valued estimate fell outside [0,1] beyond tolerance."""


class ConfigBoundViolation(RacePFError, RuntimeError):
    """An analytic bound baked into a coin configuration is violated at runtime."""


class CapabilityMissing(RacePFError, RuntimeError):
    """The model does not provide what the chosen resampling strategy requires."""


class StoppingBudgetExceeded(RacePFError, RuntimeError):
    """A rejection loop exceeded its flip/attempt budget instead of hanging.

    Carries enough context to locate the offending draw: ``draw_index`` for
    resampling rounds and ``step`` when raised from inside a filter run.
    """

    def __init__(self, message: str, draw_index: int | None = None, step: int | None = None):
        super().__init__(message)
        self.draw_index = draw_index
        self.step = step

    def __reduce__(self):
        # keep draw/step context when crossing process-pool boundaries
        return (self.__class__, (self.args[0], self.draw_index, self.step))


class DegenerateStep(RacePFError, RuntimeError):
    """All weights or constants vanished at a filter step; aborting beats a silent fallback."""

    def __init__(self, step: int, message: str | None = None):
        super().__init__(message or f"degenerate particle system at step {step}")
        self.step = step
