"""Exception types shared across the package."""


class FpkLabError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(FpkLabError, ValueError):
    """Vector, matrix, or truncation dimensions do not match."""


class SingularWeightError(FpkLabError, ValueError):
    """Dual norm requested for a coordinate whose weight is zero."""


class EvaluationError(FpkLabError, ValueError):
    """A coefficient evaluator returned non-finite or misshaped output."""


class TimeWindowError(FpkLabError, ValueError):
    """Evaluation time lies outside the declared horizon or flow range."""


class DomainTooSmallError(FpkLabError, RuntimeError):
    """Probability mass reached the boundary of the solver box."""


class StepSizeError(FpkLabError, ValueError):
    """Time step too coarse for the requested grid resolution."""


class DivergenceError(FpkLabError, RuntimeError):
    """A simulated path left the configured safety ball."""

    def __init__(self, step: int, path: int, value: float, bound: float):
        self.step = step
        self.path = path
        self.value = value
        self.bound = bound
        super().__init__(
            f"path {path} diverged at step {step}: |x| = {value:.3e} > {bound:.3e}"
        )


class GridMismatchError(FpkLabError, ValueError):
    """Two flows were compared on different time grids or truncations."""


class ConfigError(FpkLabError, ValueError):
    """Run configuration failed validation."""
