"""Exception types shared across the package."""


class MechGPError(Exception):
    pass


class ShapeMismatch(MechGPError, ValueError):
    """Array shapes (or symmetry/structure preconditions) do not line up."""


class DimensionMismatch(ShapeMismatch):
    """Kernel inputs and lengthscales disagree in dimension."""


class OutOfRange(MechGPError, ValueError):
    """A parameter or index lies outside its documented range."""


class NotPositiveDefinite(MechGPError, ValueError):
    """Cholesky failed for every jitter in the schedule."""


class NonFiniteGradient(MechGPError, FloatingPointError):
    """A gradient entry came back NaN or Inf."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InvalidCoefficients(MechGPError, ValueError):
    """Landau coefficients do not describe a double well."""


class NumericalBlowup(MechGPError, FloatingPointError):
    """Lattice relaxation left the trust region (|p| too large)."""


class InsufficientTrace(MechGPError, ValueError):
    """Hysteresis trace covers fewer than two field periods."""


class MissingStats(MechGPError, ValueError):
    """Latent normalization statistics were required but absent."""


class DegenerateTargets(MechGPError, ValueError):
    """Target standardization impossible (zero spread)."""


class MissingReference(MechGPError, ValueError):
    """A fixed-mechanism reference input was not supplied."""


class AnchorCountMismatch(MechGPError, ValueError):
    """Anchor constraints must number exactly n - 1 for n mechanisms."""


class DegenerateInput(MechGPError, ValueError):
    """Clustering input carries no variation."""


class SingularRegression(MechGPError, ValueError):
    """Scaling decomposition hit a zero-variance regressor."""


class SelectionExhausted(MechGPError, RuntimeError):
    """No unlabeled candidate remains for acquisition."""
