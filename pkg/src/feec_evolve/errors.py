"""Exception types raised by the library."""


class ConfigurationError(ValueError):
    """Invalid element family, space pairing, or study configuration."""


class MeshError(ValueError):
    """Broken mesh input, e.g. a degenerate or clockwise triangle."""


class SolverError(RuntimeError):
    """A linear or nonlinear solve failed or missed its residual bound."""


class NotSPDError(SolverError):
    """A matrix expected to be symmetric positive definite is not."""


class StepError(SolverError):
    """A time step failed. Carries the step index."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step
