"""Exception types shared across the package."""

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not agree with the configured joint/channel layout."""


class NonPSDKernelError(np.linalg.LinAlgError):
    """Cholesky factorisation of a GP kernel matrix failed."""


class DivergenceError(RuntimeError):
    """A numerical integration produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class SimulationError(DivergenceError):
    """The simulated world blew up."""


class ScenarioError(ValueError):
    """Invalid scenario configuration."""
