"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violates a documented contract (shape, bounds, domain)."""


class FitError(RuntimeError):
    """Surrogate hyperparameter optimization failed."""


class SimulatorError(RuntimeError):
    """A simulator could not produce data (rejection cap, separation, ...)."""


class EngineError(RuntimeError):
    """A run aborted mid-loop. Carries the partial manifest when available."""

    def __init__(self, message, manifest=None):
        super().__init__(message)
        self.manifest = manifest
