"""Exception types shared across the package."""


class StratocycleError(Exception):
    """Base class for all package errors."""


class ZeroVector(StratocycleError):
    """Ambient vector too small to normalize onto the sphere."""


class NonFinite(StratocycleError):
    """NaN or infinity encountered where a finite value is required."""


class ManifoldMismatch(StratocycleError):
    """Objects defined on different manifolds were combined."""


class DomainViolation(StratocycleError):
    """Evaluation requested inside the declared singular set of a field."""


class SingularProximity(StratocycleError):
    """A path entered the cutoff neighborhood of a singular set.

    Carries ``step_index`` of the offending step.
    """

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


class StepTooLarge(StratocycleError):
    """A single torus step moved further than the unwrap guard allows."""


class SpecMismatch(StratocycleError):
    """Path metadata disagrees with the diffusion spec passed alongside it."""


class NonClosedForm(StratocycleError):
    """A basis 1-form required to be closed is not flagged closed."""


class EmptyAfterBurnIn(StratocycleError):
    """No sample points survive the burn-in fraction."""


class SimulationError(StratocycleError):
    """Numerical failure during SDE integration; carries the step index."""

    def __init__(self, message: str, step_index: int | None = None,
                 path_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index
        self.path_index = path_index


class ConfigError(StratocycleError):
    """Experiment configuration failed schema validation."""
