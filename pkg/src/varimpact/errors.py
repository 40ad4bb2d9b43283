"""Exception types shared across the integration stack."""


class VarimpactError(Exception):
    """Base class for all library errors."""


class ConfigurationError(VarimpactError):
    """Invalid system, method, or run configuration."""


class StepFailure(VarimpactError):
    """An integrator step could not be completed.

    Carries diagnostic state so a partially written trace can report the
    failing time.
    """

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class SolverError(StepFailure):
    """Nonlinear or complementarity solve failed to converge."""


class InfeasibleStepError(SolverError):
    """No active-set choice yields a feasible complementarity solution."""


class ReflectionError(StepFailure):
    """Reflection operator failed (nontermination or infeasible projection)."""


class PredictorError(SolverError):
    """Forward predictor solve diverged."""
