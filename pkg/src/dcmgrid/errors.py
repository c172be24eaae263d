"""Shared exception types mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Malformed or incomplete configuration (CLI exit code 2)."""


class InfeasibleProblemError(RuntimeError):
    """An optimization stage has no feasible point (CLI exit code 3)."""

    def __init__(self, message: str, violated: str = ""):
        super().__init__(message)
        self.violated = violated


class NumericalFailureError(RuntimeError):
    """A solver or integrator failed numerically (CLI exit code 4)."""
