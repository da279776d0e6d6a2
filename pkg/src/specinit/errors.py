"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Malformed or unsupported model / experiment configuration."""


class DomainError(ValueError):
    """A lambda-dependent quantity was evaluated at or below the support bound."""


class AssumptionError(ValueError):
    """The model violates a standing assumption (e.g. E[z s^2] <= E[z])."""


class BracketError(RuntimeError):
    """A monotone root could not be bracketed."""


class ScanError(RuntimeError):
    """The zero-crossing scan found no sign change."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""
