class ConfigurationError(ValueError):
    """Inconsistent dimensions or parameters."""


class EstimationInfeasibleError(RuntimeError):
    """The pilot design leaves no room to observe the interference."""
