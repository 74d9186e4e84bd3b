"""Shared exception types."""


class InvalidState(Exception):
    """A conserved state with non-positive density or internal energy."""


class ConfigError(Exception):
    """Bad solver configuration or config file."""


class SolverDivergence(Exception):
    """A run produced NaNs or a runaway residual."""
