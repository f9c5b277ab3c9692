"""Exception types shared across the package.

The CLI maps these onto its exit-code contract, so library code should
raise the most specific one that applies.
"""


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad value, unsupported id."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


class ArtifactError(RuntimeError):
    """A run-artifact file is missing fields or otherwise unreadable."""
