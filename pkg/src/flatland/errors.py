"""Exception taxonomy shared across the package.

Two families matter to callers: configuration problems (bad plans, bad
config files, mismatched dimensions -- things knowable before sampling
starts) and capability misuse (asking a model or kernel for something it
does not support). The CLI maps them to distinct exit codes.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad hyperparameters, plans, or config files."""


class CapabilityError(RuntimeError):
    """An operation was requested that the target does not support."""


class NumericError(RuntimeError):
    """A numeric procedure failed to converge or produced non-finite values."""
