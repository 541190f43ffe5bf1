"""Exception hierarchy shared by the analysis modules.

The CLI maps these onto exit codes: bad input/config -> 2, numeric
failures -> 3, non-convergence -> 4.
"""


class HpadynError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(HpadynError, ValueError):
    """Invalid configuration file or CLI usage (exit code 2)."""


class NumericError(HpadynError, RuntimeError):
    """A numeric computation produced invalid results (exit code 3)."""


class ConvergenceError(HpadynError, RuntimeError):
    """An iterative method failed to converge (exit code 4)."""


class NoLimitCycleError(ConvergenceError):
    """No sustained oscillation was detected for the given parameters."""
