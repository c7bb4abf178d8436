"""Error types shared across the pipeline, mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Bad or missing configuration (exit code 2)."""


class DataError(ValueError):
    """Malformed or inconsistent input data (exit code 3)."""


class ConvergenceError(RuntimeError):
    """Solver failed to converge and the run is strict (exit code 4)."""
