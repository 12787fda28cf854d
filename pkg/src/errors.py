"""
Error types for lmrn.

Library modules raise these; only the CLI turns them into messages and
exit codes (2 config, 3 data, 4 numerical).
"""


class LmrnError(Exception):
    """Base class for every error raised by lmrn."""

    exit_code = 1


# --- Config (exit 2) ---

class ConfigError(LmrnError):
    """Invalid configuration, split, range or output location."""

    exit_code = 2


class DomainError(ConfigError, ValueError):
    """A numeric argument lies outside its allowed domain."""


class ShapeError(ConfigError, ValueError):
    """Array shapes are inconsistent with each other or with the declared dims."""


class UnsupportedConfigurationError(ConfigError):
    """A checker or operation does not cover the requested configuration."""


class SchemaError(ConfigError):
    """A JSON document carries an unknown schema tag or does not match its schema."""


# --- Data (exit 3) ---

class DataError(LmrnError):
    """Input data is unreadable or unusable."""

    exit_code = 3


class DegenerateSeriesError(DataError):
    """Series has zero variance."""


class InsufficientDataError(DataError):
    """Not enough observations (or usable points) for the requested statistic."""


class StatisticsError(DataError):
    """Samples cannot support the requested test."""


# --- Numerical (exit 4) ---

class NumericalError(LmrnError):
    """A computation diverged or produced non-finite values."""

    exit_code = 4


class DivergenceError(NumericalError):
    """A generated process left the finite range."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"process diverged at step {step}")


class ForwardDivergenceError(NumericalError):
    """A network forward pass produced a non-finite value."""

    def __init__(self, timestep: int, kind: str = ""):
        self.timestep = timestep
        label = f"{kind} " if kind else ""
        super().__init__(f"{label}forward pass diverged at timestep {timestep}")


class ContractError(NumericalError):
    """A cache was used with parameters it was not produced from."""


class ExperimentError(NumericalError):
    """Every run of an experiment failed."""
