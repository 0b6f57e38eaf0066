"""Exception hierarchy shared by every module.

The CLI maps each class to a process exit code, so new errors should
subclass one of the three families below.
"""


class RelganError(Exception):
    exit_code = 1


class ConfigError(RelganError, ValueError):
    """Invalid configuration, unknown tag, or violated constraint."""

    exit_code = 2


class DimensionError(ConfigError):
    """Tensor shapes do not conform to an op's signature."""


class ContractError(RelganError, ValueError):
    """A caller broke an API precondition (e.g. non-scalar loss)."""

    exit_code = 2


class NumericError(RelganError, ArithmeticError):
    """NaN/Inf encountered where finite values are required."""

    exit_code = 3


class DivergenceError(NumericError):
    """Raised by the Dirac integrator; carries the partial trajectory."""

    def __init__(self, message, step, trajectory=None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory


class TrainingAborted(NumericError):
    def __init__(self, message, record):
        super().__init__(message)
        self.record = record


class ArtifactIOError(RelganError, OSError):
    exit_code = 4

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
