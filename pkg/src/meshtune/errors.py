"""Exception hierarchy. Each CLI-facing error carries its process exit code."""


class MeshTuneError(Exception):
    exit_code = 1


class ConfigError(MeshTuneError, ValueError):
    """Invalid schedule, search space, bundle or experiment configuration."""

    exit_code = 2


class DataError(MeshTuneError, ValueError):
    """Malformed dataset, loss-curve table or meta-dataset."""

    exit_code = 3


class LeakageError(MeshTuneError):
    """A meta-model bundle was trained on the dataset it is asked to tune."""

    exit_code = 4


class ContractViolation(MeshTuneError, ValueError):
    """A caller broke an operation's precondition (lengths, widths, counts)."""


class NumericalError(MeshTuneError, ArithmeticError):
    pass


class TrialError(MeshTuneError):
    """An evaluator failed on one configuration; wraps the original error."""

    def __init__(self, config_id: str, cause: BaseException):
        super().__init__(f"trial {config_id} failed: {cause}")
        self.config_id = config_id
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
