"""Exception hierarchy shared by every vtslip module."""


class VtslipError(Exception):
    """Base class; ``code`` is the machine-parseable tag the CLI prints."""

    code = "error"


class DimensionError(VtslipError, ValueError):
    code = "dimension"


class ConfigError(VtslipError, ValueError):
    code = "config"


class ValidationError(VtslipError, ValueError):
    code = "validation"


class DataError(VtslipError, ValueError):
    code = "data"


class UsageError(VtslipError, RuntimeError):
    code = "usage"


class TrainingAbort(VtslipError, RuntimeError):
    """Raised when training hits a non-finite value.

    ``param`` names the offending parameter (optimizer failures); ``epoch`` and
    ``batch`` locate loss failures inside the training loop.
    """

    code = "training_abort"

    def __init__(self, message, param=None, epoch=None, batch=None):
        super().__init__(message)
        self.param = param
        self.epoch = epoch
        self.batch = batch
