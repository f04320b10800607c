"""Exception hierarchy shared across the package."""


class DarkfuseError(Exception):
    """Base class for all package-specific errors."""


class InputDomainError(DarkfuseError, ValueError):
    """An input violates a documented precondition (shape, range, finiteness)."""


class NoSignalError(InputDomainError):
    """A fit was requested on data that carries no usable signal."""


class FormatError(DarkfuseError):
    """A file does not conform to one of the supported on-disk formats."""


class ConfigError(DarkfuseError):
    """A configuration document is malformed or inconsistent."""


class PipelineError(DarkfuseError):
    """A pipeline stage failed for reasons other than bad files or config."""


class PredictorError(PipelineError):
    """A noise predictor returned unusable output (e.g. non-finite values)."""
