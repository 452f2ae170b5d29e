"""Exception hierarchy shared across the package."""


class SlwError(Exception):
    """Base class for all slwlab errors."""


class ShapeError(SlwError):
    """Tensor dimensions do not line up for the requested operation."""


class ConfigError(SlwError):
    """Invalid configuration value or combination."""


class DataError(SlwError):
    """Corpus/indexing problem (e.g. corpus too small)."""


class DivergenceError(SlwError):
    """Non-finite loss: the run has diverged and cannot continue."""


class GradientError(SlwError):
    """Non-finite gradient element, identified by parameter name."""


class TuningError(SlwError):
    """The tuning search could not find a stable setting."""


class MetricError(SlwError):
    """Degenerate input to a metric (empty trace, zero variance, ...)."""
