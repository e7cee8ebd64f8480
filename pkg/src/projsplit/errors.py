"""Exception hierarchy shared by every module."""


class ProjSplitError(Exception):
    """Base class for all package errors."""


class DimensionError(ProjSplitError, ValueError):
    """Shapes or metric weights of two operands do not agree."""


class NonFiniteError(ProjSplitError, FloatingPointError):
    """A public operation produced NaN or Inf."""


class StepsizeError(ProjSplitError, ValueError):
    """A stepsize or relaxation parameter is outside its admissible range."""


class ActivationError(ProjSplitError, RuntimeError):
    """An operator evaluation (prox or forward step) failed."""


class ConfigurationError(ProjSplitError, ValueError):
    """Problem metadata or solver configuration is inconsistent."""


class MetadataError(ConfigurationError):
    """A requested constant needs metadata the problem does not carry."""
