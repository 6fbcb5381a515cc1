"""Exception types shared across the package."""


class ProxmmrError(Exception):
    """Base class for all package errors."""


class DimensionError(ProxmmrError):
    """Operand shapes are incompatible."""


class DomainError(ProxmmrError):
    """An argument lies outside the operation's domain."""


class ConfigError(ProxmmrError):
    """A configuration value or key is invalid."""


class GraphError(ProxmmrError):
    """The computation graph was used inconsistently."""


class TrainingError(ProxmmrError):
    """A training job hit a non-recoverable numeric failure."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
