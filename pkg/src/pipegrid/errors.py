"""Exception types shared across the package."""


class PipegridError(Exception):
    """Base class for all package errors."""


class ModelError(PipegridError):
    """Malformed, inconsistent, or unresolvable network model."""


class ConfigError(PipegridError):
    """Malformed run configuration."""


class GasSystemError(PipegridError):
    """Ill-posed gas linear system (e.g. singular boundary structure)."""


class PowerFlowError(PipegridError):
    """Power-flow iteration failed to converge."""


class EstimationError(PipegridError):
    """Numerical failure inside the filter recursion."""
