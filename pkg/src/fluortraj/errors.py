"""Exception types shared across the package."""


class FluortrajError(Exception):
    """Base class for all package-specific errors."""


class InvalidStateError(FluortrajError):
    """A state vector failed validation (zero norm, wrong shape, ...)."""


class InvalidDensityError(FluortrajError):
    """A density matrix failed validation (non-Hermitian, non-PSD, trace != 1)."""


class ConfigError(FluortrajError):
    """A configuration value is out of its allowed range."""


class SamplerError(FluortrajError):
    """Internal sampler failure (envelope violation or impossible outcome)."""
