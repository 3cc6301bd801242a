"""Exception hierarchy shared across the package."""


class ConfigGPError(Exception):
    """Base class for all package errors."""


class StructuralError(ConfigGPError, ValueError):
    """Inputs have the wrong shape, role or kind for the requested operation."""


class SingularCovarianceError(ConfigGPError):
    """Covariance matrix could not be factored even at the maximum jitter.

    ``duplicate_pair`` holds the first pair of identical rows, if any were found.
    """

    def __init__(self, message, duplicate_pair=None):
        super().__init__(message)
        self.duplicate_pair = duplicate_pair


class EstimationError(ConfigGPError):
    """Parameter estimation failed; ``diagnostics`` carries per-restart details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class BasisError(EstimationError):
    """The mean basis is not identifiable from the data (F^T K^-1 F singular)."""
