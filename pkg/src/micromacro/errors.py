"""Exception and warning types raised across the package."""


class InvalidDimensionError(ValueError):
    """Truncation dimension too small for the requested object."""


class DomainError(ValueError):
    """A physical parameter lies outside its admissible range."""


class TruncationError(RuntimeError):
    """Probability leaked out of the truncated Fock space beyond tolerance."""

    def __init__(self, message, deficit=None):
        super().__init__(message)
        self.deficit = deficit


class TruncationWarning(UserWarning):
    """The truncated space is likely too small for the displacement used."""


class RegimeError(ValueError):
    """An engine was asked to work outside its validity/feasibility window."""


class UnsupportedModeError(ValueError):
    """The requested evaluation mode is not available for this input."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class ReportSchemaError(ValueError):
    """Two run reports cannot be compared metric by metric."""
