"""Exception types shared across the toolkit."""


class HolosimError(Exception):
    """Base class for all toolkit errors."""


class InvalidGeometryError(HolosimError, ValueError):
    """Array description is inconsistent (bad spacing, counts, aperture)."""


class InvalidSampleError(HolosimError, ValueError):
    """Wavenumber sample index lies outside the propagating disk."""


class NonPassiveError(HolosimError, ValueError):
    """Scattering data violates passivity (sum |S|^2 > 1)."""


class SingularMatrixError(HolosimError, ValueError):
    """A matrix that must be inverted is singular."""


class SchemaError(HolosimError, ValueError):
    """A data file does not match its expected schema.

    Carries the 1-based line number when the offending line is known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PatternRangeError(HolosimError, ValueError):
    """Requested angle falls outside a sampled pattern grid."""


class RankDeficientError(HolosimError, ValueError):
    """Stacked user channel does not have full row rank."""


class ConfigError(HolosimError, ValueError):
    """Scenario configuration is invalid; message names the offending key."""
