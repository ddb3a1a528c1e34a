"""Exception types shared across the package."""


class BvsmoothError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(BvsmoothError):
    """A matrix that must be positive definite is not.

    Usually signals an invalid covariance produced upstream.
    """


class LengthMismatch(BvsmoothError):
    """Sequence lengths are inconsistent."""


class DimMismatch(BvsmoothError):
    """Array dimensions do not chain."""


class UnsupportedFunctionalForm(BvsmoothError):
    """Additive functional has no closed-form pair-quadratic representation."""


class UnsupportedPrimitive(BvsmoothError):
    """Operation not supported by the differentiation tape."""


class NonFiniteValue(BvsmoothError):
    """A value or gradient became NaN or infinite (training divergence)."""


class WeightCollapse(BvsmoothError):
    """All particle weights vanished (zero likelihood everywhere)."""


class DegenerateModel(BvsmoothError):
    """Model violates the positivity needed for mixing constants."""


class InvalidMixingConstants(BvsmoothError):
    """Density bounds do not satisfy 0 < sigma_min <= sigma_max."""
