"""
Exception types raised by the sparse approximation core.
"""


class SparseApproxError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(SparseApproxError, ValueError):
    """Operands do not have conforming extents."""

    def __init__(self, what: str, left, right):
        self.left = tuple(left) if hasattr(left, '__iter__') else left
        self.right = tuple(right) if hasattr(right, '__iter__') else right
        super().__init__(f"{what}: shape {self.left} does not match {self.right}")


class DictionaryError(SparseApproxError, ValueError):
    """A dictionary could not be built or violates its invariants."""


class DictionaryMismatchError(SparseApproxError):
    """A decomposition was produced with a different dictionary."""


class FormatError(SparseApproxError, ValueError):
    """A file is malformed, truncated or has an unexpected dtype."""


class ChecksumError(FormatError):
    """A file failed its integrity check."""


class WaveletError(SparseApproxError, ValueError):
    """Wavelet transform preconditions are not met."""


class ConfigError(SparseApproxError, ValueError):
    """Run configuration failed validation."""
