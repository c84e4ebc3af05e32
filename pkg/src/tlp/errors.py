"""Exception types shared across the package.

Shape problems are loud by design: there is no implicit broadcasting
(except tensor-scalar), so a mismatch always raises instead of silently
bending shapes.
"""


class TlpError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatch(TlpError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class EmptyOutput(TlpError, ValueError):
    """A convolution would produce a zero-sized spatial output."""


class NotScalar(TlpError, ValueError):
    """backward() was called on a non-scalar tensor."""


class OddExtent(TlpError, ValueError):
    """Downsampling requires even spatial extents."""


class NonDivisibleExtent(TlpError, ValueError):
    """Image extents are not divisible by the model's total downsampling factor."""


class NanDetected(TlpError, FloatingPointError):
    """A non-finite value appeared where finite values are required."""


class ConstantImage(TlpError, ValueError):
    """Normalization needs max > min; the image is constant."""


class BadFractions(TlpError, ValueError):
    """Split fractions must be positive and sum to 1."""


class IOFailure(TlpError, OSError):
    """A file could not be read or written."""


class CorruptHeader(TlpError, ValueError):
    """A file's magic bytes or header fields are invalid or truncated."""


class FormatVersionMismatch(TlpError, ValueError):
    """A checkpoint or tensor file uses an unsupported format version."""


class ZeroReference(TlpError, ValueError):
    """NMSE is undefined for an all-zero reference image."""


class TooSmall(TlpError, ValueError):
    """Image extents are smaller than the metric's local window."""


class OutOfRange(TlpError, ValueError):
    """An index or epoch lies outside its valid range."""
