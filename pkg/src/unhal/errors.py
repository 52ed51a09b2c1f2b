"""Exception types shared across the package."""


class UnhalError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(UnhalError):
    """An operation received tensors with incompatible shapes or dtypes."""


class GraphError(UnhalError):
    """Misuse of the autodiff graph: non-scalar loss, repeated backward,
    or an optimizer step with missing gradients."""


class ConfigError(UnhalError):
    """Invalid configuration value or unknown configuration key."""


class DataError(UnhalError):
    """Dataset loading, pairing, or splitting problem."""


class MetadataError(UnhalError):
    """Base class for metadata container and JPEG segment errors."""


class BadContainer(MetadataError):
    """Container bytes are malformed: bad magic, unsupported version,
    truncation, or weights inconsistent with the declared architecture."""


class CrcMismatch(MetadataError):
    """Container checksum does not match its payload."""


class MetadataNotFound(MetadataError):
    """The JPEG stream carries no recovery metadata."""


class ChunkGap(MetadataError):
    """Metadata segments are present but incomplete or inconsistent."""


class JpegStructureError(MetadataError):
    """The byte stream is not a well-formed JPEG (missing SOI, truncated
    segment, no EOI)."""
