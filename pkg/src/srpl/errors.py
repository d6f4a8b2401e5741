"""Exception types shared across the toolkit."""


class SrplError(Exception):
    """Base class for all toolkit errors."""


class FormatError(SrplError):
    """A file does not conform to its declared on-disk format."""


class UnsupportedFormat(FormatError):
    """The file parses but uses a variant we do not handle (e.g. PGM maxval != 255)."""


class ShapeError(SrplError):
    """Array dimensions or class counts of two operands do not match."""


class EmptyDataset(SrplError):
    """An operation that needs at least one image received none."""


class DegenerateDomain(SrplError):
    """Dataset-level mean intensity is 0 or 1; gamma alignment is undefined."""


class DegenerateImage(SrplError):
    """Image-level mean intensity is 0 or 1; gamma alignment is undefined."""


class EmptyPseudoLabel(SrplError):
    """A pseudo-label contains no foreground pixel, so no box prompt exists."""


class SegmenterIoError(SrplError):
    """The external segmenter process crashed, replied garbage, or broke protocol."""


class SegmenterTimeout(SegmenterIoError):
    """The external segmenter did not reply within the configured timeout."""


class ConfigError(SrplError):
    """Invalid configuration, or a mode was asked to run without its artifacts."""


class NumericError(SrplError):
    """Non-finite values where finite ones are required (e.g. logits)."""
