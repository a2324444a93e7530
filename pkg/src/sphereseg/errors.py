"""Exception hierarchy shared across the package.

The CLI maps these onto exit-code classes, so keep failures typed:
configuration problems, unusable input data, file-format damage and
segmenter-process failures are all distinguishable.
"""


class SpheresegError(Exception):
    """Base class for package-specific failures."""


class ConfigError(SpheresegError):
    """Invalid or incomplete pipeline / CLI configuration."""


class InputError(SpheresegError):
    """Unusable input data (missing files, wrong shapes, bad values)."""


class DimensionMismatchError(InputError):
    """Volumes that must share dims/spacing do not."""


class DegenerateVolumeError(InputError):
    """Volume unusable for the requested operation (e.g. all zero)."""


class FormatError(InputError):
    """Malformed or unsupported volume file."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedFormatError(FormatError):
    """Recognised file, but a variant this reader does not handle."""


class FormatVersionError(FormatError):
    """Recognised file with an unsupported format version."""


class TruncatedFileError(FormatError):
    """File ends before the declared data payload does."""


class SegmenterError(SpheresegError):
    """A segmenter backend failed."""


class SegmenterExitError(SegmenterError):
    """External segmenter process exited with a nonzero status."""


class SegmenterTimeoutError(SegmenterError):
    """External segmenter process exceeded its time budget."""


class SegmenterOutputError(SegmenterError):
    """External segmenter produced no output or an unreadable one."""


class SegmenterShapeError(SegmenterError):
    """Segmenter output dimensions do not match its input."""


class PassFailedError(SegmenterError):
    """Every origin of a cascade pass failed to produce a prediction."""
