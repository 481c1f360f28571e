"""Exception types raised across the package.

Grouped here so callers can catch the family root (``ArtifactQCError``)
or precise conditions without importing the module that raised them.
"""


class ArtifactQCError(Exception):
    """Root of every error this package raises deliberately."""


# --- volume file format -------------------------------------------------

class VolumeFormatError(ArtifactQCError):
    """A volume file violates the MQCV binary layout."""


class BadMagic(VolumeFormatError):
    pass


class VersionUnsupported(VolumeFormatError):
    pass


class TruncatedFile(VolumeFormatError):
    pass


class TrailingData(VolumeFormatError):
    pass


class NonFiniteVoxel(VolumeFormatError):
    pass


# --- geometry / indexing ------------------------------------------------

class IndexOutOfRange(ArtifactQCError, IndexError):
    pass


class TargetTooSmall(ArtifactQCError, ValueError):
    pass


class CountExceedsDepth(ArtifactQCError, ValueError):
    pass


# --- computation graphs -------------------------------------------------

class ShapeMismatch(ArtifactQCError, ValueError):
    pass


class UnknownNode(ArtifactQCError, KeyError):
    pass


class NonFiniteIntermediate(ArtifactQCError, FloatingPointError):
    pass


# --- training / scoring -------------------------------------------------

class InsufficientVolumes(ArtifactQCError, ValueError):
    pass


class DegenerateData(ArtifactQCError, ValueError):
    pass


class EmptyReference(ArtifactQCError, ValueError):
    pass


class TauOutOfRange(ArtifactQCError, ValueError):
    pass


class MissingLabels(ArtifactQCError, ValueError):
    pass
