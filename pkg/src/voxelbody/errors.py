"""Exception types shared across the toolkit.

Every operational failure raises one of these instead of a bare ValueError,
so pipeline stages can report the failing condition by name.
"""


class VoxelBodyError(Exception):
    """Base class for all toolkit errors."""


# volume core
class OutOfBounds(VoxelBodyError):
    """A coordinate, index, or placement falls outside the valid lattice."""


class SpacingMismatch(VoxelBodyError):
    """Two grids disagree on voxel spacing (or storage depth) where they must match."""


class EmptyMask(VoxelBodyError):
    """Thresholding produced no voxels to build a mask from."""


# DICOM ingest
class NotDicom(VoxelBodyError):
    """Byte stream is not a parsable DICOM part-10 file."""


class UnsupportedTransferSyntax(VoxelBodyError):
    """File uses a transfer syntax outside the explicit-VR little-endian subset."""


class MissingTag(VoxelBodyError):
    """A required DICOM tag is absent."""


class UnsupportedPixelFormat(VoxelBodyError):
    """Pixel data is signed, multi-channel, or deeper than 16 bits."""


class InconsistentGeometry(VoxelBodyError):
    """Slices in one series disagree on rows/columns/pixel spacing."""


class DuplicatePosition(VoxelBodyError):
    """Two slices in one series share the same z position."""


class NonUniformGap(VoxelBodyError):
    """Inter-slice z gaps deviate more than tolerance from their median."""


# MetaImage io
class MalformedHeader(VoxelBodyError):
    """MHD header text cannot be parsed."""


class UnsupportedElementType(VoxelBodyError):
    """MHD declares an element type or byte order this reader does not handle."""


class SizeMismatch(VoxelBodyError):
    """RAW payload length disagrees with the header's expectation."""


class BadWindow(VoxelBodyError):
    """Intensity window has lo >= hi."""


# stitching / cine
class GeometryMismatch(VoxelBodyError):
    """Blocks or cine locations disagree on in-plane geometry."""


class EmptyRoi(VoxelBodyError):
    """Region of interest is empty or lies outside the image."""


class NoOverlap(VoxelBodyError):
    """Translation requested for a junction with zero overlap."""


class OverlapTooLarge(VoxelBodyError):
    """Declared overlap consumes an entire block."""


class EmptySeries(VoxelBodyError):
    """A cine location has no frames."""


# rendering
class OutOfRange(VoxelBodyError):
    """Transfer-function lookup outside [0, 1]."""


class DegenerateCamera(VoxelBodyError):
    """Camera parameters do not define a valid view."""


# fabrication
class ContourExceedsSheet(VoxelBodyError):
    """A cut path does not fit the configured sheet even after centering."""


# phantom
class BadSpec(VoxelBodyError):
    """Phantom parameters are out of the supported range."""


class IoFailure(VoxelBodyError):
    """Filesystem write failed."""


# pipeline
class ManifestError(VoxelBodyError):
    """Pipeline manifest is syntactically or semantically invalid."""


# warnings (recoverable conditions, not failures)
class LowConfidenceWarning(UserWarning):
    """Best alignment score fell below the acceptance threshold."""


class PhaseWarning(UserWarning):
    """Cine series phase ordering looks suspect after peak anchoring."""
