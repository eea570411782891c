"""Restricted DICOM reading: explicit VR little-endian, uncompressed,
unsigned monochrome slices, plus series assembly into one block volume.

This is a deliberate subset parser, not a general DICOM library. Research
MR exports are explicit-VR little-endian files with a handful of tags,
and a parser small enough to read in one sitting is worth more here than
full standard coverage. Anything outside the subset is rejected loudly.

A matching minimal writer is included; it exists to produce synthetic
test series and round-trip fixtures, nothing more.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import VoxelGrid
from .errors import (
    DuplicatePosition,
    InconsistentGeometry,
    MissingTag,
    NonUniformGap,
    NotDicom,
    UnsupportedPixelFormat,
    UnsupportedTransferSyntax,
)

__all__ = ["DicomSlice", "parse_dicom_file", "assemble_series", "write_dicom_slice"]

EXPLICIT_VR_LITTLE_ENDIAN = "1.2.840.10008.1.2.1"

# VRs whose length field is 4 bytes after 2 reserved bytes.
_LONG_VRS = {b"OB", b"OW", b"OF", b"SQ", b"UT", b"UN"}

TAG_TRANSFER_SYNTAX = (0x0002, 0x0010)
TAG_SLICE_THICKNESS = (0x0018, 0x0050)
TAG_IMAGE_POSITION = (0x0020, 0x0032)
TAG_ROWS = (0x0028, 0x0010)
TAG_COLUMNS = (0x0028, 0x0011)
TAG_PIXEL_SPACING = (0x0028, 0x0030)
TAG_BITS_ALLOCATED = (0x0028, 0x0100)
TAG_PIXEL_REPRESENTATION = (0x0028, 0x0103)
TAG_RESCALE_INTERCEPT = (0x0028, 0x1052)
TAG_RESCALE_SLOPE = (0x0028, 0x1053)
TAG_PIXEL_DATA = (0x7FE0, 0x0010)

_REQUIRED = (
    TAG_SLICE_THICKNESS,
    TAG_IMAGE_POSITION,
    TAG_ROWS,
    TAG_COLUMNS,
    TAG_PIXEL_SPACING,
    TAG_BITS_ALLOCATED,
    TAG_PIXEL_REPRESENTATION,
    TAG_PIXEL_DATA,
)


@dataclass(frozen=True, eq=False)
class DicomSlice:
    """One parsed 2D slice with rescale already applied to the pixels."""

    rows: int
    columns: int
    pixel_spacing: tuple[float, float]  # (row mm, column mm)
    slice_thickness: float
    image_position: tuple[float, float, float]
    bits_allocated: int
    pixel_representation: int
    rescale_slope: float
    rescale_intercept: float
    pixels: np.ndarray  # float64, shape (rows, columns)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if arr.shape != (self.rows, self.columns):
            raise ValueError(f"pixels shape {arr.shape} != ({self.rows}, {self.columns})")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)


def _iter_elements(data: bytes, start: int):
    """Yield (tag, vr, value_bytes) for explicit-VR little-endian elements."""
    pos = start
    n = len(data)
    while pos < n:
        if pos + 8 > n:
            raise NotDicom(f"truncated element header at offset {pos}")
        group, elem = struct.unpack_from("<HH", data, pos)
        vr = data[pos + 4 : pos + 6]
        if not (vr.isalpha() and vr.isupper()):
            raise NotDicom(f"bad VR {vr!r} at offset {pos} (implicit VR not supported)")
        if vr in _LONG_VRS:
            if pos + 12 > n:
                raise NotDicom(f"truncated element header at offset {pos}")
            (length,) = struct.unpack_from("<I", data, pos + 8)
            body = pos + 12
        else:
            (length,) = struct.unpack_from("<H", data, pos + 6)
            body = pos + 8
        if length == 0xFFFFFFFF:
            raise NotDicom("undefined-length element (encapsulated data?)")
        if body + length > n:
            raise NotDicom(f"element ({group:04X},{elem:04X}) runs past end of file")
        yield (group, elem), vr, data[body : body + length]
        pos = body + length


def _decimal(value: bytes) -> float:
    return float(value.decode("ascii").strip("\x00 ").strip())


def _decimals(value: bytes) -> list[float]:
    text = value.decode("ascii").strip("\x00 ").strip()
    return [float(part) for part in text.split("\\")]


def _ushort(value: bytes) -> int:
    return struct.unpack("<H", value[:2])[0]


def parse_dicom_file(data: bytes) -> DicomSlice:
    """Parse one DICOM file from bytes.

    Accepts only explicit-VR little-endian, uncompressed, unsigned 8/16
    bit pixels. Rescale slope/intercept are applied before storage.
    """
    if len(data) < 132 or data[128:132] != b"DICM":
        raise NotDicom("missing 128-byte preamble + DICM magic")

    elements: dict[tuple[int, int], bytes] = {}
    transfer_syntax = None
    for tag, vr, value in _iter_elements(data, 132):
        if tag == TAG_TRANSFER_SYNTAX:
            transfer_syntax = value.decode("ascii").rstrip("\x00 ")
        elements[tag] = value

    if transfer_syntax is None:
        raise MissingTag("(0002,0010) TransferSyntaxUID")
    if transfer_syntax != EXPLICIT_VR_LITTLE_ENDIAN:
        raise UnsupportedTransferSyntax(transfer_syntax)

    for tag in _REQUIRED:
        if tag not in elements:
            raise MissingTag(f"({tag[0]:04X},{tag[1]:04X})")

    rows = _ushort(elements[TAG_ROWS])
    cols = _ushort(elements[TAG_COLUMNS])
    bits = _ushort(elements[TAG_BITS_ALLOCATED])
    representation = _ushort(elements[TAG_PIXEL_REPRESENTATION])
    if bits not in (8, 16):
        raise UnsupportedPixelFormat(f"BitsAllocated {bits}")
    if representation != 0:
        raise UnsupportedPixelFormat("signed pixels")

    spacing = _decimals(elements[TAG_PIXEL_SPACING])
    position = _decimals(elements[TAG_IMAGE_POSITION])
    if len(spacing) != 2 or len(position) != 3:
        raise UnsupportedPixelFormat("malformed PixelSpacing/ImagePositionPatient")
    slope = _decimal(elements[TAG_RESCALE_SLOPE]) if TAG_RESCALE_SLOPE in elements else 1.0
    intercept = _decimal(elements[TAG_RESCALE_INTERCEPT]) if TAG_RESCALE_INTERCEPT in elements else 0.0

    raw = elements[TAG_PIXEL_DATA]
    expected = rows * cols * (bits // 8)
    if len(raw) != expected:
        raise UnsupportedPixelFormat(
            f"PixelData is {len(raw)} bytes, expected {expected}"
        )
    stored = np.frombuffer(raw, dtype="<u2" if bits == 16 else "u1")
    pixels = stored.astype(np.float64) * slope + intercept

    return DicomSlice(
        rows=rows,
        columns=cols,
        pixel_spacing=(spacing[0], spacing[1]),
        slice_thickness=_decimal(elements[TAG_SLICE_THICKNESS]),
        image_position=(position[0], position[1], position[2]),
        bits_allocated=bits,
        pixel_representation=representation,
        rescale_slope=slope,
        rescale_intercept=intercept,
        pixels=pixels.reshape(rows, cols),
    )


def assemble_series(slices) -> VoxelGrid:
    """Stack parsed slices into one acquisition-block VoxelGrid.

    Slices are sorted by ascending z. In-plane geometry must match
    exactly; z spacing is the median inter-slice gap and gaps may not
    deviate from it by more than 1%.
    """
    slices = list(slices)
    if len(slices) < 2:
        raise ValueError(f"a series needs >= 2 slices, got {len(slices)}")

    first = slices[0]
    for s in slices[1:]:
        if (
            s.rows != first.rows
            or s.columns != first.columns
            or s.pixel_spacing != first.pixel_spacing
            or s.bits_allocated != first.bits_allocated
        ):
            raise InconsistentGeometry(
                f"slice geometry {s.rows}x{s.columns} {s.pixel_spacing} differs"
            )

    ordered = sorted(slices, key=lambda s: s.image_position[2])
    zs = [s.image_position[2] for s in ordered]
    for a, b in zip(zs, zs[1:]):
        if a == b:
            raise DuplicatePosition(f"two slices at z={a}")
    gaps = np.diff(zs)
    median_gap = float(np.median(gaps))
    if np.any(np.abs(gaps - median_gap) > 0.01 * median_gap):
        raise NonUniformGap(f"gaps {gaps.tolist()} vs median {median_gap}")

    dtype = np.uint16 if first.bits_allocated == 16 else np.uint8
    limit = np.iinfo(dtype).max
    stack = np.stack([s.pixels for s in ordered])
    rounded = np.round(stack)
    if rounded.min() < 0 or rounded.max() > limit:
        raise UnsupportedPixelFormat(
            f"rescaled values span [{stack.min()}, {stack.max()}], outside unsigned {first.bits_allocated}-bit"
        )
    row_mm, col_mm = first.pixel_spacing
    return VoxelGrid(
        rounded.astype(dtype),
        spacing=(col_mm, row_mm, median_gap),
        origin=ordered[0].image_position,
    )


# --------------------------------------------------------------- writer

def _element(group: int, elem: int, vr: bytes, value: bytes) -> bytes:
    if len(value) % 2:
        value += b"\x00" if vr in (b"UI", b"OB") else b" "
    if vr in _LONG_VRS:
        return struct.pack("<HH2sHI", group, elem, vr, 0, len(value)) + value
    return struct.pack("<HH2sH", group, elem, vr, len(value)) + value


def _ds(value: float) -> bytes:
    text = f"{value:.10g}"
    return text.encode("ascii")


def write_dicom_slice(
    pixels: np.ndarray,
    *,
    pixel_spacing=(0.5, 0.5),
    slice_thickness: float = 1.0,
    image_position=(0.0, 0.0, 0.0),
    rescale_slope: float = 1.0,
    rescale_intercept: float = 0.0,
) -> bytes:
    """Serialize one unsigned slice as explicit-VR little-endian bytes.

    Test fixture writer. ``pixels`` must already be uint8 or uint16
    stored values (rescale is metadata only here).
    """
    arr = np.ascontiguousarray(pixels)
    if arr.dtype == np.uint16:
        bits, payload = 16, arr.astype("<u2", copy=False).tobytes()
    elif arr.dtype == np.uint8:
        bits, payload = 8, arr.tobytes()
    else:
        raise ValueError(f"pixels must be uint8/uint16, got {arr.dtype}")
    rows, cols = arr.shape

    meta = _element(0x0002, 0x0010, b"UI", EXPLICIT_VR_LITTLE_ENDIAN.encode("ascii"))
    body = b"".join(
        (
            _element(0x0002, 0x0000, b"UL", struct.pack("<I", len(meta))),
            meta,
            _element(*TAG_SLICE_THICKNESS, b"DS", _ds(slice_thickness)),
            _element(
                *TAG_IMAGE_POSITION,
                b"DS",
                b"\\".join(_ds(c) for c in image_position),
            ),
            _element(*TAG_ROWS, b"US", struct.pack("<H", rows)),
            _element(*TAG_COLUMNS, b"US", struct.pack("<H", cols)),
            _element(
                *TAG_PIXEL_SPACING,
                b"DS",
                b"\\".join(_ds(c) for c in pixel_spacing),
            ),
            _element(*TAG_BITS_ALLOCATED, b"US", struct.pack("<H", bits)),
            _element(*TAG_PIXEL_REPRESENTATION, b"US", struct.pack("<H", 0)),
            _element(*TAG_RESCALE_INTERCEPT, b"DS", _ds(rescale_intercept)),
            _element(*TAG_RESCALE_SLOPE, b"DS", _ds(rescale_slope)),
            _element(*TAG_PIXEL_DATA, b"OW", payload),
        )
    )
    return b"\x00" * 128 + b"DICM" + body
