"""MetaImage (MHD header + RAW payload) reading and writing.

The on-disk contract is deliberately narrow: 3D, little-endian,
uncompressed, MET_UCHAR or MET_USHORT, data in a separate RAW file.
The writer emits keys in a fixed order so repeated writes of the same
grid are byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .core import VoxelGrid
from .errors import MalformedHeader, SizeMismatch, UnsupportedElementType

__all__ = ["MhdHeader", "parse_mhd_header", "read_mhd", "write_mhd"]

_ELEMENT_TYPES = {"MET_USHORT": np.uint16, "MET_UCHAR": np.uint8}
_TYPE_NAMES = {16: "MET_USHORT", 8: "MET_UCHAR"}

# Writer key order is part of the format contract; do not reorder.
_KEY_ORDER = (
    "ObjectType",
    "NDims",
    "BinaryData",
    "BinaryDataByteOrderMSB",
    "CompressedData",
    "DimSize",
    "ElementSpacing",
    "Offset",
    "ElementType",
    "ElementDataFile",
)


@dataclass(frozen=True)
class MhdHeader:
    ndims: int
    dim_size: tuple[int, int, int]  # (nx, ny, nz)
    element_spacing: tuple[float, float, float]
    offset: tuple[float, float, float]
    element_type: str
    element_data_file: str
    byte_order_msb: bool = False


def _fmt_floats(t) -> str:
    return " ".join(str(float(c)) for c in t)


def write_mhd(grid: VoxelGrid, header_path, raw_path) -> None:
    """Write grid as an MHD header plus little-endian RAW payload.

    The header stores ``ElementDataFile`` relative to the header's
    directory. Output is deterministic: same grid, same bytes.
    """
    header_path = os.fspath(header_path)
    raw_path = os.fspath(raw_path)
    nx, ny, nz = grid.dims
    rel_raw = os.path.relpath(raw_path, os.path.dirname(header_path) or ".")
    fields = {
        "ObjectType": "Image",
        "NDims": "3",
        "BinaryData": "True",
        "BinaryDataByteOrderMSB": "False",
        "CompressedData": "False",
        "DimSize": f"{nx} {ny} {nz}",
        "ElementSpacing": _fmt_floats(grid.spacing),
        "Offset": _fmt_floats(grid.origin),
        "ElementType": _TYPE_NAMES[grid.depth],
        "ElementDataFile": rel_raw,
    }
    text = "".join(f"{k} = {fields[k]}\n" for k in _KEY_ORDER)
    with open(header_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)
    little = grid.values.astype("<u2" if grid.depth == 16 else "u1", copy=False)
    with open(raw_path, "wb") as fh:
        fh.write(little.tobytes(order="C"))


def parse_mhd_header(text: str) -> MhdHeader:
    """Parse MHD header text into a validated MhdHeader."""
    kv: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise MalformedHeader(f"line {lineno}: expected 'Key = Value'")
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()

    for required in ("NDims", "DimSize", "ElementType", "ElementDataFile"):
        if required not in kv:
            raise MalformedHeader(f"missing key {required}")

    if kv["NDims"] != "3":
        raise MalformedHeader(f"NDims must be 3, got {kv['NDims']!r}")
    try:
        dim_size = tuple(int(c) for c in kv["DimSize"].split())
        spacing = tuple(float(c) for c in kv.get("ElementSpacing", "1 1 1").split())
        offset = tuple(float(c) for c in kv.get("Offset", "0 0 0").split())
    except ValueError as exc:
        raise MalformedHeader(f"bad numeric field: {exc}") from exc
    if len(dim_size) != 3 or len(spacing) != 3 or len(offset) != 3:
        raise MalformedHeader("DimSize/ElementSpacing/Offset need 3 components")
    if min(dim_size) < 1:
        raise MalformedHeader(f"DimSize components must be >= 1, got {dim_size}")

    element_type = kv["ElementType"]
    if element_type not in _ELEMENT_TYPES:
        raise UnsupportedElementType(f"ElementType {element_type!r}")
    # big-endian and compressed payloads are encodings this reader does not do
    msb = kv.get("BinaryDataByteOrderMSB", "False").lower() == "true"
    if msb:
        raise UnsupportedElementType("big-endian payload")
    if kv.get("CompressedData", "False").lower() == "true":
        raise UnsupportedElementType("compressed payload")

    data_file = kv["ElementDataFile"]
    if data_file.upper() in ("LOCAL", "LIST") or not data_file:
        raise MalformedHeader(f"ElementDataFile {data_file!r} not supported")

    return MhdHeader(
        ndims=3,
        dim_size=dim_size,  # type: ignore[arg-type]
        element_spacing=spacing,  # type: ignore[arg-type]
        offset=offset,  # type: ignore[arg-type]
        element_type=element_type,
        element_data_file=data_file,
    )


def read_mhd(header_path) -> VoxelGrid:
    """Read an MHD header and its RAW payload back into a VoxelGrid."""
    header_path = os.fspath(header_path)
    try:
        with open(header_path, "r", encoding="ascii") as fh:
            header = parse_mhd_header(fh.read())
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"header is not ASCII text: {exc}") from exc

    raw_path = header.element_data_file
    if not os.path.isabs(raw_path):
        raw_path = os.path.join(os.path.dirname(header_path) or ".", raw_path)
    dtype = _ELEMENT_TYPES[header.element_type]
    nx, ny, nz = header.dim_size
    expected = nx * ny * nz * dtype().itemsize
    actual = os.path.getsize(raw_path)
    if actual != expected:
        raise SizeMismatch(f"RAW is {actual} bytes, header implies {expected}")
    with open(raw_path, "rb") as fh:
        data = np.frombuffer(fh.read(), dtype="<u2" if dtype is np.uint16 else "u1")
    values = data.astype(dtype, copy=False).reshape(nz, ny, nx)
    return VoxelGrid(values, spacing=header.element_spacing, origin=header.offset)
