"""I/O tests: MHD/RAW round trips, the DICOM subset parser, bit conversion."""

import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxelbody.bitdepth import convert_to_8bit, default_window
from voxelbody.core import BodyMask, VoxelGrid
from voxelbody.dicomio import (
    _element,
    assemble_series,
    parse_dicom_file,
    write_dicom_slice,
)
from voxelbody.errors import (
    BadWindow,
    DuplicatePosition,
    InconsistentGeometry,
    MalformedHeader,
    MissingTag,
    NonUniformGap,
    NotDicom,
    SizeMismatch,
    UnsupportedElementType,
    UnsupportedPixelFormat,
    UnsupportedTransferSyntax,
)
from voxelbody.metaimage import parse_mhd_header, read_mhd, write_mhd


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


# ------------------------------------------------------------------- MHD

def test_mhd_round_trip_value_exact(tmp_path):
    rng = np.random.default_rng(1)
    g = VoxelGrid(
        rng.integers(0, 65536, size=(40, 64, 64), dtype=np.uint16),
        spacing=(0.5, 0.5, 1.0),
        origin=(1.0, -2.0, 30.0),
    )
    write_mhd(g, tmp_path / "v.mhd", tmp_path / "v.raw")
    back = read_mhd(tmp_path / "v.mhd")
    assert np.array_equal(back.values, g.values)
    assert back.spacing == g.spacing
    assert back.origin == g.origin
    assert back.depth == 16


def test_mhd_header_lines(tmp_path):
    g = VoxelGrid(np.zeros((40, 64, 64), dtype=np.uint16), spacing=(0.5, 0.5, 1.0))
    write_mhd(g, tmp_path / "v.mhd", tmp_path / "v.raw")
    text = (tmp_path / "v.mhd").read_text()
    assert "DimSize = 64 64 40" in text
    assert "ElementSpacing = 0.5 0.5 1.0" in text
    assert "ElementType = MET_USHORT" in text
    assert "ElementDataFile = v.raw" in text
    assert text.index("NDims") < text.index("DimSize") < text.index("ElementType")


def test_mhd_write_read_write_byte_identical(tmp_path):
    rng = np.random.default_rng(2)
    g = VoxelGrid(rng.integers(0, 256, size=(5, 6, 7), dtype=np.uint8).astype(np.uint8))
    write_mhd(g, tmp_path / "a.mhd", tmp_path / "a.raw")
    back = read_mhd(tmp_path / "a.mhd")
    write_mhd(back, tmp_path / "b.mhd", tmp_path / "b.raw")
    assert sha(tmp_path / "a.raw") == sha(tmp_path / "b.raw")
    assert (tmp_path / "a.mhd").read_text().replace("a.raw", "b.raw") == (
        tmp_path / "b.mhd"
    ).read_text()


def test_mhd_raw_is_little_endian_x_fastest(tmp_path):
    vals = np.zeros((1, 1, 2), dtype=np.uint16)
    vals[0, 0, 0] = 0x0102
    vals[0, 0, 1] = 0x0304
    write_mhd(VoxelGrid(vals), tmp_path / "v.mhd", tmp_path / "v.raw")
    assert (tmp_path / "v.raw").read_bytes() == b"\x02\x01\x04\x03"


@given(
    nx=st.integers(1, 5), ny=st.integers(1, 5), nz=st.integers(1, 5),
    depth=st.sampled_from([8, 16]), seed=st.integers(0, 2**31),
)
@settings(max_examples=40, deadline=None)
def test_mhd_round_trip_property(tmp_path_factory, nx, ny, nz, depth, seed):
    tmp = tmp_path_factory.mktemp("mhd")
    rng = np.random.default_rng(seed)
    dtype = np.uint16 if depth == 16 else np.uint8
    g = VoxelGrid(rng.integers(0, 2**depth, size=(nz, ny, nx)).astype(dtype))
    write_mhd(g, tmp / "g.mhd", tmp / "g.raw")
    back = read_mhd(tmp / "g.mhd")
    assert np.array_equal(back.values, g.values)
    assert back.depth == depth


def test_mhd_truncated_raw(tmp_path):
    g = VoxelGrid(np.zeros((2, 2, 2), dtype=np.uint16))
    write_mhd(g, tmp_path / "v.mhd", tmp_path / "v.raw")
    raw = (tmp_path / "v.raw").read_bytes()
    (tmp_path / "v.raw").write_bytes(raw[:-1])
    with pytest.raises(SizeMismatch):
        read_mhd(tmp_path / "v.mhd")


def test_mhd_rejects_bad_headers():
    with pytest.raises(MalformedHeader):
        parse_mhd_header("NDims = 3\nDimSize 2 2 2\n")
    with pytest.raises(MalformedHeader):
        parse_mhd_header("NDims = 2\nDimSize = 2 2\nElementType = MET_UCHAR\nElementDataFile = x.raw\n")
    with pytest.raises(MalformedHeader):
        parse_mhd_header("NDims = 3\nElementType = MET_UCHAR\nElementDataFile = x.raw\n")
    with pytest.raises(UnsupportedElementType):
        parse_mhd_header("NDims = 3\nDimSize = 2 2 2\nElementType = MET_FLOAT\nElementDataFile = x.raw\n")
    with pytest.raises(UnsupportedElementType):
        parse_mhd_header(
            "NDims = 3\nBinaryDataByteOrderMSB = True\nDimSize = 2 2 2\n"
            "ElementType = MET_UCHAR\nElementDataFile = x.raw\n"
        )
    with pytest.raises(MalformedHeader):
        parse_mhd_header("NDims = 3\nDimSize = 2 2 2\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n")


# ----------------------------------------------------------------- DICOM

def make_slice_bytes(seed=0, z=0.0, **kw):
    rng = np.random.default_rng(seed)
    pix = rng.integers(0, 4096, size=(16, 16), dtype=np.uint16).astype(np.uint16)
    return write_dicom_slice(pix, image_position=(0.0, 0.0, z), **kw), pix


def test_dicom_round_trip_value_exact():
    data, pix = make_slice_bytes(seed=3)
    s = parse_dicom_file(data)
    assert s.rows == s.columns == 16
    assert s.pixel_spacing == (0.5, 0.5)
    assert s.bits_allocated == 16
    assert np.array_equal(s.pixels, pix.astype(np.float64))


def test_dicom_rescale_applied():
    pix = np.arange(4, dtype=np.uint16).reshape(2, 2)
    data = write_dicom_slice(pix, rescale_slope=2.0, rescale_intercept=-1.0)
    s = parse_dicom_file(data)
    assert np.array_equal(s.pixels, pix * 2.0 - 1.0)
    assert s.rescale_slope == 2.0 and s.rescale_intercept == -1.0


def test_dicom_missing_magic():
    data, _ = make_slice_bytes()
    with pytest.raises(NotDicom):
        parse_dicom_file(data[130:])
    with pytest.raises(NotDicom):
        parse_dicom_file(b"\x00" * 128 + b"DICX" + data[132:])


def test_dicom_compressed_syntax_rejected():
    data, _ = make_slice_bytes()
    lossless = _element(0x0002, 0x0010, b"UI", b"1.2.840.10008.1.2.1")
    jpeg_baseline = _element(0x0002, 0x0010, b"UI", b"1.2.840.10008.1.2.4.50")
    assert lossless in data
    with pytest.raises(UnsupportedTransferSyntax):
        parse_dicom_file(data.replace(lossless, jpeg_baseline))


def test_dicom_missing_required_tag():
    data, _ = make_slice_bytes()
    rows_element = _element(0x0028, 0x0010, b"US", (16).to_bytes(2, "little"))
    assert rows_element in data
    with pytest.raises(MissingTag):
        parse_dicom_file(data.replace(rows_element, b""))


def test_dicom_signed_pixels_rejected():
    data, _ = make_slice_bytes()
    unsigned = _element(0x0028, 0x0103, b"US", (0).to_bytes(2, "little"))
    signed = _element(0x0028, 0x0103, b"US", (1).to_bytes(2, "little"))
    with pytest.raises(UnsupportedPixelFormat):
        parse_dicom_file(data.replace(unsigned, signed))


def test_dicom_truncated_pixel_data():
    data, _ = make_slice_bytes()
    with pytest.raises(NotDicom):
        parse_dicom_file(data[:-10])


def test_assemble_sorts_shuffled_slices():
    slices = [parse_dicom_file(make_slice_bytes(seed=i, z=float(i))[0]) for i in (2, 0, 1)]
    g = assemble_series(slices)
    assert g.dims == (16, 16, 3)
    assert g.origin == (0.0, 0.0, 0.0)
    assert g.spacing == (0.5, 0.5, 1.0)
    for i, seed in enumerate((0, 1, 2)):
        _, pix = make_slice_bytes(seed=seed)
        assert np.array_equal(g.values[i], pix)


def test_assemble_pixel_spacing_row_col_mapping():
    # PixelSpacing is (row, col) = (y, x); grid spacing is (x, y, z)
    a = parse_dicom_file(write_dicom_slice(
        np.zeros((4, 4), dtype=np.uint16), pixel_spacing=(0.7, 0.5), image_position=(0, 0, 0)))
    b = parse_dicom_file(write_dicom_slice(
        np.zeros((4, 4), dtype=np.uint16), pixel_spacing=(0.7, 0.5), image_position=(0, 0, 2)))
    g = assemble_series([a, b])
    assert g.spacing == (0.5, 0.7, 2.0)


def test_assemble_rejects_mixed_geometry():
    a = parse_dicom_file(write_dicom_slice(np.zeros((16, 16), dtype=np.uint16)))
    b = parse_dicom_file(write_dicom_slice(np.zeros((17, 16), dtype=np.uint16),
                                           image_position=(0, 0, 1)))
    with pytest.raises(InconsistentGeometry):
        assemble_series([a, b])


def test_assemble_rejects_duplicate_z():
    a = parse_dicom_file(make_slice_bytes(z=5.0)[0])
    b = parse_dicom_file(make_slice_bytes(seed=1, z=5.0)[0])
    with pytest.raises(DuplicatePosition):
        assemble_series([a, b])


def test_assemble_rejects_uneven_gaps():
    slices = [parse_dicom_file(make_slice_bytes(seed=i, z=z)[0])
              for i, z in enumerate((0.0, 1.0, 2.5))]
    with pytest.raises(NonUniformGap):
        assemble_series(slices)


def test_assemble_tolerates_one_percent_jitter():
    slices = [parse_dicom_file(make_slice_bytes(seed=i, z=z)[0])
              for i, z in enumerate((0.0, 1.0, 2.005))]
    g = assemble_series(slices)
    assert g.dims[2] == 3


def test_dicom_pipeline_end_to_end_value_exact(tmp_path):
    rng = np.random.default_rng(9)
    truth = rng.integers(0, 4096, size=(5, 12, 10), dtype=np.uint16).astype(np.uint16)
    files = [
        write_dicom_slice(truth[k], slice_thickness=1.0, image_position=(0, 0, k * 1.0))
        for k in range(5)
    ]
    slices = [parse_dicom_file(f) for f in files]
    grid = assemble_series(slices)
    assert np.array_equal(grid.values, truth)
    write_mhd(grid, tmp_path / "g.mhd", tmp_path / "g.raw")
    assert np.array_equal(read_mhd(tmp_path / "g.mhd").values, truth)


# --------------------------------------------------------- 8-bit convert

def test_convert_identity_window():
    vals = np.arange(256, dtype=np.uint16).reshape(4, 8, 8)
    out = convert_to_8bit(VoxelGrid(vals), 0, 255)
    assert np.array_equal(out.values, vals.astype(np.uint8))
    assert out.depth == 8


def test_convert_clamps_ends():
    vals = np.array([[[0, 100, 200, 300, 4095]]], dtype=np.uint16)
    out = convert_to_8bit(VoxelGrid(vals), 100, 300)
    assert out.values[0, 0, 0] == 0
    assert out.values[0, 0, 1] == 0
    assert out.values[0, 0, 3] == 255
    assert out.values[0, 0, 4] == 255


def test_convert_midpoint_rounds_half_up():
    vals = np.array([[[150]]], dtype=np.uint16)
    out = convert_to_8bit(VoxelGrid(vals), 100, 200)
    assert out.values[0, 0, 0] == 128  # round(127.5 + 0.5)


def test_convert_monotone_in_value():
    vals = np.arange(0, 4096, 7, dtype=np.uint16).reshape(1, 1, -1)
    out = convert_to_8bit(VoxelGrid(vals), 300, 3000).values.ravel()
    assert np.all(np.diff(out.astype(int)) >= 0)


def test_convert_preserves_geometry():
    g = VoxelGrid(np.zeros((2, 3, 4), dtype=np.uint16), spacing=(0.5, 0.5, 1.0), origin=(1, 2, 3))
    out = convert_to_8bit(g, 0, 10)
    assert out.spacing == g.spacing and out.origin == g.origin and out.dims == g.dims


def test_convert_bad_window():
    g = VoxelGrid(np.zeros((1, 1, 1), dtype=np.uint16))
    with pytest.raises(BadWindow):
        convert_to_8bit(g, 5, 5)
    with pytest.raises(BadWindow):
        convert_to_8bit(g, 9, 5)


def test_default_window_uses_body_percentiles():
    rng = np.random.default_rng(4)
    vals = np.zeros((10, 10, 10), dtype=np.uint16)
    body = np.zeros_like(vals, dtype=bool)
    body[2:8, 2:8, 2:8] = True
    vals[body] = rng.integers(500, 1500, size=int(body.sum()))
    vals[0, 0, 0] = 60000  # hot speck outside the body must not matter
    lo, hi = default_window(VoxelGrid(vals), BodyMask(body))
    inside = np.sort(vals[body].ravel())
    n = inside.size
    assert lo == float(inside[max(1, int(np.ceil(0.005 * n))) - 1])
    assert hi == float(inside[int(np.ceil(0.995 * n)) - 1])
    assert hi < 60000
