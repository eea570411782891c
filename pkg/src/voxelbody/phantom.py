"""Synthetic ground-truth generator.

Everything downstream is tested against volumes from here: a body-like
grid with high-contrast tissues, a splitter that manufactures
misaligned overlapping blocks with known answers, a cine series with
known phase offsets, and a minimal DICOM series writer.

Tissue values are nominal, not physical. They are ordered like a T1
image (air dark, fat bright) and spaced far apart so any off-by-one in
stitching or windowing fails loudly instead of averaging out.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .core import VoxelGrid
from .dicomio import write_dicom_slice
from .errors import BadSpec, IoFailure, OverlapTooLarge
from .stitch import CineLocationSeries, shift_slices

__all__ = [
    "PhantomSpec",
    "SplitGroundTruth",
    "CineGroundTruth",
    "make_phantom_body",
    "phantom_regions",
    "split_blocks",
    "make_phantom_cine",
    "write_phantom_dicom_series",
    "noise_stream",
]

# 64-bit LCG (Knuth MMIX constants). Fixed here so every implementation
# of this generator produces byte-identical fixtures.
LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters for the synthetic body. Intensities must stay in
    ascending tissue order."""

    dims: tuple[int, int, int] = (64, 64, 96)  # (nx, ny, nz)
    spacing: tuple[float, float, float] = (0.5, 0.5, 1.0)
    background: int = 0
    lung: int = 30
    fat: int = 120
    muscle: int = 180
    bone: int = 230
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        tissues = (self.background, self.lung, self.fat, self.muscle, self.bone)
        if list(tissues) != sorted(set(tissues)):
            raise BadSpec(f"tissue intensities must be distinct ascending, got {tissues}")
        if tissues[-1] > 65535 or tissues[0] < 0:
            raise BadSpec(f"intensities outside 16-bit range: {tissues}")
        if self.noise_sigma < 0:
            raise BadSpec(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if min(self.spacing) <= 0:
            raise BadSpec(f"spacing must be positive, got {self.spacing}")


@dataclass(frozen=True)
class SplitGroundTruth:
    """What the stitcher must recover, junction by junction."""

    overlaps: tuple[int, ...]
    shifts: tuple[tuple[int, int], ...]
    boundaries: tuple[int, ...]  # nominal z cut points, len n+1

    def as_text(self) -> str:
        lines = [f"junctions = {len(self.overlaps)}\n"]
        for k, (o, (dx, dy)) in enumerate(zip(self.overlaps, self.shifts), start=1):
            lines.append(f"junction {k}: overlap={o} shift={dx},{dy}\n")
        return "".join(lines)


@dataclass(frozen=True)
class CineGroundTruth:
    """True peak-inhale index per location plus the ROI that reveals it."""

    peak_indices: tuple[int, ...]
    roi: tuple[int, int, int, int]

    def as_text(self) -> str:
        lines = [f"locations = {len(self.peak_indices)}\n",
                 f"roi = {','.join(str(c) for c in self.roi)}\n"]
        for i, p in enumerate(self.peak_indices):
            lines.append(f"location {i}: peak_index={p}\n")
        return "".join(lines)


def noise_stream(seed: int, count: int) -> np.ndarray:
    """`count` uniforms in [0, 1) from the documented 64-bit LCG.

    Stream definition: s_0 = seed; s_k = (A*s_{k-1} + C) mod 2^64;
    u_k = (s_k >> 11) / 2^53 for k = 1..count. The closed form below
    reproduces that sequence exactly without a Python-level loop.
    """
    if count == 0:
        return np.zeros(0)
    a = np.uint64(LCG_MULTIPLIER)
    with np.errstate(over="ignore"):
        powers = np.multiply.accumulate(np.full(count, a, dtype=np.uint64))
        # geometric sums 1 + A + ... + A^(k-1), k = 1..count
        geo = np.empty(count, dtype=np.uint64)
        geo[0] = 1
        if count > 1:
            np.cumsum(powers[:-1], out=geo[1:])
            geo[1:] += np.uint64(1)
        states = powers * np.uint64(seed & _MASK64) + np.uint64(LCG_INCREMENT) * geo
    return (states >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _ellipsoid(shape, center, semi):
    nz, ny, nx = shape
    z, y, x = np.ogrid[0:nz, 0:ny, 0:nx]
    cx, cy, cz = center
    ax, ay, az = semi
    return ((x - cx) / ax) ** 2 + ((y - cy) / ay) ** 2 + ((z - cz) / az) ** 2 <= 1.0


def phantom_regions(spec: PhantomSpec) -> dict[str, np.ndarray]:
    """Boolean masks of each painted region, in paint order.

    Later regions overwrite earlier ones when painting. The body keeps
    a clear margin from the x/y faces so in-plane shifts within that
    margin never clip tissue.
    """
    nx, ny, nz = spec.dims
    shape = (nz, ny, nx)
    cx, cy, cz = (nx - 1) / 2.0, (ny - 1) / 2.0, (nz - 1) / 2.0

    fat = _ellipsoid(shape, (cx, cy, cz), (0.40 * nx, 0.34 * ny, 0.47 * nz))
    muscle = _ellipsoid(shape, (cx, cy, cz), (0.38 * nx, 0.30 * ny, 0.45 * nz))
    lungs = _ellipsoid(
        shape, (cx - 0.15 * nx, cy - 0.08 * ny, cz + 0.18 * nz),
        (0.13 * nx, 0.17 * ny, 0.22 * nz),
    ) | _ellipsoid(
        shape, (cx + 0.15 * nx, cy - 0.08 * ny, cz + 0.18 * nz),
        (0.13 * nx, 0.17 * ny, 0.22 * nz),
    )
    r_heart = 0.09 * min(nx, ny)
    z, y, x = np.ogrid[0:nz, 0:ny, 0:nx]
    heart = (x - cx) ** 2 + (y - (cy - 0.05 * ny)) ** 2 + (z - (cz + 0.12 * nz)) ** 2 <= r_heart**2
    # spine last: nothing may repaint it, tests rely on an exact mean there
    r_spine = 0.06 * min(nx, ny)
    spine = ((x - cx) ** 2 + (y - (cy + 0.20 * ny)) ** 2 <= r_spine**2) & (
        np.abs(z - cz) <= 0.20 * nz
    )
    return {"fat": fat, "muscle": muscle, "lungs": lungs, "heart": heart, "spine": spine}


def make_phantom_body(spec: PhantomSpec) -> VoxelGrid:
    """Deterministic body-like 16-bit volume.

    Ellipsoid torso (muscle) in a fat shell, two lungs, a heart sphere,
    and a spine cylinder painted last. Optional additive uniform noise
    in [-sigma, +sigma] from the documented LCG, clipped to range.
    """
    nx, ny, nz = spec.dims
    if min(spec.dims) < 32:
        raise BadSpec(f"dims must be >= 32 per axis, got {spec.dims}")
    regions = phantom_regions(spec)
    vals = np.full((nz, ny, nx), spec.background, dtype=np.float64)
    vals[regions["fat"]] = spec.fat
    vals[regions["muscle"]] = spec.muscle
    vals[regions["lungs"]] = spec.lung
    vals[regions["heart"]] = spec.muscle
    vals[regions["spine"]] = spec.bone
    if spec.noise_sigma > 0:
        u = noise_stream(spec.seed, vals.size).reshape(vals.shape)
        vals = vals + (2.0 * u - 1.0) * spec.noise_sigma
    out = np.clip(np.round(vals), 0, 65535).astype(np.uint16)
    return VoxelGrid(out, spacing=spec.spacing)


def split_blocks(grid: VoxelGrid, n: int, overlaps=(), shifts=()):
    """Cut a volume into n z-blocks that overlap and are misaligned by
    known amounts; returns (blocks, ground_truth).

    Block k >= 1 keeps `overlaps[k-1]` extra slices duplicating the end
    of block k-1 and is stored translated by the negated accumulated
    shift, so a stitcher must recover `shifts[k-1]` at each junction to
    reassemble the original.
    """
    overlaps = tuple(int(o) for o in overlaps)
    shifts = tuple((int(dx), int(dy)) for dx, dy in shifts)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if len(overlaps) != n - 1 or len(shifts) != n - 1:
        raise ValueError(f"need {n - 1} overlaps and shifts, got {len(overlaps)}/{len(shifts)}")
    nz = grid.dims[2]
    cuts = [round(k * nz / n) for k in range(n + 1)]
    for k, o in enumerate(overlaps, start=1):
        if o < 0:
            raise ValueError(f"negative overlap at junction {k}")
        if o >= cuts[k] - cuts[k - 1] or o >= cuts[k + 1] - cuts[k]:
            raise OverlapTooLarge(f"junction {k}: overlap {o} >= block depth")

    blocks = []
    acc_dx = acc_dy = 0
    for k in range(n):
        start = cuts[k] - (overlaps[k - 1] if k > 0 else 0)
        span = grid.values[start : cuts[k + 1]]
        if k > 0:
            acc_dx += shifts[k - 1][0]
            acc_dy += shifts[k - 1][1]
        stored = shift_slices(span, -acc_dx, -acc_dy) if k > 0 else span.copy()
        origin = (
            grid.origin[0],
            grid.origin[1],
            grid.origin[2] + start * grid.spacing[2],
        )
        blocks.append(VoxelGrid(stored, spacing=grid.spacing, origin=origin))
    truth = SplitGroundTruth(overlaps, shifts, tuple(cuts))
    return blocks, truth


def _paint_cine_frame(spec: PhantomSpec, phase: float, amplitude: float) -> np.ndarray:
    """One 2D frame: torso cross-section whose heart radius and
    diaphragm indicator height follow cos(2*pi*phase)."""
    nx, ny, _ = spec.dims
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    y, x = np.ogrid[0:ny, 0:nx]

    img = np.full((ny, nx), spec.background, dtype=np.float64)
    img[((x - cx) / (0.40 * nx)) ** 2 + ((y - cy) / (0.34 * ny)) ** 2 <= 1.0] = spec.fat
    img[((x - cx) / (0.38 * nx)) ** 2 + ((y - cy) / (0.30 * ny)) ** 2 <= 1.0] = spec.muscle
    for sx in (-1, 1):
        img[
            ((x - (cx + sx * 0.15 * nx)) / (0.13 * nx)) ** 2
            + ((y - (cy - 0.08 * ny)) / (0.17 * ny)) ** 2
            <= 1.0
        ] = spec.lung

    c = np.cos(2.0 * np.pi * phase)
    r_heart = 0.08 * min(nx, ny) * (1.0 + 0.3 * amplitude * c)
    img[(x - cx) ** 2 + (y - (cy - 0.05 * ny)) ** 2 <= r_heart**2] = spec.muscle

    # breath indicator: a bright band rising from y_base; its top row is
    # coverage-shaded so the metric is strictly monotone in band height
    y_base = int(np.floor(cy + 0.28 * ny))
    height = 0.06 * ny + (amplitude * 0.06 * ny) * (1.0 + c) / 2.0
    y_top = y_base - height
    x_band = np.abs(np.arange(nx) - cx) <= 0.25 * nx
    full_top = int(np.ceil(y_top))
    img[full_top : y_base + 1, x_band] = spec.bone
    frac = full_top - y_top
    if 0 < frac and full_top - 1 >= 0:
        shade = spec.muscle + round((spec.bone - spec.muscle) * frac)
        row = full_top - 1
        img[row, x_band] = np.maximum(img[row, x_band], shade)
    return img.astype(np.uint16)


def make_phantom_cine(spec: PhantomSpec, frame_counts, phase_offsets, amplitude: float = 1.0):
    """Per-location cine series with known phases.

    `frame_counts` is one int or one per location; `phase_offsets[i]`
    is the integer frame index where location i starts its cycle.
    Location i, frame j is painted at phase ((offset_i + j) mod L_i)/L_i,
    so the true peak-inhale frame sits at (L_i - offset_i) mod L_i.
    Returns (series list, CineGroundTruth).

    With amplitude 0 every frame of a location is identical and the
    recorded peak index is nominal only.
    """
    offsets = [int(k) for k in phase_offsets]
    n_loc = len(offsets)
    if n_loc == 0:
        raise BadSpec("need at least one location")
    if isinstance(frame_counts, (int, np.integer)):
        counts = [int(frame_counts)] * n_loc
    else:
        counts = [int(c) for c in frame_counts]
    if len(counts) != n_loc:
        raise BadSpec(f"{len(counts)} frame counts for {n_loc} locations")
    if min(counts) < 2:
        raise BadSpec(f"every location needs >= 2 frames, got {counts}")
    if not 0.0 <= amplitude <= 1.0:
        raise BadSpec(f"amplitude must be in [0, 1], got {amplitude}")

    nx, ny, _ = spec.dims
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    # window around the indicator band, clear of heart and lungs
    roi = (
        int(cx - 0.25 * nx),
        int(cy + 0.02 * ny),
        int(2 * 0.25 * nx),
        int(0.28 * ny),
    )

    series = []
    peaks = []
    for i, (length, offset) in enumerate(zip(counts, offsets)):
        frames = np.stack([
            _paint_cine_frame(spec, ((offset + j) % length) / length, amplitude)
            for j in range(length)
        ])
        series.append(CineLocationSeries(index=i, frames=frames))
        peaks.append((length - offset) % length)
    return series, CineGroundTruth(tuple(peaks), roi)


def write_phantom_dicom_series(block: VoxelGrid, out_dir) -> list[str]:
    """One explicit-VR little-endian file per slice; returns paths.

    Slice z positions ascend from the block origin in steps of the z
    spacing. PixelSpacing is written (row, col) = (sy, sx).
    """
    out_dir = os.fspath(out_dir)
    sx, sy, sz = block.spacing
    ox, oy, oz = block.origin
    if block.depth != 16:
        raise BadSpec("DICOM fixture writer expects the 16-bit phantom")
    paths = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        for k in range(block.dims[2]):
            data = write_dicom_slice(
                block.values[k],
                pixel_spacing=(sy, sx),
                slice_thickness=sz,
                image_position=(ox, oy, oz + k * sz),
            )
            path = os.path.join(out_dir, f"slice_{k:04d}.dcm")
            with open(path, "wb") as fh:
                fh.write(data)
            paths.append(path)
    except OSError as exc:
        raise IoFailure(f"writing DICOM series to {out_dir}: {exc}") from exc
    return paths
