"""Core volume data model: scalar grids, sampling, statistics, masking,
and time-resolved stacks.

Conventions used everywhere in this package:

* A volume is stored as a numpy array of shape ``(nz, ny, nx)`` in C order,
  so ``values.ravel()`` runs x-fastest. RAW files on disk use exactly that
  byte order, which keeps serialization a plain memory dump.
* ``dims`` are reported as ``(nx, ny, nz)`` and physical quantities
  (``spacing``, ``origin``) as ``(x, y, z)`` triples in millimetres.
* Grids are 8- or 16-bit unsigned and axis-aligned; orientation matrices
  are out of scope and rejected at ingest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import EmptyMask, OutOfBounds, SpacingMismatch

__all__ = [
    "VoxelGrid",
    "BodyMask",
    "CineStack",
    "world_to_voxel",
    "voxel_to_world",
    "sample_trilinear",
    "percentile",
    "nearest_rank",
    "largest_component_mask",
    "embed_cine_frame",
]

_SUPPORTED_DTYPES = (np.uint8, np.uint16)

# 6-connectivity: faces only, no edges or corners.
CONNECTIVITY_6 = ndimage.generate_binary_structure(3, 1)


def _as_triple(v, name: str) -> tuple[float, float, float]:
    t = tuple(float(c) for c in v)
    if len(t) != 3:
        raise ValueError(f"{name} must have 3 components, got {v!r}")
    return t


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """A 3D scalar intensity lattice with physical spacing and origin.

    ``values`` has shape ``(nz, ny, nx)``; index order is ``[z, y, x]``.
    The array is made read-only on construction so grids can be shared
    across threads without copies.
    """

    values: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values)
        if arr.ndim != 3:
            raise ValueError(f"expected a 3D array, got shape {arr.shape}")
        if arr.dtype not in _SUPPORTED_DTYPES:
            raise ValueError(
                f"unsupported dtype {arr.dtype}; volumes are uint8 or uint16"
            )
        if min(arr.shape) < 1:
            raise ValueError(f"all dims must be >= 1, got shape {arr.shape}")
        arr = arr.copy() if arr is self.values else arr
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "spacing", _as_triple(self.spacing, "spacing"))
        object.__setattr__(self, "origin", _as_triple(self.origin, "origin"))
        if min(self.spacing) <= 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int, int]:
        """Voxel counts as (nx, ny, nz)."""
        nz, ny, nx = self.values.shape
        return (nx, ny, nz)

    @property
    def depth(self) -> int:
        """Bits per voxel: 8 or 16."""
        return 8 if self.values.dtype == np.uint8 else 16

    def same_geometry(self, other: "VoxelGrid") -> bool:
        return (
            self.values.shape == other.values.shape
            and self.spacing == other.spacing
            and self.origin == other.origin
        )


@dataclass(frozen=True, eq=False)
class BodyMask:
    """Boolean occupancy for one volume; true voxels form a single
    6-connected component after cleaning."""

    mask: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.mask, dtype=bool)
        if arr.ndim != 3:
            raise ValueError(f"expected a 3D mask, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "mask", arr)
        object.__setattr__(self, "spacing", _as_triple(self.spacing, "spacing"))
        object.__setattr__(self, "origin", _as_triple(self.origin, "origin"))

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.mask.shape
        return (nx, ny, nz)

    @property
    def voxel_count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class CineStack:
    """T co-registered volumes covering one normalized cycle.

    Frame 0 is the cycle anchor: peak inhale. All frames share dims,
    spacing, origin, and depth.
    """

    frames: tuple[VoxelGrid, ...]
    cycle_duration: float = 1.0

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise ValueError(f"a cine stack needs >= 2 frames, got {len(frames)}")
        first = frames[0]
        for i, f in enumerate(frames[1:], start=1):
            if not first.same_geometry(f) or first.depth != f.depth:
                raise ValueError(f"frame {i} geometry differs from frame 0")
        if self.cycle_duration <= 0:
            raise ValueError("cycle_duration must be positive")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)


def world_to_voxel(grid: VoxelGrid, point) -> tuple[np.ndarray, bool]:
    """Map a world point (mm) to continuous voxel coordinates.

    Returns ``(coords, out_of_bounds)``. Coordinates may lie outside
    ``[0, dims - 1]``; that is reported by the flag, never an error.
    """
    p = np.asarray(point, dtype=np.float64)
    v = (p - np.array(grid.origin)) / np.array(grid.spacing)
    lim = np.array(grid.dims, dtype=np.float64) - 1.0
    oob = bool(np.any(v < 0.0) or np.any(v > lim))
    return v, oob


def voxel_to_world(grid: VoxelGrid, coords) -> np.ndarray:
    """Inverse of :func:`world_to_voxel` (continuous coords -> mm point)."""
    v = np.asarray(coords, dtype=np.float64)
    return v * np.array(grid.spacing) + np.array(grid.origin)


def trilinear_on_array(values: np.ndarray, x, y, z) -> np.ndarray:
    """Trilinear blend of the 8 lattice neighbours, vectorized over points.

    ``values`` is ``(nz, ny, nx)``; ``x, y, z`` are float arrays already
    verified (or clipped) to lie in ``[0, dim - 1]``.
    """
    nz, ny, nx = values.shape
    x0 = np.clip(np.floor(x).astype(np.intp), 0, max(nx - 2, 0))
    y0 = np.clip(np.floor(y).astype(np.intp), 0, max(ny - 2, 0))
    z0 = np.clip(np.floor(z).astype(np.intp), 0, max(nz - 2, 0))
    x1 = np.minimum(x0 + 1, nx - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    z1 = np.minimum(z0 + 1, nz - 1)
    fx = x - x0
    fy = y - y0
    fz = z - z0

    c000 = values[z0, y0, x0].astype(np.float64)
    c100 = values[z0, y0, x1].astype(np.float64)
    c010 = values[z0, y1, x0].astype(np.float64)
    c110 = values[z0, y1, x1].astype(np.float64)
    c001 = values[z1, y0, x0].astype(np.float64)
    c101 = values[z1, y0, x1].astype(np.float64)
    c011 = values[z1, y1, x0].astype(np.float64)
    c111 = values[z1, y1, x1].astype(np.float64)

    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


def sample_trilinear(grid: VoxelGrid, coords):
    """Sample the grid at continuous voxel coordinates.

    Accepts a single ``(x, y, z)`` triple or an ``(N, 3)`` batch. Raises
    :class:`OutOfBounds` if any coordinate leaves ``[0, dims - 1]``.
    """
    pts = np.asarray(coords, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValueError(f"expected (N, 3) coordinates, got shape {pts.shape}")
    lim = np.array(grid.dims, dtype=np.float64) - 1.0
    if np.any(pts < 0.0) or np.any(pts > lim):
        raise OutOfBounds(f"sample coordinates outside [0, {lim}]")
    out = trilinear_on_array(grid.values, pts[:, 0], pts[:, 1], pts[:, 2])
    return float(out[0]) if single else out


def nearest_rank(values, p: float) -> float:
    """Nearest-rank percentile: sorted[ceil(p/100 * n)] with 1-based rank."""
    if not 0 <= p <= 100:
        raise ValueError(f"percentile must be in [0, 100], got {p}")
    flat = np.sort(np.asarray(values).ravel())
    if flat.size == 0:
        raise ValueError("percentile of an empty collection")
    rank = int(np.ceil(p / 100.0 * flat.size))
    rank = min(max(rank, 1), flat.size)
    return float(flat[rank - 1])


def percentile(grid: VoxelGrid, p: float) -> float:
    """Nearest-rank percentile over all voxels."""
    return nearest_rank(grid.values, p)


def largest_component_mask(grid: VoxelGrid, threshold: float) -> BodyMask:
    """Mask of the largest 6-connected component among voxels >= threshold.

    Ties on component size are broken by the component containing the
    lowest flat (x-fastest) voxel index, so output is deterministic.
    Raises :class:`EmptyMask` when nothing clears the threshold.
    """
    binary = grid.values >= threshold
    if not binary.any():
        raise EmptyMask(f"no voxel >= {threshold}")
    labels, n = ndimage.label(binary, structure=CONNECTIVITY_6)
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    best = counts.max()
    candidates = np.flatnonzero(counts == best)
    if len(candidates) > 1:
        flat = labels.ravel()
        # first occurrence in x-fastest order decides the tie
        winner = min(candidates, key=lambda lab: int(np.argmax(flat == lab)))
    else:
        winner = candidates[0]
    return BodyMask(labels == winner, spacing=grid.spacing, origin=grid.origin)


def embed_cine_frame(base: VoxelGrid, frame: VoxelGrid, offset) -> VoxelGrid:
    """Replace a box of ``base`` with ``frame`` placed at a voxel offset.

    Hard replacement, no blending. The placed frame must fit entirely
    inside ``base`` and share spacing and depth.
    """
    ox, oy, oz = (int(c) for c in offset)
    if base.spacing != frame.spacing:
        raise SpacingMismatch(
            f"frame spacing {frame.spacing} != base spacing {base.spacing}"
        )
    if base.depth != frame.depth:
        raise SpacingMismatch(f"frame depth {frame.depth} != base depth {base.depth}")
    fx, fy, fz = frame.dims
    bx, by, bz = base.dims
    if ox < 0 or oy < 0 or oz < 0 or ox + fx > bx or oy + fy > by or oz + fz > bz:
        raise OutOfBounds(
            f"frame {frame.dims} at offset {(ox, oy, oz)} exceeds base {base.dims}"
        )
    out = base.values.copy()
    out[oz : oz + fz, oy : oy + fy, ox : ox + fx] = frame.values
    return VoxelGrid(out, spacing=base.spacing, origin=base.origin)
