"""16-bit to 8-bit windowed conversion."""

from __future__ import annotations

import numpy as np

from .core import BodyMask, VoxelGrid, nearest_rank
from .errors import BadWindow

__all__ = ["convert_to_8bit", "default_window"]


def convert_to_8bit(grid: VoxelGrid, lo: float, hi: float) -> VoxelGrid:
    """Window [lo, hi] to [0, 255]: round(255 * clamp((v-lo)/(hi-lo), 0, 1)).

    Round half up. Geometry is preserved; only depth changes.
    """
    if lo >= hi:
        raise BadWindow(f"lo={lo} must be < hi={hi}")
    norm = np.clip((grid.values.astype(np.float64) - lo) / (hi - lo), 0.0, 1.0)
    out = np.floor(255.0 * norm + 0.5).astype(np.uint8)
    return VoxelGrid(out, spacing=grid.spacing, origin=grid.origin)


def default_window(grid: VoxelGrid, mask: BodyMask) -> tuple[float, float]:
    """Robust window over body voxels only: 0.5th and 99.5th percentiles.

    Keeps a stray hot voxel or the empty background from eating the
    8-bit range.
    """
    if grid.values.shape != mask.mask.shape:
        raise ValueError(
            f"mask shape {mask.mask.shape} != grid shape {grid.values.shape}"
        )
    body = grid.values[mask.mask]
    lo = nearest_rank(body, 0.5)
    hi = nearest_rank(body, 99.5)
    if lo >= hi:
        # flat-ish body; widen to the full occupied range or a unit span
        lo, hi = float(body.min()), float(max(body.max(), body.min() + 1))
    return lo, hi
