"""Block stitching and 4D cycle normalization.

Whole-body MR arrives as overlapping axial blocks acquired separately,
with small in-plane shifts between them from involuntary movement. This
module automates the manual cleanup: find how many slices two adjacent
blocks share, recover the integer translation between them, delete the
duplicated slices, and concatenate. It also normalizes per-location
cine series to one synchronized cycle anchored at peak inhale.

Similarity is plain NCC over the overlap slices; shifts are searched
exhaustively on the integer lattice, which keeps results exact,
deterministic, and easy to reason about.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import CineStack, VoxelGrid
from .errors import (
    EmptyRoi,
    EmptySeries,
    GeometryMismatch,
    LowConfidenceWarning,
    NoOverlap,
    OverlapTooLarge,
    PhaseWarning,
)

__all__ = [
    "BlockAlignment",
    "CineLocationSeries",
    "translate_image",
    "shift_slices",
    "ncc",
    "breath_metric",
    "detect_overlap",
    "find_translation",
    "concatenate_blocks",
    "normalize_cine",
    "write_alignment_report",
]

DEFAULT_SEARCH_RADIUS = 10
CONFIDENCE_THRESHOLD = 0.6
# scores closer than this are a tie and fall to the documented tie-breaks
_SCORE_EPS = 1e-9


@dataclass(frozen=True)
class BlockAlignment:
    """Recovered junction parameters between two adjacent blocks."""

    overlap: int
    shift: tuple[int, int]  # (dx, dy) to apply to the later block
    confidence: float


@dataclass(frozen=True, eq=False)
class CineLocationSeries:
    """Frames acquired sequentially at one slice location."""

    index: int
    frames: np.ndarray  # (n_frames, rows, columns), unsigned int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.frames)
        if arr.ndim != 3 or arr.shape[0] < 2:
            raise ValueError(f"need (T>=2, rows, cols) frames, got {arr.shape}")
        if arr.dtype not in (np.uint8, np.uint16):
            raise ValueError(f"frames must be uint8/uint16, got {arr.dtype}")
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)

    def __len__(self) -> int:
        return self.frames.shape[0]


def translate_image(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift by integer voxels, zero-filling exposed edges.

    out[y, x] = img[y - dy, x - dx].
    """
    h, w = img.shape
    out = np.zeros_like(img)
    xs0, xd0 = (0, dx) if dx >= 0 else (-dx, 0)
    ys0, yd0 = (0, dy) if dy >= 0 else (-dy, 0)
    cw, ch = w - abs(dx), h - abs(dy)
    if cw > 0 and ch > 0:
        out[yd0 : yd0 + ch, xd0 : xd0 + cw] = img[ys0 : ys0 + ch, xs0 : xs0 + cw]
    return out


def shift_slices(values: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Apply the same in-plane shift to every slice of a (nz, ny, nx) array."""
    if dx == 0 and dy == 0:
        return values.copy()
    return np.stack([translate_image(sl, dx, dy) for sl in values])


def ncc(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized cross-correlation of two equally shaped images.

    Featureless input (zero variance on either side) scores 0.
    """
    da = a.astype(np.float64).ravel()
    db = b.astype(np.float64).ravel()
    da -= da.mean()
    db -= db.mean()
    denom = np.sqrt((da @ da) * (db @ db))
    if denom == 0.0:
        return 0.0
    return float((da @ db) / denom)


def _mean_ncc(a_slices: np.ndarray, b_slices: np.ndarray, dx: int, dy: int) -> float:
    """Mean NCC over slice pairs with B shifted by (dx, dy).

    Compares content on the overlap region only, so border zero-fill
    never dilutes the score.
    """
    _, h, w = a_slices.shape
    x0, x1 = max(0, dx), min(w, w + dx)
    y0, y1 = max(0, dy), min(h, h + dy)
    if x0 >= x1 or y0 >= y1:
        return 0.0
    a_region = a_slices[:, y0:y1, x0:x1]
    b_region = b_slices[:, y0 - dy : y1 - dy, x0 - dx : x1 - dx]
    return float(np.mean([ncc(a, b) for a, b in zip(a_region, b_region)]))


def _best_shift(a_slices, b_slices, radius: int) -> tuple[int, int, float]:
    """Exhaustive integer search within +-radius.

    Ties (within _SCORE_EPS) go to the smallest |dx|+|dy|, then
    lexicographic (dx, dy). Iteration order is fixed, so the reduction
    is deterministic no matter how the scoring is parallelized.
    """
    shifts = [(dx, dy) for dx in range(-radius, radius + 1)
              for dy in range(-radius, radius + 1)]
    scores = [_mean_ncc(a_slices, b_slices, dx, dy) for dx, dy in shifts]
    best = max(scores)
    candidates = [
        (abs(dx) + abs(dy), dx, dy)
        for (dx, dy), s in zip(shifts, scores)
        if s >= best - _SCORE_EPS
    ]
    _, dx, dy = min(candidates)
    return dx, dy, best


def _check_in_plane(a: VoxelGrid, b: VoxelGrid) -> None:
    if a.dims[:2] != b.dims[:2] or a.spacing != b.spacing or a.depth != b.depth:
        raise GeometryMismatch(
            f"blocks differ in plane: {a.dims[:2]}/{a.spacing} vs {b.dims[:2]}/{b.spacing}"
        )


def find_translation(
    a: VoxelGrid, b: VoxelGrid, overlap: int, radius: int = DEFAULT_SEARCH_RADIUS
) -> tuple[int, int]:
    """Integer (dx, dy) aligning B's first `overlap` slices to A's last."""
    if overlap < 1:
        raise NoOverlap(f"overlap={overlap}")
    _check_in_plane(a, b)
    if overlap > min(a.dims[2], b.dims[2]):
        raise OverlapTooLarge(f"overlap {overlap} exceeds block depth")
    dx, dy, _ = _best_shift(a.values[-overlap:], b.values[:overlap], radius)
    return dx, dy


def detect_overlap(
    a: VoxelGrid,
    b: VoxelGrid,
    max_overlap: int,
    radius: int = DEFAULT_SEARCH_RADIUS,
    threshold: float = CONFIDENCE_THRESHOLD,
) -> BlockAlignment:
    """Find how many trailing slices of A reappear leading B, and where.

    Each candidate count o is scored by the best mean NCC over shifts
    within +-radius; the best-scoring o wins and score ties go to the
    larger o. Below `threshold` the result is o=0 with a
    LowConfidenceWarning instead of a hard failure.
    """
    _check_in_plane(a, b)
    limit = min(max_overlap, a.dims[2], b.dims[2])
    best: tuple[int, int, int, float] | None = None  # (o, dx, dy, score)
    for o in range(1, limit + 1):
        dx, dy, score = _best_shift(a.values[-o:], b.values[:o], radius)
        if best is None or score >= best[3] - _SCORE_EPS:
            best = (o, dx, dy, score)
    if best is None or best[3] < threshold:
        found = 0.0 if best is None else best[3]
        warnings.warn(
            f"best overlap score {found:.3f} below {threshold}; treating as no overlap",
            LowConfidenceWarning,
            stacklevel=2,
        )
        return BlockAlignment(0, (0, 0), found)
    o, dx, dy, score = best
    return BlockAlignment(o, (dx, dy), score)


def concatenate_blocks(blocks, alignments) -> VoxelGrid:
    """Join blocks along z: drop each later block's first o slices and
    apply its accumulated shift (junction shifts chain), zero-filling
    exposed edges.

    Output depth is sum(nz) - sum(o). Origin and spacing come from the
    first block.
    """
    blocks = list(blocks)
    alignments = list(alignments)
    if not blocks:
        raise ValueError("no blocks")
    if len(alignments) != len(blocks) - 1:
        raise ValueError(f"{len(blocks)} blocks need {len(blocks) - 1} alignments")
    first = blocks[0]
    parts = [first.values]
    acc_dx = acc_dy = 0
    for k, (blk, align) in enumerate(zip(blocks[1:], alignments), start=1):
        _check_in_plane(first, blk)
        o = align.overlap
        if o >= blk.dims[2]:
            raise OverlapTooLarge(f"junction {k}: overlap {o} >= block depth {blk.dims[2]}")
        if o < 0:
            raise ValueError(f"junction {k}: negative overlap")
        acc_dx += align.shift[0]
        acc_dy += align.shift[1]
        parts.append(shift_slices(blk.values[o:], acc_dx, acc_dy))
    stitched = np.concatenate(parts, axis=0)
    return VoxelGrid(stitched, spacing=first.spacing, origin=first.origin)


def breath_metric(image: np.ndarray, roi: tuple[int, int, int, int]) -> float:
    """Mean intensity over roi=(x0, y0, width, height).

    Higher means the diaphragm indicator fills more of the window, i.e.
    closer to peak inhale. The ROI must lie fully inside the image.
    """
    x0, y0, w, h = (int(c) for c in roi)
    rows, cols = image.shape
    if w <= 0 or h <= 0:
        raise EmptyRoi(f"roi {roi} has zero area")
    if x0 < 0 or y0 < 0 or x0 + w > cols or y0 + h > rows:
        raise EmptyRoi(f"roi {roi} outside {cols}x{rows} image")
    return float(image[y0 : y0 + h, x0 : x0 + w].mean())


def default_breath_roi(rows: int, cols: int) -> tuple[int, int, int, int]:
    """Center-bottom third of the image, where the diaphragm moves."""
    return (cols // 3, (2 * rows) // 3, cols // 3, rows // 3)


def resample_indices(length: int, target: int) -> list[int]:
    """Nearest-index resampling: duplicate or drop frames, never blend."""
    return [(i * length) // target for i in range(target)]


def normalize_cine(
    series,
    frame_count: int,
    roi: tuple[int, int, int, int],
    *,
    spacing=(1.0, 1.0, 1.0),
    origin=(0.0, 0.0, 0.0),
    cycle_duration: float = 1.0,
) -> CineStack:
    """Anchor every location's cycle at peak inhale and resample to a
    common frame count, then assemble per-time volumes.

    Per location: rotate so the first breath-metric argmax becomes
    frame 0 (peak inhale); if the minimum then lands in the first half
    of the cycle the ordering is suspect and a PhaseWarning is issued;
    resample to `frame_count` frames by nearest index. Locations are
    stacked along z in ascending location order.
    """
    series = sorted(series, key=lambda s: s.index)
    if not series:
        raise EmptySeries("no cine locations")
    if frame_count < 2:
        raise ValueError(f"frame_count must be >= 2, got {frame_count}")
    shape = series[0].frames.shape[1:]
    dtype = series[0].frames.dtype
    for s in series:
        if s.frames.shape[0] < 2:
            raise EmptySeries(f"location {s.index} has {s.frames.shape[0]} frames")
        if s.frames.shape[1:] != shape or s.frames.dtype != dtype:
            raise GeometryMismatch(f"location {s.index} geometry differs")

    normalized = []
    for s in series:
        metrics = [breath_metric(f, roi) for f in s.frames]
        peak = int(np.argmax(metrics))
        rolled = np.roll(s.frames, -peak, axis=0)
        rolled_metrics = metrics[peak:] + metrics[:peak]
        trough = int(np.argmin(rolled_metrics))
        if trough < len(rolled_metrics) // 2:
            warnings.warn(
                f"location {s.index}: exhale at frame {trough} of {len(rolled_metrics)}, "
                "expected it in the second half",
                PhaseWarning,
                stacklevel=2,
            )
        idx = resample_indices(rolled.shape[0], frame_count)
        normalized.append(rolled[idx])

    frames = []
    for t in range(frame_count):
        volume = np.stack([loc[t] for loc in normalized])
        frames.append(VoxelGrid(volume, spacing=spacing, origin=origin))
    return CineStack(tuple(frames), cycle_duration=cycle_duration)


def write_alignment_report(alignments, path, modes=None) -> None:
    """One line per junction: overlap, shift, confidence, auto/manual."""
    alignments = list(alignments)
    if modes is None:
        modes = ["auto"] * len(alignments)
    lines = [
        f"junction {k}: overlap={a.overlap} shift={a.shift[0]},{a.shift[1]} "
        f"confidence={a.confidence:.6f} mode={m}\n"
        for k, (a, m) in enumerate(zip(alignments, modes), start=1)
    ]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.writelines(lines)
