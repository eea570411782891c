"""voxelbody: build, stitch, animate, render, and fabricate voxel bodies
from whole-body MR scan blocks."""

from .core import (
    BodyMask,
    CineStack,
    VoxelGrid,
    embed_cine_frame,
    largest_component_mask,
    percentile,
    sample_trilinear,
    voxel_to_world,
    world_to_voxel,
)
from .errors import VoxelBodyError

__version__ = "0.1.0"
