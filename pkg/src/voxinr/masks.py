"""Active-voxel masks, binary dilation, and training-row extraction.

The active-voxel mask marks every voxel where at least one grid of the
normalized volume is strictly positive. Dilation grows a mask by
repeated unions over the 27-voxel neighborhood (the 3x3x3 cube);
neighbors outside the bounding box contribute nothing. The fully set
mask is the bounding-box (dense) variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import MultiGridVolume, _validated_dims, voxel_coordinates


@dataclass(frozen=True)
class VoxelMask:
    """Bit-per-voxel occupancy set in the volume's x-fastest flat layout."""

    dims: tuple[int, int, int]
    bits: np.ndarray

    def __post_init__(self):
        dims = _validated_dims(self.dims)
        nvox = dims[0] * dims[1] * dims[2]
        bits = np.asarray(self.bits, dtype=bool).reshape(-1)
        if bits.size != nvox:
            raise ValueError(f"mask has {bits.size} bits, expected {nvox}")
        bits = np.ascontiguousarray(bits)
        bits.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def full(cls, dims: tuple[int, int, int]) -> "VoxelMask":
        """Bounding-box mask: every voxel set."""
        dims = _validated_dims(dims)
        return cls(dims, np.ones(dims[0] * dims[1] * dims[2], dtype=bool))

    @property
    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))

    def bits_3d(self) -> np.ndarray:
        """Read-only (nx, ny, nz) view of the bitset."""
        nx, ny, nz = self.dims
        return self.bits.reshape(nz, ny, nx).transpose(2, 1, 0)


def compute_avm(volume: MultiGridVolume) -> VoxelMask:
    """Mask of voxels where any grid holds a strictly positive value.

    Expects a normalized volume, so "positive" is evaluated on values in
    [0, 1]; zero background stays inactive.
    """
    return VoxelMask(volume.dims, (volume.data > 0.0).any(axis=0))


def _dilate_once(cube: np.ndarray) -> np.ndarray:
    """One 27-neighborhood union pass over a 3D bool array, edges clipped.

    The 3x3x3 box union is separable: dilating by the 3-element segment
    along each axis in turn equals one pass of the full cube union.
    """
    out = cube
    for axis in range(3):
        grown = out.copy()
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(1, None)
        hi[axis] = slice(None, -1)
        grown[tuple(lo)] |= out[tuple(hi)]
        grown[tuple(hi)] |= out[tuple(lo)]
        out = grown
    return out


def dilate(mask: VoxelMask, l: int) -> VoxelMask:
    """Grow a mask by ``l`` unions over the 3x3x3 neighborhood.

    ``l = 0`` returns the input unchanged; once every bit is set, further
    passes are a fixed point. Out-of-range neighbors are treated as
    unset (clipping, not wrapping).
    """
    if l < 0:
        raise ValueError(f"dilation count must be >= 0, got {l}")
    nx, ny, nz = mask.dims
    cube = mask.bits.reshape(nz, ny, nx).copy()
    for _ in range(l):
        if cube.all():
            break
        cube = _dilate_once(cube)
    return VoxelMask(mask.dims, cube.reshape(-1))


@dataclass(frozen=True)
class CoordinateDataset:
    """Flattened (coordinate, target-vector) training rows under a mask.

    Rows are ordered by ascending flat voxel index. Coordinates live in
    the unit cube (``index / (dim - 1)`` per axis); targets are the
    normalized grid values at that voxel, one per grid.
    """

    coords: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=np.float32)
        targets = np.ascontiguousarray(self.targets, dtype=np.float32)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError(f"coords must be (rows, 3), got {coords.shape}")
        if targets.ndim != 2 or targets.shape[0] != coords.shape[0]:
            raise ValueError("targets must have one row per coordinate")
        coords.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def grid_count(self) -> int:
        return self.targets.shape[1]


def extract_dataset(volume: MultiGridVolume, mask: VoxelMask) -> CoordinateDataset:
    """One training row per set mask bit, in ascending flat-index order."""
    if volume.dims != mask.dims:
        raise ValueError(f"volume dims {volume.dims} != mask dims {mask.dims}")
    indices = np.flatnonzero(mask.bits)
    coords = voxel_coordinates(volume.dims, indices)
    targets = np.ascontiguousarray(volume.data[:, indices].T)
    return CoordinateDataset(coords, targets)
