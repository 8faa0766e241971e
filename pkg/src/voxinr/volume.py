"""Dense multi-grid volumes and per-grid min-max normalization.

A volume is a rectangular voxel block holding one or more named scalar
grids (e.g. density and temperature of the same simulation frame). All
grids share the volume dimensions and the flat x-fastest index layout::

    idx = x + nx * (y + ny * z)

Values are stored as 32-bit floats; reductions that feed metrics are
accumulated in 64-bit elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


def linear_index(dims: tuple[int, int, int], x, y, z):
    """Flat voxel index for (x, y, z); x varies fastest."""
    nx, ny, _ = dims
    return x + nx * (y + ny * z)


def index_to_xyz(dims: tuple[int, int, int], idx):
    """Inverse of :func:`linear_index`. Accepts scalars or arrays."""
    nx, ny, _ = dims
    idx = np.asarray(idx)
    x = idx % nx
    y = (idx // nx) % ny
    z = idx // (nx * ny)
    return x, y, z


def voxel_coordinates(dims: tuple[int, int, int], indices) -> np.ndarray:
    """Map flat voxel indices to float32 coordinates in the unit cube.

    Component c of a voxel is ``index_c / (dim_c - 1)``, or 0.0 on a
    degenerate single-voxel axis. Dataset extraction and full-volume
    reconstruction both go through this function so the network is
    evaluated at bit-identical inputs in both paths.
    """
    idx = np.asarray(indices, dtype=np.int64)
    x, y, z = index_to_xyz(dims, idx)
    coords = np.empty((idx.size, 3), dtype=np.float32)
    for c, (axis_idx, dim) in enumerate(zip((x, y, z), dims)):
        if dim > 1:
            coords[:, c] = axis_idx.astype(np.float32) / np.float32(dim - 1)
        else:
            coords[:, c] = 0.0
    return coords


def _validated_dims(dims) -> tuple[int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError(f"dims must be three positive integers, got {dims!r}")
    return dims


@dataclass(frozen=True)
class MultiGridVolume:
    """Dense 3D volume with one or more named scalar grids.

    ``data`` is a read-only ``(grid_count, nx*ny*nz)`` float32 block in the
    x-fastest layout. Instances are immutable after construction and safe
    to share across threads.
    """

    dims: tuple[int, int, int]
    names: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        dims = _validated_dims(self.dims)
        names = tuple(str(n) for n in self.names)
        if not names:
            raise ValueError("volume needs at least one grid")
        if len(set(names)) != len(names):
            raise ValueError(f"grid names must be unique, got {names!r}")
        nvox = dims[0] * dims[1] * dims[2]
        data = np.asarray(self.data, dtype=np.float32)
        if data.shape != (len(names), nvox):
            raise ValueError(
                f"data shape {data.shape} does not match "
                f"{len(names)} grids of {nvox} voxels"
            )
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_grids(
        cls,
        dims: tuple[int, int, int],
        grids: Iterable[tuple[str, np.ndarray]],
    ) -> "MultiGridVolume":
        """Build a volume from an ordered iterable of (name, flat values)."""
        grids = list(grids)
        names = tuple(name for name, _ in grids)
        data = np.stack(
            [np.asarray(v, dtype=np.float32).reshape(-1) for _, v in grids]
        ) if grids else np.empty((0, 0), dtype=np.float32)
        return cls(dims, names, data)

    @property
    def grid_count(self) -> int:
        return len(self.names)

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def value_count(self) -> int:
        """Total stored scalars: voxels times grids."""
        return self.voxel_count * self.grid_count

    def grid(self, name: str) -> np.ndarray:
        """Flat read-only view of one grid."""
        return self.data[self.names.index(name)]

    def grid_3d(self, name: str) -> np.ndarray:
        """Read-only (nx, ny, nz) view of one grid."""
        nx, ny, nz = self.dims
        return self.grid(name).reshape(nz, ny, nx).transpose(2, 1, 0)


@dataclass(frozen=True)
class NormalizationParams:
    """Per-grid raw (min, max) recorded when a volume was normalized."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float32).reshape(-1)
        maxs = np.asarray(self.maxs, dtype=np.float32).reshape(-1)
        if mins.shape != maxs.shape:
            raise ValueError("mins and maxs must have equal length")
        if np.any(maxs < mins):
            raise ValueError("every grid must satisfy max >= min")
        mins.setflags(write=False)
        maxs.setflags(write=False)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def grid_count(self) -> int:
        return int(self.mins.size)


def normalize(volume: MultiGridVolume) -> tuple[MultiGridVolume, NormalizationParams]:
    """Map every grid affinely onto [0, 1] and record the raw (min, max).

    A constant grid (max == min) maps to all zeros so the transform stays
    total; :func:`denormalize` then restores the constant.
    """
    mins = volume.data.min(axis=1)
    maxs = volume.data.max(axis=1)
    ranges = maxs.astype(np.float64) - mins.astype(np.float64)
    out = np.zeros_like(volume.data)
    for g in range(volume.grid_count):
        if ranges[g] > 0:
            shifted = volume.data[g].astype(np.float64) - float(mins[g])
            out[g] = (shifted / ranges[g]).astype(np.float32)
    normalized = MultiGridVolume(volume.dims, volume.names, out)
    return normalized, NormalizationParams(mins, maxs)


def denormalize(volume: MultiGridVolume, params: NormalizationParams) -> MultiGridVolume:
    """Invert :func:`normalize`: v -> v * (max - min) + min per grid."""
    if params.grid_count != volume.grid_count:
        raise ValueError(
            f"params cover {params.grid_count} grids, volume has {volume.grid_count}"
        )
    out = np.empty_like(volume.data)
    for g in range(volume.grid_count):
        span = float(params.maxs[g]) - float(params.mins[g])
        raw = volume.data[g].astype(np.float64) * span + float(params.mins[g])
        out[g] = raw.astype(np.float32)
    return MultiGridVolume(volume.dims, volume.names, out)
