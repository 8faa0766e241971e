"""End-to-end orchestration: mask variants, the comparison sweep, and
region utilities for localized error inspection.

A sweep trains one network per mask variant from the same seed and
config, so quality differences across rows are attributable to the
sampling strategy alone. All variants share a single normalization pass
and are evaluated on the full bounding box.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .masks import VoxelMask, compute_avm, dilate, extract_dataset
from .metrics import QualityReport, evaluate
from .training import TrainConfig, TrainReport, reconstruct_full, train
from .volume import MultiGridVolume, NormalizationParams, normalize


@dataclass(frozen=True)
class MaskVariant:
    """One sampling strategy: dense box, active voxels, or a dilation of them."""

    kind: str
    level: int = 0

    _KINDS = ("bbx", "avm", "dilated")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown mask variant {self.kind!r}")
        if self.kind == "dilated" and self.level < 1:
            raise ValueError("dilated variants need a level >= 1")
        if self.kind != "dilated" and self.level != 0:
            raise ValueError(f"variant {self.kind!r} takes no level")

    @classmethod
    def parse(cls, text: str) -> "MaskVariant":
        """Parse ``bbx``, ``avm``, or ``dilated:<level>``."""
        text = text.strip().lower()
        if text in ("bbx", "avm"):
            return cls(text)
        if text.startswith("dilated:"):
            try:
                level = int(text.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad dilation level in {text!r}") from None
            return cls("dilated", level)
        raise ValueError(f"unknown mask mode {text!r} (expected bbx, avm, or dilated:<l>)")

    @property
    def label(self) -> str:
        if self.kind == "dilated":
            return f"dilated:{self.level}"
        return self.kind.upper()


@dataclass(frozen=True)
class SweepSpec:
    """Mask variants to compare under one shared training config."""

    variants: tuple[MaskVariant, ...]
    config: TrainConfig

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        if not self.variants:
            raise ValueError("sweep needs at least one variant")
        if len(set(self.variants)) != len(self.variants):
            raise ValueError("sweep variants must be unique")


def build_mask(
    normalized: MultiGridVolume,
    variant: MaskVariant,
    avm: VoxelMask | None = None,
) -> VoxelMask:
    """Materialize a variant's voxel mask; pass a precomputed active mask
    to avoid rescanning the volume."""
    if variant.kind == "bbx":
        return VoxelMask.full(normalized.dims)
    if avm is None:
        avm = compute_avm(normalized)
    if variant.kind == "avm":
        return avm
    return dilate(avm, variant.level)


@dataclass
class VariantResult:
    """One sweep row: the trained run, its scores, and the reconstruction."""

    variant: MaskVariant
    train_report: TrainReport
    quality: QualityReport
    reconstruction: MultiGridVolume


def run_sweep(
    volume: MultiGridVolume,
    spec: SweepSpec,
    include_encoder: bool = False,
    progress=None,
) -> tuple[list[VariantResult], NormalizationParams]:
    """Train, reconstruct, and score every variant of the spec in order.

    The raw volume is normalized once; every variant trains against the
    same normalized data and is scored on the full bounding box.
    ``progress(label, train_report)`` is called after each variant trains.
    """
    normalized, params = normalize(volume)
    avm = compute_avm(normalized)
    config = replace(spec.config, grid_count=volume.grid_count)

    results = []
    for variant in spec.variants:
        mask = build_mask(normalized, variant, avm=avm)
        dataset = extract_dataset(normalized, mask)
        report = train(dataset, config, variant_label=variant.label)
        if progress is not None:
            progress(variant.label, report)
        recon = reconstruct_full(
            report.network, volume.dims, grid_names=volume.names
        )
        quality = evaluate(
            normalized,
            recon,
            net=report.network,
            seconds=report.wall_seconds,
            label=variant.label,
            include_encoder=include_encoder,
        )
        results.append(VariantResult(variant, report, quality, recon))
    return results, params


def parse_region(text: str, dims: tuple[int, int, int]) -> tuple[slice, slice, slice]:
    """Parse ``x0:x1,y0:y1,z0:z1`` (half-open) into per-axis slices."""
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"region must be x0:x1,y0:y1,z0:z1, got {text!r}")
    slices = []
    for part, dim in zip(parts, dims):
        bounds = part.split(":")
        if len(bounds) != 2:
            raise ValueError(f"bad region axis {part!r}")
        lo, hi = int(bounds[0]), int(bounds[1])
        if not (0 <= lo < hi <= dim):
            raise ValueError(f"region axis {part!r} outside dimension {dim}")
        slices.append(slice(lo, hi))
    return tuple(slices)


def region_mean(volume: MultiGridVolume, grid_name: str, region: tuple[slice, slice, slice]) -> float:
    """Mean grid value over a voxel box."""
    return float(volume.grid_3d(grid_name)[region].mean(dtype=np.float64))
