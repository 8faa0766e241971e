"""Reconstruction-quality metrics: NRMSE, PSNR, SSIM, combined score.

All reductions run in 64-bit floats regardless of input precision. PSNR
assumes unit-range data (peak level 1); a perfect reconstruction yields
an infinite PSNR sentinel that is clamped to ``PSNR_MAX_DB`` only inside
the combined score, keeping the raw metric honest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .network import FfNetwork, param_count
from .volume import MultiGridVolume

PSNR_MAX_DB = 48.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_f64(reference, predicted) -> tuple[np.ndarray, np.ndarray]:
    ref = np.asarray(reference, dtype=np.float64)
    pred = np.asarray(predicted, dtype=np.float64)
    if ref.shape != pred.shape:
        raise ValueError(f"shape mismatch: reference {ref.shape}, predicted {pred.shape}")
    return ref, pred


def nrmse(reference, predicted) -> float:
    """Root-mean-squared error divided by the reference value range.

    Not symmetric in its arguments: the normalizing range comes from the
    reference. A constant reference has no range and is an error.
    """
    ref, pred = _as_f64(reference, predicted)
    value_range = float(ref.max() - ref.min())
    if value_range <= 0.0:
        raise ValueError("constant reference: value range is zero")
    rmse = math.sqrt(float(np.mean((ref - pred) ** 2)))
    return rmse / value_range


def psnr(reference, predicted) -> float:
    """Peak signal-to-noise ratio in dB for unit-range data.

    Returns ``-10*log10(MSE)``; identical inputs give +inf.
    """
    ref, pred = _as_f64(reference, predicted)
    mse = float(np.mean((ref - pred) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """2D Gaussian weighting window, normalized to sum 1."""
    half = (size - 1) / 2.0
    offsets = np.arange(size, dtype=np.float64) - half
    one_d = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    window = np.outer(one_d, one_d)
    return window / window.sum()


def _ssim_slice(ref: np.ndarray, pred: np.ndarray, window: np.ndarray) -> float:
    """Mean SSIM of one 2D slice over all fully interior windows.

    Uses weighted window statistics (no sample-covariance correction)
    with stabilizers C1 = (K1*L)^2 and C2 = (K2*L)^2 at L = 1.
    """
    size = window.shape[0]
    if ref.shape[0] < size or ref.shape[1] < size:
        raise ValueError(f"slice {ref.shape} smaller than the {size}x{size} window")
    axes = ([2, 3], [0, 1])
    wins_r = sliding_window_view(ref, (size, size))
    wins_p = sliding_window_view(pred, (size, size))
    mu_r = np.tensordot(wins_r, window, axes=axes)
    mu_p = np.tensordot(wins_p, window, axes=axes)
    m_rr = np.tensordot(wins_r * wins_r, window, axes=axes)
    m_pp = np.tensordot(wins_p * wins_p, window, axes=axes)
    m_rp = np.tensordot(wins_r * wins_p, window, axes=axes)
    var_r = m_rr - mu_r * mu_r
    var_p = m_pp - mu_p * mu_p
    cov = m_rp - mu_r * mu_p

    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    ssim_map = ((2.0 * mu_r * mu_p + c1) * (2.0 * cov + c2)) / (
        (mu_r * mu_r + mu_p * mu_p + c1) * (var_r + var_p + c2)
    )
    return float(ssim_map.mean())


def ssim(reference, predicted) -> float:
    """Structural similarity for a 2D slice or a 3D (nx, ny, nz) grid.

    3D grids are scored per Z-slice in 2D with an 11x11 Gaussian window
    (sigma 1.5) and averaged over slices with equal weight. Values are
    expected in [0, 1].
    """
    ref, pred = _as_f64(reference, predicted)
    window = gaussian_window()
    if ref.ndim == 2:
        return _ssim_slice(ref, pred, window)
    if ref.ndim != 3:
        raise ValueError(f"expected a 2D slice or 3D grid, got shape {ref.shape}")
    slice_scores = [
        _ssim_slice(ref[:, :, z], pred[:, :, z], window) for z in range(ref.shape[2])
    ]
    return float(np.mean(slice_scores))


def score(psnr_db: float, nrmse_value: float, ssim_value: float) -> float:
    """Combined quality in [0, 1]: the mean of PSNR normalized by its
    48 dB ceiling, the inverted NRMSE, and SSIM.

    PSNR is clamped to [0, 48] dB before normalizing, so the infinite
    sentinel of a perfect reconstruction contributes exactly 1.
    """
    if not (0.0 <= nrmse_value <= 1.0):
        raise ValueError(f"nrmse must be in [0, 1], got {nrmse_value!r}")
    if not (0.0 <= ssim_value <= 1.0):
        raise ValueError(f"ssim must be in [0, 1], got {ssim_value!r}")
    if math.isnan(psnr_db):
        raise ValueError("psnr must not be NaN")
    clamped = min(max(psnr_db, 0.0), PSNR_MAX_DB)
    return (clamped / PSNR_MAX_DB + (1.0 - nrmse_value) + ssim_value) / 3.0


def compression_ratio(value_count: int, weight_count: int) -> float:
    """Stored scalar count divided by network parameter count."""
    if weight_count <= 0:
        raise ValueError(f"weight_count must be > 0, got {weight_count}")
    return value_count / weight_count


@dataclass(frozen=True)
class QualityReport:
    """Per-variant quality bundle: one comparison-table row."""

    psnr_db: float
    nrmse: float
    ssim: float
    score: float
    compression: float
    variant_label: str = ""
    train_seconds: float = math.nan


def evaluate(
    reference: MultiGridVolume,
    predicted: MultiGridVolume,
    net: FfNetwork | None = None,
    seconds: float = math.nan,
    label: str = "",
    include_encoder: bool = False,
) -> QualityReport:
    """Score a reconstruction against its normalized reference volume.

    Metrics are computed per grid and averaged arithmetically; the
    combined score is recomputed from the averaged metrics. An
    anti-correlated reconstruction can push mean SSIM below zero, which
    the combined score treats as worthless structure, so the reported
    SSIM is floored at 0 and the score stays recomputable from the
    report's own fields. Compression divides the reference's stored
    value count by the network parameter count (MLP only unless
    ``include_encoder``).
    """
    if reference.dims != predicted.dims:
        raise ValueError(f"dims mismatch: {reference.dims} vs {predicted.dims}")
    if reference.grid_count != predicted.grid_count:
        raise ValueError(
            f"grid count mismatch: {reference.grid_count} vs {predicted.grid_count}"
        )
    psnr_vals, nrmse_vals, ssim_vals = [], [], []
    for name_r, name_p in zip(reference.names, predicted.names):
        ref3 = reference.grid_3d(name_r)
        pred3 = predicted.grid_3d(name_p)
        psnr_vals.append(psnr(ref3, pred3))
        nrmse_vals.append(nrmse(ref3, pred3))
        ssim_vals.append(ssim(ref3, pred3))
    mean_psnr = float(np.mean(psnr_vals))
    mean_nrmse = float(np.mean(nrmse_vals))
    mean_ssim = max(float(np.mean(ssim_vals)), 0.0)
    compression = math.nan
    if net is not None:
        compression = compression_ratio(
            reference.value_count, param_count(net, include_encoder=include_encoder)
        )
    return QualityReport(
        psnr_db=mean_psnr,
        nrmse=mean_nrmse,
        ssim=mean_ssim,
        score=score(mean_psnr, mean_nrmse, mean_ssim),
        compression=compression,
        variant_label=label,
        train_seconds=seconds,
    )
