"""Seeded synthetic plume volumes for experiments and tests.

Generates a gas-burner-like two-grid volume (density, temperature): a
column of Gaussian blobs swept along a wandering vertical centerline,
thresholded so the background is exactly zero. An optional carved
quadrant (x < nx/2 and y < ny/2 forced to zero) creates the sharp
active/background cliff used to probe hallucination under selective
training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import MultiGridVolume, _validated_dims

MIN_AXIS = 8

DENSITY_GRID = "density"
TEMPERATURE_GRID = "temperature"


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic plume generator.

    ``active_fraction`` is the pre-carve share of voxels with positive
    values; the threshold separating plume from background is chosen as
    the matching quantile of the smooth field, so the target is hit
    almost exactly. The generated volume (after carving, if enabled)
    must land inside ``active_fraction_bounds`` or generation fails.
    ``texture_amplitude`` controls the turbulent mid-frequency
    modulation of the plume interior; 0 gives a smooth blob column.
    """

    dims: tuple[int, int, int] = (64, 64, 64)
    carve_quadrant: bool = False
    active_fraction: float = 0.28
    active_fraction_bounds: tuple[float, float] = (0.05, 0.5)
    blobs_per_z: float = 2.0
    texture_amplitude: float = 0.45

    def __post_init__(self):
        object.__setattr__(self, "dims", _validated_dims(self.dims))
        lo, hi = self.active_fraction_bounds
        if not (0.0 < lo < hi <= 1.0):
            raise ValueError(f"invalid active fraction bounds {self.active_fraction_bounds!r}")
        if not (lo <= self.active_fraction <= hi):
            raise ValueError("active_fraction must lie inside active_fraction_bounds")
        if self.texture_amplitude < 0:
            raise ValueError("texture_amplitude must be >= 0")


def _centerline(rng: np.random.Generator):
    """Random smooth (cx, cy, radius, amplitude) profiles over height t in [0, 1]."""
    fx, fy = rng.uniform(0.6, 1.4, size=2)
    px, py = rng.uniform(0.0, 2.0 * np.pi, size=2)
    ax, ay = rng.uniform(0.04, 0.11, size=2)

    def cx(t):
        return 0.5 + ax * np.sin(2.0 * np.pi * fx * t + px) * (0.3 + 0.7 * t)

    def cy(t):
        return 0.5 + ay * np.sin(2.0 * np.pi * fy * t + py) * (0.3 + 0.7 * t)

    r0 = rng.uniform(0.10, 0.14)

    def radius(t):
        # Narrow at the nozzle, widening upward, tapering at the tip.
        return r0 * (0.35 + 1.1 * t) * (1.0 - 0.45 * t**3)

    def amplitude(t):
        return 1.0 - 0.55 * t

    return cx, cy, radius, amplitude


def _turbulence(rng: np.random.Generator, dims, waves: int = 40) -> np.ndarray:
    """Zero-mean unit-variance-ish field from random-phase plane waves.

    Wavelengths span 5 to 18 voxels so the field adds structure between
    the blob scale and the voxel scale.
    """
    nx, ny, nz = dims
    directions = rng.normal(size=(waves, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    wavelengths = np.exp(rng.uniform(np.log(5.0), np.log(18.0), size=waves))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=waves)

    xs = np.arange(nx, dtype=np.float64)[:, None, None]
    ys = np.arange(ny, dtype=np.float64)[None, :, None]
    zs = np.arange(nz, dtype=np.float64)[None, None, :]
    field = np.zeros((nx, ny, nz), dtype=np.float64)
    for d, lam, phi in zip(directions, wavelengths, phases):
        arg = (2.0 * np.pi / lam) * (d[0] * xs + d[1] * ys + d[2] * zs) + phi
        field += np.cos(arg)
    return field / np.sqrt(waves / 2.0)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> MultiGridVolume:
    """Generate a deterministic two-grid plume volume for (spec, seed).

    Density peaks at 1.0 inside the plume and is exactly 0 in the
    background; temperature shares the density support with a different
    falloff so the two grids are distinct regression targets.
    """
    nx, ny, nz = spec.dims
    if min(spec.dims) < MIN_AXIS:
        raise ValueError(f"dims must be at least {MIN_AXIS} per axis, got {spec.dims}")

    rng = np.random.default_rng(seed)
    cx, cy, radius, amplitude = _centerline(rng)

    scale = float(min(nx, ny))
    field = np.zeros((nx, ny, nz), dtype=np.float64)
    xs = np.arange(nx, dtype=np.float64)
    ys = np.arange(ny, dtype=np.float64)
    zs = np.arange(nz, dtype=np.float64)

    blob_count = max(int(spec.blobs_per_z * nz), 16)
    t_blob = np.sort(rng.uniform(0.0, 1.0, size=blob_count))
    jitter = rng.normal(0.0, 1.0, size=(blob_count, 3))
    size_u = rng.uniform(0.75, 1.25, size=blob_count)
    amp_u = rng.uniform(0.7, 1.3, size=blob_count)

    for b in range(blob_count):
        t = float(t_blob[b])
        sigma = radius(t) * scale * float(size_u[b])
        bx = cx(t) * (nx - 1) + jitter[b, 0] * 0.25 * sigma
        by = cy(t) * (ny - 1) + jitter[b, 1] * 0.25 * sigma
        bz = t * (nz - 1) + jitter[b, 2] * 0.5 * sigma
        amp = amplitude(t) * float(amp_u[b])

        # Add the blob only inside its 3.5-sigma support window.
        reach = 3.5 * sigma
        x0, x1 = max(int(bx - reach), 0), min(int(bx + reach) + 2, nx)
        y0, y1 = max(int(by - reach), 0), min(int(by + reach) + 2, ny)
        z0, z1 = max(int(bz - reach), 0), min(int(bz + reach) + 2, nz)
        if x0 >= x1 or y0 >= y1 or z0 >= z1:
            continue
        dx2 = (xs[x0:x1] - bx) ** 2
        dy2 = (ys[y0:y1] - by) ** 2
        dz2 = (zs[z0:z1] - bz) ** 2
        d2 = dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]
        field[x0:x1, y0:y1, z0:z1] += amp * np.exp(-d2 / (2.0 * sigma * sigma))

    if spec.texture_amplitude > 0:
        modulation = np.maximum(1.0 + spec.texture_amplitude * _turbulence(rng, spec.dims), 0.0)
        field *= modulation

    # Quantile threshold pins the pre-carve active fraction; subtracting it
    # keeps the plume boundary continuous while the background is exactly 0.
    cut = np.quantile(field, 1.0 - spec.active_fraction)
    density = np.maximum(field - cut, 0.0)
    peak = density.max()
    if peak <= 0.0:
        raise ValueError("degenerate synthetic field: no voxel above threshold")
    density /= peak

    t_z = (zs / max(nz - 1, 1))[None, None, :]
    temperature = np.sqrt(density) * (1.0 - 0.45 * t_z)

    if spec.carve_quadrant:
        carved = (xs[:, None, None] < nx / 2) & (ys[None, :, None] < ny / 2)
        density[np.broadcast_to(carved, density.shape)] = 0.0
        temperature[np.broadcast_to(carved, temperature.shape)] = 0.0

    active = int(np.count_nonzero((density > 0) | (temperature > 0)))
    fraction = active / (nx * ny * nz)
    lo, hi = spec.active_fraction_bounds
    if not (lo <= fraction <= hi):
        raise ValueError(
            f"active fraction {fraction:.3f} outside declared bounds [{lo}, {hi}]"
        )

    def flat(arr3):
        # (nx, ny, nz) -> x-fastest flat layout.
        return arr3.transpose(2, 1, 0).reshape(-1)

    return MultiGridVolume.from_grids(
        spec.dims,
        [(DENSITY_GRID, flat(density)), (TEMPERATURE_GRID, flat(temperature))],
    )
