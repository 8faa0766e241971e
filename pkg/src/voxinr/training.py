"""Mini-batch training loop with seeded shuffling and adaptive moments.

Each epoch visits every dataset row exactly once, in an order drawn from
a permutation seeded by a fixed 64-bit mix of (config seed, epoch), so
runs are reproducible across platforms. Updates use adaptive moment
estimation with constant learning rate. Timing wraps the epoch loop
only, excluding dataset extraction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .masks import CoordinateDataset
from .network import FfNetwork, backward, forward, init_network
from .volume import MultiGridVolume, voxel_coordinates

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    Defaults are the reference full-scale setup: 100 epochs, 1280
    Fourier features at gauss multiplier 2.5, an 8x512 ReLU MLP, batch
    size 24, learning rate 3e-4.
    """

    epochs: int = 100
    fourier_features: int = 1280
    gauss_multiplier: float = 2.5
    hidden_layers: int = 8
    hidden_width: int = 512
    batch_size: int = 24
    learning_rate: float = 3e-4
    seed: int = 0
    band_count: int = 1
    dtype: str = "float32"
    grid_count: int = 2

    def validate(self) -> None:
        counts = {
            "epochs": self.epochs,
            "fourier_features": self.fourier_features,
            "hidden_layers": self.hidden_layers,
            "hidden_width": self.hidden_width,
            "batch_size": self.batch_size,
            "band_count": self.band_count,
            "grid_count": self.grid_count,
        }
        for name, value in counts.items():
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not (self.learning_rate > 0):
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if not (self.gauss_multiplier > 0):
            raise ValueError(f"gauss_multiplier must be > 0, got {self.gauss_multiplier!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")


@dataclass
class TrainReport:
    """Outcome of one training run."""

    epoch_losses: list[float]
    epoch_seconds: list[float]
    wall_seconds: float
    network: FfNetwork
    row_count: int
    variant_label: str = ""

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer: a fixed, platform-independent 64-bit mix."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    """Row visiting order for one epoch: a permutation of range(n).

    The permutation seed is splitmix64 applied to the run seed xored
    with a stride of the epoch index, so every (seed, epoch) pair gets
    an independent, reproducible stream.
    """
    mixed = splitmix64((seed & _MASK64) ^ ((epoch * 0xA24BAED4963EE407) & _MASK64))
    return np.random.default_rng(mixed).permutation(n)


class _AdamState:
    """First/second moment buffers for one parameter array."""

    def __init__(self, param: np.ndarray):
        self.m = np.zeros_like(param)
        self.v = np.zeros_like(param)

    def update(self, param: np.ndarray, grad: np.ndarray, lr: float, step: int) -> None:
        self.m += (1.0 - ADAM_BETA1) * (grad - self.m)
        self.v += (1.0 - ADAM_BETA2) * (grad * grad - self.v)
        m_hat = self.m / (1.0 - ADAM_BETA1**step)
        v_hat = self.v / (1.0 - ADAM_BETA2**step)
        param -= (lr * m_hat / (np.sqrt(v_hat) + ADAM_EPSILON)).astype(param.dtype)


def train(
    dataset: CoordinateDataset,
    config: TrainConfig,
    variant_label: str = "",
    progress=None,
) -> TrainReport:
    """Fit a freshly initialized network to the dataset.

    The last, possibly smaller batch of each epoch is trained on, so the
    per-epoch visit count equals the dataset size. After every epoch all
    parameters are checked to be finite. ``progress``, when given, is
    called as ``progress(epoch_index, mean_loss, elapsed_seconds)``.
    """
    config.validate()
    if len(dataset) == 0:
        raise ValueError("empty training set: the mask selected no voxels")
    if dataset.grid_count != config.grid_count:
        raise ValueError(
            f"dataset has {dataset.grid_count} target grids, config expects {config.grid_count}"
        )

    net = init_network(config, config.seed)
    coords = dataset.coords.astype(net.dtype, copy=False)
    targets = dataset.targets.astype(net.dtype, copy=False)
    n_rows = len(dataset)
    bs = config.batch_size

    trainable = net.mlp.weights + net.mlp.biases + [net.encoder.log_band_scales]
    states = [_AdamState(p) for p in trainable]

    epoch_losses: list[float] = []
    epoch_seconds: list[float] = []
    step = 0
    start = time.perf_counter()
    for epoch in range(config.epochs):
        epoch_start = time.perf_counter()
        order = epoch_permutation(config.seed, epoch, n_rows)
        sq_err_sum = 0.0
        for lo in range(0, n_rows, bs):
            rows = order[lo : lo + bs]
            loss, grads = backward(net, coords[rows], targets[rows])
            step += 1
            grad_arrays = grads.weights + grads.biases + [grads.log_band_scales]
            for state, param, grad in zip(states, trainable, grad_arrays):
                state.update(param, grad, config.learning_rate, step)
            sq_err_sum += loss * rows.size
        for param in trainable:
            if not np.isfinite(param).all():
                raise FloatingPointError(f"non-finite parameter after epoch {epoch}")
        now = time.perf_counter()
        epoch_losses.append(sq_err_sum / n_rows)
        epoch_seconds.append(now - epoch_start)
        if progress is not None:
            progress(epoch, epoch_losses[-1], now - start)

    return TrainReport(
        epoch_losses=epoch_losses,
        epoch_seconds=epoch_seconds,
        wall_seconds=time.perf_counter() - start,
        network=net,
        row_count=n_rows,
        variant_label=variant_label,
    )


def reconstruct_full(
    net: FfNetwork,
    dims: tuple[int, int, int],
    grid_count: int | None = None,
    grid_names: tuple[str, ...] | None = None,
    chunk_rows: int = 1 << 16,
) -> MultiGridVolume:
    """Evaluate the network at every voxel of the bounding box.

    Coordinates follow the training convention (index / (dim - 1) per
    axis) and outputs are clamped to [0, 1], giving a normalized volume
    regardless of which mask the network was trained on.
    """
    if grid_count is None:
        grid_count = net.grid_count
    if grid_count != net.grid_count:
        raise ValueError(f"network predicts {net.grid_count} grids, requested {grid_count}")
    if grid_names is None:
        grid_names = tuple(f"grid_{g}" for g in range(grid_count))
    if len(grid_names) != grid_count:
        raise ValueError("one grid name per output grid required")

    nvox = dims[0] * dims[1] * dims[2]
    data = np.empty((grid_count, nvox), dtype=np.float32)
    for lo in range(0, nvox, chunk_rows):
        hi = min(lo + chunk_rows, nvox)
        coords = voxel_coordinates(dims, np.arange(lo, hi, dtype=np.int64))
        pred = forward(net, coords)
        data[:, lo:hi] = np.clip(pred, 0.0, 1.0).astype(np.float32).T
    return MultiGridVolume(dims, grid_names, data)
