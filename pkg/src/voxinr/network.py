"""Fourier-feature coordinate network: encoder, MLP, analytic gradients.

The network maps a unit-cube coordinate p to one value per grid. A
frozen Gaussian frequency matrix B lifts p to 2k sinusoidal features::

    features(p) = [cos(2*pi*s_i*(B_i . p)), sin(2*pi*s_i*(B_i . p))]

where s_i is the learnable scale of the frequency band row i belongs
to (kept positive through an exp parameterization). The features feed a
ReLU MLP with a linear output layer. Forward and backward passes are
plain numpy so seeded runs are bit-reproducible and gradients can be
checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .training import TrainConfig
    from .volume import NormalizationParams

COORDINATE_CONVENTION = "unit-cube-index-over-dim-minus-1"

_DTYPES = {"float32": np.float32, "float64": np.float64}


def band_partition(feature_count: int, band_count: int) -> np.ndarray:
    """Assign encoder rows to frequency bands in contiguous, even blocks."""
    return (np.arange(feature_count, dtype=np.int64) * band_count) // feature_count


@dataclass
class FourierEncoder:
    """Sinusoidal coordinate encoder with per-band learnable scales.

    ``b_matrix`` is (k, 3), sampled once from N(0, 1) and frozen.
    ``log_band_scales`` holds log(s_g); training updates it in place.
    """

    b_matrix: np.ndarray
    log_band_scales: np.ndarray
    band_of_row: np.ndarray
    gm_init: float

    @property
    def feature_count(self) -> int:
        return self.b_matrix.shape[0]

    @property
    def band_count(self) -> int:
        return self.log_band_scales.shape[0]

    @property
    def dtype(self) -> np.dtype:
        return self.b_matrix.dtype

    def row_scales(self) -> np.ndarray:
        """Positive scale of every encoder row."""
        return np.exp(self.log_band_scales)[self.band_of_row]


@dataclass
class MlpParams:
    """Weight matrices and bias vectors, input to output.

    ``weights[i]`` has shape (fan_in, fan_out); the last layer is the
    linear output head.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


@dataclass
class FfNetwork:
    """Encoder plus MLP, with the metadata needed to reuse a checkpoint."""

    encoder: FourierEncoder
    mlp: MlpParams
    coordinate_convention: str = COORDINATE_CONVENTION
    normalization: "NormalizationParams | None" = None

    @property
    def grid_count(self) -> int:
        return self.mlp.weights[-1].shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.mlp.dtype


@dataclass
class Gradients:
    """Loss gradients for every trainable parameter (B stays frozen)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    log_band_scales: np.ndarray


def init_network(config: "TrainConfig", seed: int) -> FfNetwork:
    """Deterministically initialize a network for (config, seed).

    B entries are standard normal. Band g starts at scale gm * 2**g, so
    a single band reduces exactly to the configured gauss multiplier.
    MLP weights are He-uniform for the ReLU hidden stack, biases zero.
    """
    config.validate()
    dtype = _DTYPES[config.dtype]
    rng = np.random.default_rng(seed)

    k = config.fourier_features
    bands = config.band_count
    b_matrix = rng.standard_normal((k, 3)).astype(dtype)
    b_matrix.setflags(write=False)
    scales = config.gauss_multiplier * 2.0 ** np.arange(bands, dtype=np.float64)
    encoder = FourierEncoder(
        b_matrix=b_matrix,
        log_band_scales=np.log(scales).astype(dtype),
        band_of_row=band_partition(k, bands),
        gm_init=config.gauss_multiplier,
    )

    layer_dims = [2 * k] + [config.hidden_width] * config.hidden_layers + [config.grid_count]
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))

    return FfNetwork(encoder=encoder, mlp=MlpParams(weights, biases))


def encode(encoder: FourierEncoder, coords) -> np.ndarray:
    """Sinusoidal features of one coordinate or a batch of coordinates.

    Returns 2k values per input row: k cosines followed by k sines of
    ``2*pi*s_i*(B_i . p)``. Every output lies in [-1, 1].
    """
    arr = np.asarray(coords, dtype=encoder.dtype)
    single = arr.ndim == 1
    batch = np.atleast_2d(arr)
    phase = _phases(encoder, batch)[1]
    feats = np.concatenate([np.cos(phase), np.sin(phase)], axis=1)
    return feats[0] if single else feats


def _phases(encoder: FourierEncoder, batch: np.ndarray):
    """Projections u = p @ B^T and phases 2*pi*s*u for a (N, 3) batch."""
    u = batch @ encoder.b_matrix.T
    two_pi = encoder.dtype.type(2.0 * np.pi)
    phase = (two_pi * encoder.row_scales()) * u
    return u, phase


def _forward_mlp(mlp: MlpParams, features: np.ndarray) -> np.ndarray:
    h = features
    for w, b in zip(mlp.weights[:-1], mlp.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    return h @ mlp.weights[-1] + mlp.biases[-1]


def forward(net: FfNetwork, batch) -> np.ndarray:
    """Predictions for a (N, 3) coordinate batch; shape (N, grid_count).

    Pure function of (net, batch): repeated sequential calls are
    bit-identical. The output head is linear; clamping to [0, 1] happens
    only at reconstruction/export time.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=net.dtype))
    if batch.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    return _forward_mlp(net.mlp, encode(net.encoder, batch))


def backward(net: FfNetwork, batch, targets) -> tuple[float, Gradients]:
    """Mean-squared-error loss and analytic gradients over a batch.

    The loss averages squared residuals over rows and grids. Gradients
    cover every MLP weight and bias plus the log band scales; gradient
    flow into the scales goes through the cos/sin phase arguments while
    B stays frozen.
    """
    dtype = net.dtype
    batch = np.atleast_2d(np.asarray(batch, dtype=dtype))
    targets = np.atleast_2d(np.asarray(targets, dtype=dtype))
    if batch.shape[0] != targets.shape[0] or targets.shape[1] != net.grid_count:
        raise ValueError(
            f"batch {batch.shape} and targets {targets.shape} do not agree "
            f"with {net.grid_count} output grids"
        )
    if batch.shape[0] == 0:
        raise ValueError("batch must be non-empty")

    enc = net.encoder
    mlp = net.mlp
    k = enc.feature_count

    _, phase = _phases(enc, batch)
    cos_part = np.cos(phase)
    sin_part = np.sin(phase)
    features = np.concatenate([cos_part, sin_part], axis=1)

    # Forward with caches for the hidden stack.
    pre_acts = []
    hidden = [features]
    h = features
    for w, b in zip(mlp.weights[:-1], mlp.biases[:-1]):
        z = h @ w + b
        pre_acts.append(z)
        h = np.maximum(z, 0.0)
        hidden.append(h)
    pred = h @ mlp.weights[-1] + mlp.biases[-1]

    residual = pred - targets
    loss = float(np.mean(residual.astype(np.float64) ** 2))

    # d(mean sq err)/d(pred), then backprop through the affine stack.
    d_pred = residual * dtype.type(2.0 / residual.size)
    d_weights = [np.empty(0)] * len(mlp.weights)
    d_biases = [np.empty(0)] * len(mlp.biases)

    d_weights[-1] = hidden[-1].T @ d_pred
    d_biases[-1] = d_pred.sum(axis=0)
    d_h = d_pred @ mlp.weights[-1].T
    for i in range(len(mlp.weights) - 2, -1, -1):
        d_z = d_h * (pre_acts[i] > 0)
        d_weights[i] = hidden[i].T @ d_z
        d_biases[i] = d_z.sum(axis=0)
        d_h = d_z @ mlp.weights[i].T

    # Through the encoder onto the band scales: with
    # phase = 2*pi*exp(theta_band)*u and B frozen, d(phase)/d(theta) is
    # the phase itself, so d(loss)/d(theta_g) sums d_phase*phase over the
    # batch and the rows of band g.
    d_features = d_h
    d_phase = d_features[:, k:] * cos_part - d_features[:, :k] * sin_part
    per_row = (d_phase * phase).sum(axis=0, dtype=np.float64)
    d_log_scales = np.bincount(enc.band_of_row, weights=per_row, minlength=enc.band_count)
    return loss, Gradients(d_weights, d_biases, d_log_scales.astype(dtype))


def param_count(net: FfNetwork, include_encoder: bool = False) -> int:
    """Exact trainable-parameter count of the MLP, optionally adding the
    encoder's frozen B entries (3k) and its band scales."""
    count = net.mlp.parameter_count()
    if include_encoder:
        count += net.encoder.b_matrix.size + net.encoder.log_band_scales.size
    return count
