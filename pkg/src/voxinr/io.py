"""File formats: volumes (VOLZ), masks (VMSK), checkpoints (FFCK),
grayscale slices (PGM), and CSV report/loss exports.

All binary formats are little-endian with 4-byte ASCII magics. The
checkpoint format stores 32-bit parameters and ends in a CRC-32 so a
save/load roundtrip is verifiably bit-exact.
"""

from __future__ import annotations

import csv
import math
import struct
import zlib
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .masks import VoxelMask
from .metrics import QualityReport
from .network import (
    COORDINATE_CONVENTION,
    FfNetwork,
    FourierEncoder,
    MlpParams,
    band_partition,
)
from .training import TrainConfig, TrainReport
from .volume import MultiGridVolume, NormalizationParams

VOLZ_MAGIC = b"VOLZ"
VOLZ_VERSION = 1
VMSK_MAGIC = b"VMSK"
FFCK_MAGIC = b"FFCK"
FFCK_VERSION = 1


class FormatError(ValueError):
    """Raised for malformed or truncated files."""


class _Reader:
    """Cursor over an in-memory byte buffer with struct decoding."""

    def __init__(self, buf: bytes, label: str):
        self.buf = buf
        self.pos = 0
        self.label = label

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.buf):
            raise FormatError(f"truncated {self.label} file")
        out = self.buf[self.pos : self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        raw = self.take(count * np.dtype(dtype).itemsize)
        return np.frombuffer(raw, dtype=dtype, count=count).copy()

    def exhausted(self) -> bool:
        return self.pos >= len(self.buf)


def _pack_name(name: str) -> bytes:
    encoded = name.encode("utf-8")
    if len(encoded) > 0xFFFF:
        raise ValueError(f"grid name too long: {name!r}")
    return struct.pack("<H", len(encoded)) + encoded


def _read_name(reader: _Reader) -> str:
    (length,) = reader.unpack("H")
    return reader.take(length).decode("utf-8")


# ---------------------------------------------------------------------------
# VOLZ volume container
# ---------------------------------------------------------------------------

def write_volz(path, volume: MultiGridVolume, params: NormalizationParams | None = None) -> None:
    """Write a volume, optionally trailed by its normalization block."""
    if params is not None and params.grid_count != volume.grid_count:
        raise ValueError("normalization block must cover every grid")
    nx, ny, nz = volume.dims
    with open(path, "wb") as fh:
        fh.write(VOLZ_MAGIC)
        fh.write(struct.pack("<IIIII", VOLZ_VERSION, nx, ny, nz, volume.grid_count))
        for g, name in enumerate(volume.names):
            fh.write(_pack_name(name))
            fh.write(volume.data[g].astype("<f4", copy=False).tobytes())
        if params is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<B", 1))
            for g in range(params.grid_count):
                fh.write(struct.pack("<ff", float(params.mins[g]), float(params.maxs[g])))


def read_volz(path) -> tuple[MultiGridVolume, NormalizationParams | None]:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), "VOLZ")
    if reader.take(4) != VOLZ_MAGIC:
        raise FormatError(f"{path}: not a VOLZ file")
    version, nx, ny, nz, grid_count = reader.unpack("IIIII")
    if version != VOLZ_VERSION:
        raise FormatError(f"{path}: unsupported VOLZ version {version}")
    if min(nx, ny, nz) < 1 or grid_count < 1:
        raise FormatError(f"{path}: invalid VOLZ header")
    nvox = nx * ny * nz
    grids = []
    for _ in range(grid_count):
        name = _read_name(reader)
        grids.append((name, reader.array("<f4", nvox)))
    volume = MultiGridVolume.from_grids((nx, ny, nz), grids)
    params = None
    if not reader.exhausted():
        (flag,) = reader.unpack("B")
        if flag == 1:
            pairs = reader.array("<f4", 2 * grid_count).reshape(grid_count, 2)
            params = NormalizationParams(pairs[:, 0], pairs[:, 1])
        elif flag != 0:
            raise FormatError(f"{path}: bad normalization flag {flag}")
    return volume, params


# ---------------------------------------------------------------------------
# VMSK mask export (debug)
# ---------------------------------------------------------------------------

def write_vmsk(path, mask: VoxelMask) -> None:
    """Raw bitset with a 16-byte header; x-fastest order, LSB-first packing."""
    nx, ny, nz = mask.dims
    with open(path, "wb") as fh:
        fh.write(VMSK_MAGIC)
        fh.write(struct.pack("<III", nx, ny, nz))
        fh.write(np.packbits(mask.bits, bitorder="little").tobytes())


def read_vmsk(path) -> VoxelMask:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), "VMSK")
    if reader.take(4) != VMSK_MAGIC:
        raise FormatError(f"{path}: not a VMSK file")
    nx, ny, nz = reader.unpack("III")
    nvox = nx * ny * nz
    packed = reader.array("u1", (nvox + 7) // 8)
    bits = np.unpackbits(packed, count=nvox, bitorder="little").astype(bool)
    return VoxelMask((nx, ny, nz), bits)


# ---------------------------------------------------------------------------
# FFCK checkpoint
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossDigest:
    """Compact fingerprint of a loss history."""

    epoch_count: int
    final_loss: float
    crc32: int

    @classmethod
    def of(cls, losses: Sequence[float]) -> "LossDigest":
        arr = np.asarray(losses, dtype="<f8")
        final = float(arr[-1]) if arr.size else math.nan
        return cls(int(arr.size), final, zlib.crc32(arr.tobytes()) & 0xFFFFFFFF)


@dataclass(frozen=True)
class Checkpoint:
    """Everything needed to rebuild a trained network bit-exactly."""

    config: TrainConfig
    network: FfNetwork
    dims: tuple[int, int, int]
    grid_names: tuple[str, ...]
    normalization: NormalizationParams | None
    loss_digest: LossDigest


def _config_bytes(config: TrainConfig) -> bytes:
    if config.dtype != "float32":
        raise TypeError("checkpoints store 32-bit parameters; config dtype must be float32")
    return struct.pack(
        "<IIIIIIIqdd",
        config.epochs,
        config.fourier_features,
        config.hidden_layers,
        config.hidden_width,
        config.batch_size,
        config.band_count,
        config.grid_count,
        config.seed,
        config.gauss_multiplier,
        config.learning_rate,
    )


def _read_config(reader: _Reader) -> TrainConfig:
    (epochs, k, layers, width, bs, bands, grids, seed, gm, lr) = reader.unpack("IIIIIIIqdd")
    return TrainConfig(
        epochs=epochs,
        fourier_features=k,
        gauss_multiplier=gm,
        hidden_layers=layers,
        hidden_width=width,
        batch_size=bs,
        learning_rate=lr,
        seed=seed,
        band_count=bands,
        dtype="float32",
        grid_count=grids,
    )


def save_checkpoint(
    path,
    net: FfNetwork,
    config: TrainConfig,
    dims: tuple[int, int, int],
    grid_names: tuple[str, ...],
    normalization: NormalizationParams | None = None,
    loss_history: Sequence[float] = (),
) -> None:
    """Serialize a trained float32 network with its run metadata.

    The trailing CRC-32 covers every preceding byte including the magic.
    """
    if net.dtype != np.float32:
        raise TypeError("checkpoints store 32-bit parameters; train in float32 to save")
    if len(grid_names) != net.grid_count:
        raise ValueError("one grid name per network output required")

    parts = [FFCK_MAGIC, struct.pack("<I", FFCK_VERSION)]
    parts.append(struct.pack("<III", *dims))
    parts.append(struct.pack("<I", len(grid_names)))
    parts.extend(_pack_name(n) for n in grid_names)
    parts.append(_config_bytes(config))
    parts.append(_pack_name(net.coordinate_convention))

    norm = net.normalization if net.normalization is not None else normalization
    if norm is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<BI", 1, norm.grid_count))
        for g in range(norm.grid_count):
            parts.append(struct.pack("<ff", float(norm.mins[g]), float(norm.maxs[g])))

    enc = net.encoder
    parts.append(struct.pack("<IId", enc.feature_count, enc.band_count, enc.gm_init))
    parts.append(enc.b_matrix.astype("<f4", copy=False).tobytes())
    parts.append(enc.log_band_scales.astype("<f4", copy=False).tobytes())

    mlp = net.mlp
    parts.append(struct.pack("<I", len(mlp.weights)))
    for w, b in zip(mlp.weights, mlp.biases):
        parts.append(struct.pack("<II", w.shape[0], w.shape[1]))
        parts.append(w.astype("<f4", copy=False).tobytes())
        parts.append(b.astype("<f4", copy=False).tobytes())

    digest = LossDigest.of(loss_history)
    parts.append(struct.pack("<IdI", digest.epoch_count, digest.final_loss, digest.crc32))

    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 8 or buf[:4] != FFCK_MAGIC:
        raise FormatError(f"{path}: not an FFCK checkpoint")
    (stored_crc,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(buf[:-4]) & 0xFFFFFFFF != stored_crc:
        raise FormatError(f"{path}: checkpoint CRC mismatch")

    reader = _Reader(buf[:-4], "FFCK")
    reader.take(4)
    (version,) = reader.unpack("I")
    if version != FFCK_VERSION:
        raise FormatError(f"{path}: unsupported FFCK version {version}")
    dims = reader.unpack("III")
    (name_count,) = reader.unpack("I")
    grid_names = tuple(_read_name(reader) for _ in range(name_count))
    config = _read_config(reader)
    convention = _read_name(reader)

    (norm_flag,) = reader.unpack("B")
    normalization = None
    if norm_flag == 1:
        (norm_count,) = reader.unpack("I")
        pairs = reader.array("<f4", 2 * norm_count).reshape(norm_count, 2)
        normalization = NormalizationParams(pairs[:, 0], pairs[:, 1])
    elif norm_flag != 0:
        raise FormatError(f"{path}: bad normalization flag {norm_flag}")

    k, bands, gm_init = reader.unpack("IId")
    b_matrix = reader.array("<f4", 3 * k).reshape(k, 3)
    b_matrix.setflags(write=False)
    log_scales = reader.array("<f4", bands)
    encoder = FourierEncoder(
        b_matrix=b_matrix,
        log_band_scales=log_scales,
        band_of_row=band_partition(k, bands),
        gm_init=gm_init,
    )

    (layer_count,) = reader.unpack("I")
    weights, biases = [], []
    for _ in range(layer_count):
        fan_in, fan_out = reader.unpack("II")
        weights.append(reader.array("<f4", fan_in * fan_out).reshape(fan_in, fan_out))
        biases.append(reader.array("<f4", fan_out))

    epoch_count, final_loss, loss_crc = reader.unpack("IdI")
    if not reader.exhausted():
        raise FormatError(f"{path}: trailing bytes in checkpoint")

    net = FfNetwork(
        encoder=encoder,
        mlp=MlpParams(weights, biases),
        coordinate_convention=convention,
        normalization=normalization,
    )
    return Checkpoint(
        config=config,
        network=net,
        dims=dims,
        grid_names=grid_names,
        normalization=normalization,
        loss_digest=LossDigest(epoch_count, final_loss, loss_crc),
    )


# ---------------------------------------------------------------------------
# PGM slice export
# ---------------------------------------------------------------------------

def write_pgm(path, slice_xy: np.ndarray) -> None:
    """Write an (nx, ny) slice of unit-range values as an 8-bit P5 graymap.

    Pixels are value * 255 rounded half-up after clipping to [0, 1];
    image columns follow x, rows follow y.
    """
    arr = np.asarray(slice_xy, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D slice, got shape {arr.shape}")
    gray = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    nx, ny = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(gray.T.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 graymap back into an (nx, ny) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary P5 graymap")
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise FormatError(f"{path}: unsupported max value {maxval}")
    pos += 1
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return pixels.reshape(height, width).T.copy()


# ---------------------------------------------------------------------------
# CSV and text reports
# ---------------------------------------------------------------------------

LOSS_CSV_HEADER = ("epoch", "mean_loss", "seconds_elapsed")
REPORT_CSV_HEADER = ("variant", "psnr_db", "nrmse", "ssim", "score", "time_s", "compression")


def write_loss_csv(path, report: TrainReport) -> None:
    """Per-epoch mean loss and cumulative elapsed seconds."""
    elapsed = np.cumsum(report.epoch_seconds)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_CSV_HEADER)
        for epoch, (loss, secs) in enumerate(zip(report.epoch_losses, elapsed)):
            writer.writerow([epoch, f"{loss:.10g}", f"{secs:.6f}"])


def write_report_csv(path, reports: Sequence[QualityReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_HEADER)
        for r in reports:
            writer.writerow(
                [
                    r.variant_label,
                    f"{r.psnr_db:.4f}",
                    f"{r.nrmse:.6f}",
                    f"{r.ssim:.6f}",
                    f"{r.score:.4f}",
                    f"{r.train_seconds:.3f}",
                    f"{r.compression:.3f}",
                ]
            )


def format_report_table(reports: Sequence[QualityReport]) -> str:
    """Aligned comparison table: variant, PSNR, NRMSE, SSIM, Score, Time."""
    header = ("variant", "PSNR (dB)", "NRMSE", "SSIM", "Score", "Time (s)", "compression")
    rows = [header]
    for r in reports:
        rows.append(
            (
                r.variant_label,
                f"{r.psnr_db:.2f}",
                f"{r.nrmse:.3f}",
                f"{r.ssim:.3f}",
                f"{r.score:.2f}",
                f"{r.train_seconds:.1f}",
                f"{r.compression:.1f}",
            )
        )
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    lines = []
    for row in rows:
        lines.append(
            row[0].ljust(widths[0])
            + "  "
            + "  ".join(cell.rjust(widths[c + 1]) for c, cell in enumerate(row[1:]))
        )
    return "\n".join(lines)
