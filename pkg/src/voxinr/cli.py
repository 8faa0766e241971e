"""Command-line pipeline: gen, train, eval, sweep, slice.

Exit codes: 0 success, 2 usage error, 3 data error (unreadable or
inconsistent inputs). Determinism is strict by default: math runs
single-threaded unless ``--threads`` opts into BLAS parallelism, and
``--strict-determinism`` forces the single-threaded path back on.
"""

from __future__ import annotations

import argparse
import contextlib
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .io import (
    FormatError,
    load_checkpoint,
    read_volz,
    save_checkpoint,
    write_loss_csv,
    write_pgm,
    write_report_csv,
    write_volz,
    format_report_table,
)
from .masks import compute_avm, extract_dataset
from .metrics import evaluate
from .pipeline import (
    MaskVariant,
    SweepSpec,
    build_mask,
    parse_region,
    region_mean,
    run_sweep,
)
from .synthetic import MIN_AXIS, SyntheticSpec, generate_synthetic
from .training import TrainConfig, reconstruct_full, train
from .volume import normalize

USAGE_ERROR = 2
DATA_ERROR = 3


class UsageError(Exception):
    pass


def _parse_dims(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"bad dims {text!r}, expected NX,NY,NZ") from None
    if len(parts) != 3:
        raise UsageError(f"bad dims {text!r}, expected three axes")
    return parts


def _train_config(args, grid_count: int) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        fourier_features=args.fourier_features,
        gauss_multiplier=args.gauss_multiplier,
        hidden_layers=args.hidden_layers,
        hidden_width=args.hidden_width,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        band_count=args.band_count,
        grid_count=grid_count,
    )


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="BLAS thread cap; values above 1 trade bit-reproducibility for speed",
    )
    parser.add_argument(
        "--strict-determinism",
        action="store_true",
        help="force single-threaded math even if --threads asks for more",
    )


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--fourier-features", type=int, default=1280)
    parser.add_argument("--gauss-multiplier", type=float, default=2.5)
    parser.add_argument("--hidden-layers", type=int, default=8)
    parser.add_argument("--hidden-width", type=int, default=512)
    parser.add_argument("--batch-size", type=int, default=24)
    parser.add_argument("--learning-rate", type=float, default=3e-4)
    parser.add_argument("--band-count", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxinr",
        description="Train Fourier-feature coordinate networks on selectively sampled volumes.",
    )
    parser.add_argument("--version", action="version", version=f"voxinr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic plume volume")
    p_gen.add_argument("--dims", default="64,64,64", help="NX,NY,NZ (default 64,64,64)")
    p_gen.add_argument("--carve-quadrant", action="store_true",
                       help="zero the x<nx/2, y<ny/2 quadrant")
    p_gen.add_argument("--active-fraction", type=float, default=0.18)
    p_gen.add_argument("-o", "--output", required=True)
    _add_run_flags(p_gen)

    p_train = sub.add_parser("train", help="train a network on a volume")
    p_train.add_argument("volume", help="input .volz file")
    p_train.add_argument("--mask", default="bbx", help="bbx, avm, or dilated:<l> (default bbx)")
    p_train.add_argument("-o", "--output", required=True, help="checkpoint output path")
    p_train.add_argument("--loss-csv", help="optional per-epoch loss CSV")
    _add_train_flags(p_train)
    _add_run_flags(p_train)

    p_eval = sub.add_parser("eval", help="score a checkpoint against a volume")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("volume")
    p_eval.add_argument("--csv", help="optional report CSV path")
    p_eval.add_argument("--region", help="x0:x1,y0:y1,z0:z1 box for localized stats")
    p_eval.add_argument("--include-encoder", action="store_true",
                        help="count encoder parameters in the compression ratio")
    _add_run_flags(p_eval)

    p_sweep = sub.add_parser("sweep", help="compare mask variants under one config")
    p_sweep.add_argument("volume")
    p_sweep.add_argument("--variants", default="avm,dilated:1,dilated:5,bbx",
                         help="comma list of bbx, avm, dilated:<l>")
    p_sweep.add_argument("--csv", help="optional report CSV path")
    p_sweep.add_argument("--include-encoder", action="store_true")
    _add_train_flags(p_sweep)
    _add_run_flags(p_sweep)

    p_slice = sub.add_parser("slice", help="export one Z slice as a PGM image")
    p_slice.add_argument("source", help=".volz volume or .ffck checkpoint")
    p_slice.add_argument("--z", type=int, required=True)
    p_slice.add_argument("--grid", required=True, help="grid name to slice")
    p_slice.add_argument("-o", "--output", required=True)
    _add_run_flags(p_slice)
    return parser


def _cmd_gen(args) -> int:
    dims = _parse_dims(args.dims)
    if min(dims) < MIN_AXIS:
        raise UsageError(f"dims must be at least {MIN_AXIS} per axis, got {args.dims}")
    try:
        spec = SyntheticSpec(
            dims=dims,
            carve_quadrant=args.carve_quadrant,
            active_fraction=args.active_fraction,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    volume = generate_synthetic(spec, args.seed)
    write_volz(args.output, volume)
    active = int(np.count_nonzero((volume.data > 0).any(axis=0)))
    print(
        f"wrote {args.output}: dims {dims[0]}x{dims[1]}x{dims[2]}, "
        f"grids {', '.join(volume.names)}, active fraction {active / volume.voxel_count:.3f}"
    )
    return 0


def _epoch_printer(total: int):
    def progress(epoch, loss, elapsed):
        print(f"epoch {epoch + 1}/{total}  mean_loss {loss:.6g}  elapsed {elapsed:.1f}s")

    return progress


def _cmd_train(args) -> int:
    try:
        variant = MaskVariant.parse(args.mask)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    volume, _ = read_volz(args.volume)
    normalized, params = normalize(volume)
    mask = build_mask(normalized, variant)
    dataset = extract_dataset(normalized, mask)
    config = _train_config(args, volume.grid_count)
    print(f"mask {variant.label}: {len(dataset)} of {volume.voxel_count} voxels")
    report = train(dataset, config, variant_label=variant.label,
                   progress=_epoch_printer(config.epochs))
    report.network.normalization = params
    save_checkpoint(
        args.output,
        report.network,
        config,
        dims=volume.dims,
        grid_names=volume.names,
        loss_history=report.epoch_losses,
    )
    if args.loss_csv:
        write_loss_csv(args.loss_csv, report)
    print(f"trained {report.row_count} rows in {report.wall_seconds:.2f}s "
          f"-> {args.output}")
    return 0


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    volume, _ = read_volz(args.volume)
    if ckpt.dims != volume.dims:
        raise FormatError(
            f"checkpoint dims {ckpt.dims} do not match volume dims {volume.dims}"
        )
    normalized, _ = normalize(volume)
    recon = reconstruct_full(ckpt.network, volume.dims, grid_names=volume.names)
    quality = evaluate(
        normalized,
        recon,
        net=ckpt.network,
        label="eval",
        include_encoder=args.include_encoder,
    )
    print(format_report_table([quality]))
    if args.region:
        try:
            region = parse_region(args.region, volume.dims)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        for name in volume.names:
            print(
                f"region {args.region} {name}: "
                f"mean_predicted {region_mean(recon, name, region):.6f}  "
                f"mean_reference {region_mean(normalized, name, region):.6f}"
            )
    if args.csv:
        write_report_csv(args.csv, [quality])
    return 0


def _cmd_sweep(args) -> int:
    try:
        variants = tuple(MaskVariant.parse(v) for v in args.variants.split(","))
        spec = SweepSpec(variants=variants, config=_train_config(args, 1))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    volume, _ = read_volz(args.volume)

    def progress(label, report):
        print(f"{label}: {report.row_count} rows, {report.wall_seconds:.2f}s, "
              f"final loss {report.final_loss:.6g}")

    results, _ = run_sweep(volume, spec, include_encoder=args.include_encoder,
                           progress=progress)
    reports = [r.quality for r in results]
    print(format_report_table(reports))
    if args.csv:
        write_report_csv(args.csv, reports)
    return 0


def _cmd_slice(args) -> int:
    with open(args.source, "rb") as fh:
        magic = fh.read(4)
    if magic == b"FFCK":
        ckpt = load_checkpoint(args.source)
        if args.grid not in ckpt.grid_names:
            raise UsageError(f"unknown grid {args.grid!r}; checkpoint has {ckpt.grid_names}")
        volume = reconstruct_full(ckpt.network, ckpt.dims, grid_names=ckpt.grid_names)
    else:
        volume, _ = read_volz(args.source)
        if args.grid not in volume.names:
            raise UsageError(f"unknown grid {args.grid!r}; volume has {volume.names}")
    nz = volume.dims[2]
    if not (0 <= args.z < nz):
        raise UsageError(f"z index {args.z} out of range [0, {nz})")
    write_pgm(args.output, volume.grid_3d(args.grid)[:, :, args.z])
    print(f"wrote {args.output}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "slice": _cmd_slice,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    limit = 1 if (args.strict_determinism or args.threads < 2) else args.threads
    try:
        with contextlib.ExitStack() as stack:
            stack.enter_context(threadpool_limits(limits=limit))
            return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (FormatError, FloatingPointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
