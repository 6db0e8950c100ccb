"""Command-line surface: complexity, infer, profile, reduce.

Machine-readable JSON goes to stdout; diagnostics to stderr.  Exit codes:
0 success, 1 validation/format/parameter error, 2 I/O error.  Every error
prints one `REPCX_E_*: message` line to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import backend
from .complexity import loo_nn_error, subsample, subset_mean_complexity
from .errors import ParameterError, RepcxError, ValidationError
from .lenet import forward_batch, write_trace
from .pointset import LabeledPointSet
from .profiler import RunConfig, emit_report, profile_run
from .tensor_io import (
    IDX_MAGIC_IMAGES,
    load_dataset,
    load_labels,
    load_tensor,
    load_weights,
    read_idx,
    save_tensor,
    write_idx,
)


class _Parser(argparse.ArgumentParser):
    # route usage errors through the validation exit code (1), not argparse's 2
    def error(self, message):
        raise ParameterError(message)


def _is_idx(path: str) -> bool:
    import gzip
    import struct

    with open(path, "rb") as fh:
        head = fh.read(4)
    if head[:2] == b"\x1f\x8b":
        with gzip.open(path, "rb") as fh:
            head = fh.read(4)
    return len(head) == 4 and struct.unpack(">I", head)[0] in (
        IDX_MAGIC_IMAGES,
        0x00000801,
    )


def cmd_complexity(args) -> int:
    tensor = load_tensor(args.tensor)
    if tensor.ndim < 1 or len(tensor) == 0:
        raise ValidationError(f"{args.tensor} holds no samples")
    points = np.ascontiguousarray(tensor, dtype=np.float32).reshape(len(tensor), -1)
    labels = load_labels(args.labels)
    set_ = LabeledPointSet(points, labels)
    if args.subsample is not None:
        set_ = subsample(set_, args.subsample, args.seed)
    if args.subset_size is not None:
        est = subset_mean_complexity(set_, args.subset_size)
    else:
        est = loo_nn_error(set_)
    print(json.dumps(est.to_dict()))
    return 0


def cmd_infer(args) -> int:
    w = load_weights(args.weights)
    data = load_dataset(args.images, args.labels)
    if data.dim != 1024:
        raise ValidationError(
            f"images must flatten to 1024 values (1x32x32), got d={data.dim}"
        )
    images = data.points.reshape((-1, 1, 32, 32))
    trace, logits = forward_batch(
        w, images, mode=args.mode, dropout_seed=args.dropout_seed
    )
    out = Path(args.out)
    write_trace(trace, out, labels=data.labels)
    preds = np.argmax(logits, axis=1).astype(np.int64)
    save_tensor(preds, out / "predictions.rtd")
    error_rate = float(int((preds != data.labels).sum()) / data.n)
    print(
        json.dumps(
            {
                "error_rate": error_rate,
                "n": data.n,
                "mode": args.mode,
                "boundaries": len(trace.boundaries),
                "out": str(out),
            }
        )
    )
    return 0


def cmd_profile(args) -> int:
    cfg = RunConfig.from_json(args.config)
    report = profile_run(cfg, args.run_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(report, "csv", out / "report.csv")
    emit_report(report, "json", out / "report.json")
    emit_report(report, "plot-series", out / "plot_series.json")
    print(
        json.dumps(
            {
                "out": str(out),
                "epochs": len(report.epochs),
                "boundaries": len(report.boundary_axis),
                "cells": len(report.cells),
            }
        )
    )
    return 0


def cmd_reduce(args) -> int:
    stride, offset = args.stride, args.offset
    if stride < 1:
        raise ParameterError(f"--stride must be >= 1, got {stride}")
    if not 0 <= offset < stride:
        raise ParameterError(f"--offset must be in [0, stride), got {offset}")
    images_in, labels_in = args.inputs
    images_out, labels_out = args.outputs
    if _is_idx(images_in):
        images = read_idx(images_in)
        labels = read_idx(labels_in)
        if len(images) != len(labels):
            raise ValidationError("image/label counts differ")
        write_idx(images_out, images[offset::stride])
        write_idx(labels_out, labels[offset::stride])
        n_out = len(images[offset::stride])
    else:
        images = load_tensor(images_in)
        labels = load_tensor(labels_in)
        if len(images) != len(labels):
            raise ValidationError("image/label counts differ")
        save_tensor(np.ascontiguousarray(images[offset::stride]), images_out)
        save_tensor(np.ascontiguousarray(labels[offset::stride]), labels_out)
        n_out = len(images[offset::stride])
    print(json.dumps({"n_out": n_out, "images": images_out, "labels": labels_out}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="repcx",
        description="Representation-complexity profiler (leave-one-out 1-NN error).",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap worker threads (default: REPCX_THREADS or all cores)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "complexity", help="LOO-1NN error of a tensor file with labels"
    )
    p.add_argument("tensor", help="RTD or NPY file; first axis indexes samples")
    p.add_argument("labels", help="RTD or NPY integer label vector")
    p.add_argument(
        "--subset-size",
        type=int,
        default=None,
        help="use the subset-mean estimator with this subset size",
    )
    p.add_argument(
        "--subsample", type=int, default=None, help="measure on n sampled points"
    )
    p.add_argument("--seed", type=int, default=0, help="subsampling seed (PCG64)")
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser(
        "infer", help="forward pass with boundary capture and predictions"
    )
    p.add_argument("--weights", required=True, help="LNW1 bundle directory")
    p.add_argument("--images", required=True, help="IDX image file or RTD/NPY tensor")
    p.add_argument("--labels", required=True, help="IDX label file or RTD/NPY tensor")
    p.add_argument("--out", required=True, help="output directory for trace files")
    p.add_argument(
        "--mode",
        choices=["eval", "train-dropout"],
        default="eval",
        help="capture mode; predictions and the printed error follow this mode",
    )
    p.add_argument("--dropout-seed", type=int, default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("profile", help="measure a full run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--config", required=True, help="RunConfig JSON file")
    p.add_argument("--out", required=True, help="report output directory")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("reduce", help="keep every stride-th sample of a dataset")
    p.add_argument(
        "--in",
        dest="inputs",
        nargs=2,
        metavar=("IMAGES", "LABELS"),
        required=True,
    )
    p.add_argument(
        "--out",
        dest="outputs",
        nargs=2,
        metavar=("IMAGES", "LABELS"),
        required=True,
    )
    p.add_argument("--stride", type=int, default=6)
    p.add_argument("--offset", type=int, default=0)
    p.set_defaults(func=cmd_reduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        backend.configure_threads(args.threads)
        return args.func(args)
    except RepcxError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"REPCX_E_IO: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
