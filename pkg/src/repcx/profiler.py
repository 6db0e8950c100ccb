"""Experiment orchestration: per-epoch, per-boundary complexity grids.

A run directory holds one subdirectory per epoch, either a weight bundle
(epoch_NNN/manifest.json + weights.bin) from which activations are captured
natively, or pre-dumped boundary tensors (epoch_NNN/traces/<split>/*.rtd
with labels in run/labels_<split>.rtd) for ingesting representations
produced elsewhere (e.g. deep residual networks).

Large splits are measured with the subset-mean estimator: contiguous
subsets of the configured size, one LOO error each, averaged.  The grid is
assembled sequentially so reports are reproducible bit for bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .complexity import (
    ComplexityEstimate,
    loo_nn_error,
    subsample,
    subset_mean_complexity,
)
from .errors import ParameterError, ValidationError
from .lenet import boundaries, forward_batch, parse_trace_filename
from .pointset import LabeledPointSet, PointSetMeta
from .tensor_io import load_dataset, load_labels, load_tensor, load_weights

DEFAULT_SUBSET_SIZE = 10000


@dataclass
class RunConfig:
    variant: str = "basic"
    epochs: list[int] = field(default_factory=list)
    splits: list[str] = field(default_factory=lambda: ["train", "test"])
    subset_size: int = DEFAULT_SUBSET_SIZE
    capture_mode: str = "eval"
    dropout_seed: int | None = None
    # (stride, offset) applied to the train split before capture, or None
    reduction: tuple[int, int] | None = None
    # (n, seed) applied to ingested trace sets, or None
    subsample: tuple[int, int] | None = None
    # split -> {"images": path, "labels": path}; required for weight-bundle runs
    datasets: dict[str, dict[str, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.epochs:
            raise ParameterError("config needs a non-empty epochs list")
        if list(self.epochs) != sorted(set(int(e) for e in self.epochs)):
            raise ParameterError("epochs must be strictly increasing")
        self.epochs = [int(e) for e in self.epochs]
        if self.subset_size < 2:
            raise ParameterError("subset_size must be >= 2")
        if self.capture_mode not in ("eval", "train-dropout"):
            raise ParameterError(f"unknown capture mode {self.capture_mode!r}")
        if self.capture_mode == "train-dropout" and self.dropout_seed is None:
            raise ParameterError("train-dropout capture requires dropout_seed")
        if not self.splits:
            raise ParameterError("config needs at least one split")
        if self.reduction is not None:
            self.reduction = (int(self.reduction[0]), int(self.reduction[1]))
        if self.subsample is not None:
            self.subsample = (int(self.subsample[0]), int(self.subsample[1]))

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        return RunConfig(
            variant=d.get("variant", "basic"),
            epochs=list(d.get("epochs", [])),
            splits=list(d.get("splits", ["train", "test"])),
            subset_size=int(d.get("subset_size", DEFAULT_SUBSET_SIZE)),
            capture_mode=d.get("capture_mode", "eval"),
            dropout_seed=d.get("dropout_seed"),
            reduction=tuple(d["reduction"]) if d.get("reduction") else None,
            subsample=tuple(d["subsample"]) if d.get("subsample") else None,
            datasets=dict(d.get("datasets", {})),
        )

    @staticmethod
    def from_json(path: str | Path) -> "RunConfig":
        try:
            return RunConfig.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed config JSON in {path}: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "epochs": self.epochs,
            "splits": self.splits,
            "subset_size": self.subset_size,
            "capture_mode": self.capture_mode,
            "dropout_seed": self.dropout_seed,
            "reduction": list(self.reduction) if self.reduction else None,
            "subsample": list(self.subsample) if self.subsample else None,
            "datasets": self.datasets,
        }


@dataclass
class ProfileReport:
    config: dict
    # (index, layer, side) per boundary, in network order
    boundary_axis: list[tuple[int, str, str]]
    # (epoch, boundary_index, split) -> estimate
    cells: dict[tuple[int, int, str], ComplexityEstimate]
    # (epoch, split) -> (error, n); absent for ingested runs without weights
    end_to_end: dict[tuple[int, str], tuple[float, int]]
    timing: dict = field(default_factory=dict)

    @property
    def epochs(self) -> list[int]:
        return sorted({k[0] for k in self.cells})

    @property
    def splits(self) -> list[str]:
        cfg_splits = self.config.get("splits", [])
        present = {k[2] for k in self.cells}
        return [s for s in cfg_splits if s in present]

    def to_dict(self) -> dict:
        cells = [
            {
                "epoch": epoch,
                "boundary_index": bidx,
                "boundary_name": self._name(bidx),
                "side": self._side(bidx),
                "split": split,
                "estimate": est.to_dict(),
            }
            for (epoch, bidx, split), est in sorted(self.cells.items())
        ]
        end2end = [
            {"epoch": epoch, "split": split, "error": err, "n_points": n}
            for (epoch, split), (err, n) in sorted(self.end_to_end.items())
        ]
        return {
            "config": self.config,
            "boundaries": [list(b) for b in self.boundary_axis],
            "cells": cells,
            "end_to_end": end2end,
            "timing": self.timing,
        }

    def _name(self, bidx: int) -> str:
        for idx, layer, _ in self.boundary_axis:
            if idx == bidx:
                return layer
        raise KeyError(bidx)

    def _side(self, bidx: int) -> str:
        for idx, _, side in self.boundary_axis:
            if idx == bidx:
                return side
        raise KeyError(bidx)


# ---------------------------------------------------------------------------
# Dataset shaping
# ---------------------------------------------------------------------------

def reduce_dataset(set_: LabeledPointSet, stride: int, offset: int = 0) -> LabeledPointSet:
    """Keep rows offset, offset+stride, ... in the original order."""
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    if not 0 <= offset < stride:
        raise ParameterError(f"offset must be in [0, stride), got {offset}")
    return set_.take(np.arange(offset, set_.n, stride))


def measure_boundary(
    tensors: np.ndarray | list[np.ndarray],
    labels: np.ndarray,
    subset_size: int,
    subsample_spec: tuple[int, int] | None = None,
) -> ComplexityEstimate:
    """Flatten per-sample boundary tensors and estimate their complexity.

    Accepts a batched array (n, ...) or a list of per-sample tensors, which
    must all share one shape.  Sets larger than subset_size use the
    subset-mean estimator.
    """
    if isinstance(tensors, np.ndarray):
        batch = tensors
    else:
        shapes = {t.shape for t in tensors}
        if len(shapes) > 1:
            raise ValidationError(f"inconsistent sample dims across boundary tensors: {sorted(shapes)}")
        batch = np.stack(tensors) if tensors else np.zeros((0, 0), dtype=np.float32)
    points = np.ascontiguousarray(batch, dtype=np.float32).reshape(len(batch), -1)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(points):
        raise ValidationError(
            f"label count {len(labels)} does not match sample count {len(points)}"
        )
    set_ = LabeledPointSet(points, labels)
    if subsample_spec is not None:
        set_ = subsample(set_, subsample_spec[0], subsample_spec[1])
    if set_.n > subset_size:
        return subset_mean_complexity(set_, subset_size)
    return loo_nn_error(set_)


# ---------------------------------------------------------------------------
# Run orchestration
# ---------------------------------------------------------------------------

def _epoch_dir(run_dir: Path, epoch: int) -> Path:
    return run_dir / f"epoch_{epoch:03d}"


def _subset_ranges(n: int, m: int) -> tuple[list[tuple[int, int]], int]:
    if n <= m:
        return [(0, n)], 0
    count = n // m
    return [(s * m, (s + 1) * m) for s in range(count)], n - count * m


def _profile_weights_epoch(
    cfg: RunConfig,
    epoch_dir: Path,
    data: LabeledPointSet,
) -> tuple[list[ComplexityEstimate], tuple[float, int]]:
    """Capture activations from a weight bundle and measure every boundary."""
    w = load_weights(epoch_dir)
    if w.variant != cfg.variant:
        raise ValidationError(
            f"bundle {epoch_dir} has variant {w.variant!r}, config says {cfg.variant!r}"
        )
    n = data.n
    m = cfg.subset_size
    ranges, dropped = _subset_ranges(n, m)
    images_all = data.points.reshape((-1, 1, 32, 32))
    n_boundaries = len(boundaries(cfg.variant))
    per_subset: list[list[float]] = [[] for _ in range(n_boundaries)]
    mismatches = 0
    for a, b in ranges:
        idx = np.arange(a, b, dtype=np.int64)
        trace, logits = forward_batch(
            w,
            images_all[a:b],
            mode=cfg.capture_mode,
            dropout_seed=cfg.dropout_seed,
            sample_indices=idx,
        )
        if cfg.capture_mode == "eval":
            eval_logits = logits
        else:
            # end-to-end error is defined in eval mode; capture keeps dropout
            _, eval_logits = forward_batch(w, images_all[a:b], mode="eval", capture=False)
        preds = np.argmax(eval_logits, axis=1)
        mismatches += int((preds != data.labels[a:b]).sum())
        for bi, tensor in enumerate(trace.tensors):
            pts = tensor.reshape(b - a, -1)
            est = loo_nn_error(LabeledPointSet(pts, data.labels[a:b]))
            per_subset[bi].append(est.value)
    if dropped:
        a = ranges[-1][1]
        _, tail_logits = forward_batch(w, images_all[a:], mode="eval", capture=False)
        preds = np.argmax(tail_logits, axis=1)
        mismatches += int((preds != data.labels[a:]).sum())
    estimates = [
        ComplexityEstimate(
            value=sum(vals) / len(vals),
            n_points=n,
            subset_count=len(vals),
            subset_size=m if n > m else n,
            per_subset=tuple(vals),
            dropped_tail=dropped,
        )
        for vals in per_subset
    ]
    return estimates, (mismatches / n, n)


def _discover_trace_files(trace_dir: Path) -> list[tuple[int, str, str, Path]]:
    """Boundary files are NNN_layer_side.{rtd,npy}; anything else in the
    directory (labels, logits, manifests) is ignored."""
    entries = []
    for pattern in ("*.rtd", "*.npy"):
        for path in sorted(trace_dir.glob(pattern)):
            try:
                idx, layer, side = parse_trace_filename(path.name)
            except ValidationError:
                continue
            entries.append((idx, layer, side, path))
    if not entries:
        raise ValidationError(f"no trace files (NNN_layer_side.rtd/.npy) found in {trace_dir}")
    entries.sort(key=lambda e: e[0])
    indices = [e[0] for e in entries]
    if len(set(indices)) != len(indices):
        raise ValidationError(f"duplicate boundary indices in {trace_dir}")
    return entries


def _profile_traces_epoch(
    cfg: RunConfig,
    trace_dir: Path,
    labels: np.ndarray,
) -> tuple[list[tuple[int, str, str]], list[ComplexityEstimate]]:
    entries = _discover_trace_files(trace_dir)
    axis = [(idx, layer, side) for idx, layer, side, _ in entries]
    estimates = []
    for idx, layer, side, path in entries:
        tensor = load_tensor(path)
        if len(tensor) != len(labels):
            raise ValidationError(
                f"{path} holds {len(tensor)} samples but labels have {len(labels)}"
            )
        estimates.append(
            measure_boundary(tensor, labels, cfg.subset_size, cfg.subsample)
        )
    return axis, estimates


def profile_run(cfg: RunConfig, run_dir: str | Path) -> ProfileReport:
    """Measure every configured (epoch, boundary, split) cell of a run."""
    run = Path(run_dir)
    missing = [f"epoch_{e:03d}" for e in cfg.epochs if not _epoch_dir(run, e).is_dir()]
    if missing:
        found = sorted(p.name for p in run.glob("epoch_*") if p.is_dir())
        raise ValidationError(
            f"missing epoch directories in {run}: {', '.join(missing)}; "
            f"found: {', '.join(found) if found else '(none)'}"
        )

    cells: dict[tuple[int, int, str], ComplexityEstimate] = {}
    end_to_end: dict[tuple[int, str], tuple[float, int]] = {}
    axis: list[tuple[int, str, str]] | None = None
    timing: dict = {"per_epoch_s": {}}
    t_start = time.perf_counter()

    datasets: dict[str, LabeledPointSet] = {}

    def split_data(split: str) -> LabeledPointSet:
        if split not in datasets:
            if split not in cfg.datasets:
                raise ValidationError(f"config has no dataset paths for split {split!r}")
            spec = cfg.datasets[split]
            data = load_dataset(spec["images"], spec["labels"])
            if split == "train" and cfg.reduction is not None:
                data = reduce_dataset(data, *cfg.reduction)
            data.meta = PointSetMeta(split=split)
            datasets[split] = data
        return datasets[split]

    for epoch in cfg.epochs:
        edir = _epoch_dir(run, epoch)
        t_epoch = time.perf_counter()
        is_bundle = (edir / "manifest.json").is_file()
        has_traces = (edir / "traces").is_dir()
        if is_bundle:
            epoch_axis = [
                (b.index, b.layer_name, b.side) for b in boundaries(cfg.variant)
            ]
            for split in cfg.splits:
                estimates, e2e = _profile_weights_epoch(cfg, edir, split_data(split))
                for (bidx, _, _), est in zip(epoch_axis, estimates):
                    cells[(epoch, bidx, split)] = est
                end_to_end[(epoch, split)] = e2e
        elif has_traces:
            epoch_axis = None
            for split in cfg.splits:
                tdir = edir / "traces" / split
                if not tdir.is_dir():
                    raise ValidationError(f"missing trace directory {tdir}")
                labels_path = run / f"labels_{split}.rtd"
                if not labels_path.is_file():
                    npy = run / f"labels_{split}.npy"
                    if npy.is_file():
                        labels_path = npy
                    else:
                        raise ValidationError(f"missing labels file {labels_path}")
                labels = load_labels(labels_path)
                split_axis, estimates = _profile_traces_epoch(cfg, tdir, labels)
                if epoch_axis is None:
                    epoch_axis = split_axis
                elif split_axis != epoch_axis:
                    raise ValidationError(
                        f"boundary list in {tdir} differs from other splits"
                    )
                for (bidx, _, _), est in zip(split_axis, estimates):
                    cells[(epoch, bidx, split)] = est
        else:
            raise ValidationError(
                f"{edir} holds neither a weight bundle (manifest.json) nor traces/"
            )
        if axis is None:
            axis = epoch_axis
        elif epoch_axis != axis:
            raise ValidationError(f"boundary list of epoch {epoch} differs from earlier epochs")
        timing["per_epoch_s"][str(epoch)] = round(time.perf_counter() - t_epoch, 3)

    timing["total_s"] = round(time.perf_counter() - t_start, 3)
    return ProfileReport(
        config=cfg.to_dict(),
        boundary_axis=axis or [],
        cells=cells,
        end_to_end=end_to_end,
        timing=timing,
    )


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

_CSV_HEADER = (
    "epoch,boundary_index,boundary_name,side,split,n_points,subset_count,complexity,dropped_tail"
)


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def emit_report(report: ProfileReport, format: str, path: str | Path) -> None:
    """Serialize a report as csv, json, or plot-series (one series per epoch)."""
    path = Path(path)
    if format == "csv":
        lines = [_CSV_HEADER]
        end_index = max((b[0] for b in report.boundary_axis), default=-1) + 1
        for epoch in report.epochs:
            for split in report.splits:
                for bidx, name, side in report.boundary_axis:
                    est = report.cells[(epoch, bidx, split)]
                    lines.append(
                        f"{epoch},{bidx},{name},{side},{split},{est.n_points},"
                        f"{est.subset_count},{_fmt(est.value)},{est.dropped_tail}"
                    )
                if (epoch, split) in report.end_to_end:
                    err, n = report.end_to_end[(epoch, split)]
                    lines.append(
                        f"{epoch},{end_index},END2END,,{split},{n},,{_fmt(err)},"
                    )
        path.write_text("\n".join(lines) + "\n")
    elif format == "json":
        path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    elif format == "plot-series":
        series: dict = {}
        e2e: dict = {}
        for split in report.splits:
            series[split] = {}
            e2e[split] = {}
            for epoch in report.epochs:
                pairs = [
                    [bidx, report.cells[(epoch, bidx, split)].value]
                    for bidx, _, _ in report.boundary_axis
                ]
                series[split][str(epoch)] = pairs
                if (epoch, split) in report.end_to_end:
                    e2e[split][str(epoch)] = report.end_to_end[(epoch, split)][0]
        payload = {
            "boundaries": [list(b) for b in report.boundary_axis],
            "series": series,
            "end_to_end": e2e,
        }
        path.write_text(json.dumps(payload, indent=2) + "\n")
    else:
        raise ParameterError(f"unknown report format {format!r}")


__all__ = [
    "DEFAULT_SUBSET_SIZE",
    "RunConfig",
    "ProfileReport",
    "reduce_dataset",
    "measure_boundary",
    "profile_run",
    "emit_report",
]
