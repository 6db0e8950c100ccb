from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from repcx.complexity import ComplexityEstimate
from repcx.errors import ParameterError, ValidationError
from repcx.pointset import LabeledPointSet
from repcx.profiler import (
    RunConfig,
    emit_report,
    measure_boundary,
    profile_run,
    reduce_dataset,
)
from repcx.tensor_io import save_tensor, save_weights

from conftest import make_weights
from oracles import loo_brute_error, subset_mean_brute


def pset(points, labels):
    return LabeledPointSet(np.asarray(points, dtype=np.float32), np.asarray(labels))


# ---------------------------------------------------------------------------
# reduce_dataset
# ---------------------------------------------------------------------------

def test_reduce_identity_stride_one(rng):
    s = pset(rng.random((10, 2)), rng.integers(0, 2, 10))
    out = reduce_dataset(s, 1, 0)
    assert np.array_equal(out.points, s.points)


def test_reduce_every_sixth_of_60000():
    pts = np.arange(60000, dtype=np.float32).reshape(-1, 1)
    s = pset(pts, np.zeros(60000, dtype=np.int64))
    out = reduce_dataset(s, 6, 0)
    assert out.n == 10000
    assert out.points[0, 0] == 0
    assert out.points[1, 0] == 6
    assert out.points[-1, 0] == 59994


def test_reduce_hand_enumeration():
    pts = np.arange(10, dtype=np.float32).reshape(-1, 1)
    s = pset(pts, np.zeros(10, dtype=np.int64))
    out = reduce_dataset(s, 3, 1)
    assert out.points[:, 0].tolist() == [1.0, 4.0, 7.0]


def test_reduce_parameter_validation(rng):
    s = pset(rng.random((5, 1)), np.zeros(5, dtype=np.int64))
    with pytest.raises(ParameterError):
        reduce_dataset(s, 0, 0)
    with pytest.raises(ParameterError):
        reduce_dataset(s, 3, 3)
    with pytest.raises(ParameterError):
        reduce_dataset(s, 3, -1)


# ---------------------------------------------------------------------------
# measure_boundary
# ---------------------------------------------------------------------------

def test_measure_one_hot_activations_is_zero(any_backend):
    labels = np.array([0, 1, 2, 0, 1, 2, 1, 0], dtype=np.int64)
    acts = np.zeros((8, 3, 1, 1), dtype=np.float32)
    acts[np.arange(8), labels] = 1.0
    est = measure_boundary(acts, labels, subset_size=100)
    assert est.value == 0.0


def test_measure_identical_activations_tie_rule(any_backend):
    # all representations equal: every point resolves to index 0's label
    labels = np.array([3, 1, 3, 3, 2, 3, 3, 1, 3, 3], dtype=np.int64)
    acts = np.ones((10, 4), dtype=np.float32)
    est = measure_boundary(acts, labels, subset_size=100)
    n0 = (labels == labels[0]).sum()
    # index 0 itself resolves to index 1's label (wrong here)
    want = 1 - (n0 - 1) / 10
    assert est.value == want
    assert est.value == loo_brute_error(acts, labels)


def test_measure_subsample_then_subsets(any_backend, rng):
    acts = rng.random((40, 2, 3), dtype=np.float32)
    labels = rng.integers(0, 2, 40)
    est = measure_boundary(acts, labels, subset_size=10, subsample_spec=(25, 3))
    assert est.n_points == 25
    assert est.subset_count == 2
    assert est.dropped_tail == 5


def test_measure_list_input_dim_mismatch():
    tensors = [np.zeros((2, 2), dtype=np.float32), np.zeros((2, 3), dtype=np.float32)]
    with pytest.raises(ValidationError):
        measure_boundary(tensors, np.array([0, 1]), subset_size=10)


def test_measure_label_count_mismatch(rng):
    with pytest.raises(ValidationError):
        measure_boundary(rng.random((4, 2), dtype=np.float32), np.array([0, 1]), 10)


def test_measure_matches_raw_pixel_oracle(any_backend, rng):
    pixels = rng.random((50, 1, 8, 8), dtype=np.float32)
    labels = rng.integers(0, 4, 50)
    est = measure_boundary(pixels, labels, subset_size=1000)
    assert est.value == loo_brute_error(pixels.reshape(50, -1), labels)


# ---------------------------------------------------------------------------
# RunConfig
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ParameterError):
        RunConfig(epochs=[])
    with pytest.raises(ParameterError):
        RunConfig(epochs=[2, 1])
    with pytest.raises(ParameterError):
        RunConfig(epochs=[1], subset_size=1)
    with pytest.raises(ParameterError):
        RunConfig(epochs=[1], capture_mode="train-dropout")
    with pytest.raises(ParameterError):
        RunConfig(epochs=[1], capture_mode="bogus")


def test_config_json_roundtrip(tmp_path):
    cfg = RunConfig(
        variant="dropout",
        epochs=[1, 2, 5],
        splits=["test"],
        subset_size=50,
        capture_mode="train-dropout",
        dropout_seed=9,
        reduction=(6, 0),
        subsample=(100, 1),
        datasets={"test": {"images": "a", "labels": "b"}},
    )
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    back = RunConfig.from_json(p)
    assert back.to_dict() == cfg.to_dict()


# ---------------------------------------------------------------------------
# run directories
# ---------------------------------------------------------------------------

@pytest.fixture
def weights_run(tmp_path, rng):
    """Two-epoch bundle run over a 24-image synthetic test split."""
    run = tmp_path / "run"
    for e, seed in ((1, 10), (2, 20)):
        save_weights(make_weights(seed=seed), run / f"epoch_{e:03d}")
    images = rng.random((24, 1, 32, 32), dtype=np.float32)
    labels = rng.integers(0, 10, 24).astype(np.int64)
    save_tensor(images, tmp_path / "imgs.rtd")
    save_tensor(labels, tmp_path / "labs.rtd")
    cfg = RunConfig(
        variant="basic",
        epochs=[1, 2],
        splits=["test"],
        subset_size=10000,
        datasets={"test": {"images": str(tmp_path / "imgs.rtd"), "labels": str(tmp_path / "labs.rtd")}},
    )
    return run, cfg, images, labels


def make_traces_run(tmp_path, rng, epochs=(1, 2), splits=("train", "test"), n=20):
    """Fabricated external dumps with known labels (inference-free)."""
    run = tmp_path / "ingest"
    layers = [(0, "init", "entry"), (1, "stage1_unit1", "exit"), (2, "output", "exit")]
    labels = {s: rng.integers(0, 5, n).astype(np.int64) for s in splits}
    tensors: dict = {}
    run.mkdir(parents=True, exist_ok=True)
    for s in splits:
        save_tensor(labels[s], run / f"labels_{s}.rtd")
    for e in epochs:
        for s in splits:
            tdir = run / f"epoch_{e:03d}" / "traces" / s
            tdir.mkdir(parents=True)
            for idx, layer, side in layers:
                shape = (n, 4, 2) if idx < 2 else (n, 5)
                t = rng.standard_normal(shape).astype(np.float32)
                tensors[(e, s, idx)] = t
                save_tensor(t, tdir / f"{idx:03d}_{layer}_{side}.rtd")
    return run, layers, labels, tensors


def test_profile_weights_run_counting(any_backend, weights_run):
    run, cfg, _, _ = weights_run
    report = profile_run(cfg, run)
    assert len(report.boundary_axis) == 12  # 11 layers + input
    assert len(report.cells) == 2 * 12
    assert set(report.end_to_end) == {(1, "test"), (2, "test")}
    # completeness: every configured cell exactly once
    for e in (1, 2):
        for bidx, _, _ in report.boundary_axis:
            assert (e, bidx, "test") in report.cells


def test_profile_weights_values_match_direct_measurement(any_backend, weights_run):
    run, cfg, images, labels = weights_run
    from repcx.lenet import end_to_end_error, forward_batch
    from repcx.tensor_io import load_weights

    report = profile_run(cfg, run)
    w = load_weights(run / "epoch_001")
    trace, _ = forward_batch(w, images)
    for bid, tensor in zip(trace.boundaries, trace.tensors):
        est = report.cells[(1, bid.index, "test")]
        assert est.value == loo_brute_error(tensor.reshape(24, -1), labels)
    err, n = report.end_to_end[(1, "test")]
    assert n == 24
    assert err == end_to_end_error(w, LabeledPointSet(images.reshape(24, -1), labels))


def test_profile_rerun_is_identical(any_backend, weights_run):
    run, cfg, _, _ = weights_run
    a = profile_run(cfg, run)
    b = profile_run(cfg, run)
    da, db = a.to_dict(), b.to_dict()
    da.pop("timing"), db.pop("timing")
    assert da == db


def test_profile_missing_epoch_is_descriptive(weights_run):
    run, cfg, _, _ = weights_run
    cfg2 = RunConfig.from_dict({**cfg.to_dict(), "epochs": [1, 2, 3]})
    with pytest.raises(ValidationError, match="epoch_003") as ei:
        profile_run(cfg2, run)
    assert "epoch_001" in str(ei.value)  # lists what was found


def test_profile_reduction_applies_to_train_split(tmp_path, rng):
    run = tmp_path / "run"
    save_weights(make_weights(seed=4), run / "epoch_001")
    images = rng.random((24, 1, 32, 32), dtype=np.float32)
    labels = rng.integers(0, 10, 24).astype(np.int64)
    save_tensor(images, tmp_path / "i.rtd")
    save_tensor(labels, tmp_path / "l.rtd")
    paths = {"images": str(tmp_path / "i.rtd"), "labels": str(tmp_path / "l.rtd")}
    cfg = RunConfig(
        variant="basic",
        epochs=[1],
        splits=["train", "test"],
        reduction=(6, 0),
        datasets={"train": paths, "test": paths},
    )
    report = profile_run(cfg, run)
    assert report.cells[(1, 0, "train")].n_points == 4  # every 6th of 24
    assert report.cells[(1, 0, "test")].n_points == 24  # test split untouched
    assert report.end_to_end[(1, "train")][1] == 4


def test_profile_dropout_eval_capture_entry_exit_equal(tmp_path, rng):
    run = tmp_path / "droprun"
    save_weights(make_weights(seed=3, variant="dropout"), run / "epoch_001")
    images = rng.random((10, 1, 32, 32), dtype=np.float32)
    labels = rng.integers(0, 10, 10).astype(np.int64)
    save_tensor(images, tmp_path / "i.rtd")
    save_tensor(labels, tmp_path / "l.rtd")
    cfg = RunConfig(
        variant="dropout",
        epochs=[1],
        splits=["test"],
        datasets={"test": {"images": str(tmp_path / "i.rtd"), "labels": str(tmp_path / "l.rtd")}},
    )
    report = profile_run(cfg, run)
    from repcx.lenet import layer_names

    names = layer_names("dropout")
    for k, name in enumerate(names):
        if name.startswith("drop"):
            entry = report.cells[(1, k, "test")]
            exit_ = report.cells[(1, k + 1, "test")]
            assert entry.value == exit_.value


def test_profile_train_dropout_capture(tmp_path, rng):
    run = tmp_path / "droprun"
    save_weights(make_weights(seed=3, variant="dropout"), run / "epoch_001")
    images = rng.random((16, 1, 32, 32), dtype=np.float32)
    labels = rng.integers(0, 10, 16).astype(np.int64)
    save_tensor(images, tmp_path / "i.rtd")
    save_tensor(labels, tmp_path / "l.rtd")
    datasets = {"test": {"images": str(tmp_path / "i.rtd"), "labels": str(tmp_path / "l.rtd")}}
    base = dict(variant="dropout", epochs=[1], splits=["test"], datasets=datasets)
    rep_eval = profile_run(RunConfig(**base), run)
    rep_drop = profile_run(
        RunConfig(**base, capture_mode="train-dropout", dropout_seed=11), run
    )
    rep_drop2 = profile_run(
        RunConfig(**base, capture_mode="train-dropout", dropout_seed=11), run
    )
    # end-to-end error is eval-mode regardless of capture mode
    assert rep_drop.end_to_end == rep_eval.end_to_end
    # dropout-active capture perturbs at least one drop boundary's complexity
    from repcx.lenet import layer_names

    changed = 0
    for k, name in enumerate(layer_names("dropout")):
        if name.startswith("drop"):
            if rep_drop.cells[(1, k + 1, "test")] != rep_drop.cells[(1, k, "test")]:
                changed += 1
    assert changed >= 1
    # and the capture is reproducible given the seed
    a, b = rep_drop.to_dict(), rep_drop2.to_dict()
    a.pop("timing"), b.pop("timing")
    assert a == b


def test_profile_traces_run(any_backend, tmp_path, rng):
    run, layers, labels, tensors = make_traces_run(tmp_path, rng)
    cfg = RunConfig(variant="basic", epochs=[1, 2], splits=["train", "test"], subset_size=10000)
    report = profile_run(cfg, run)
    assert report.boundary_axis == layers
    assert len(report.cells) == 2 * 2 * 3
    assert report.end_to_end == {}  # no weights, no end-to-end cells
    for (e, bidx, s), est in report.cells.items():
        t = tensors[(e, s, bidx)]
        assert est.value == loo_brute_error(t.reshape(len(t), -1), labels[s])


def test_profile_traces_with_subsample_and_subsets(any_backend, tmp_path, rng):
    run, layers, labels, tensors = make_traces_run(tmp_path, rng, epochs=(1,), splits=("test",), n=30)
    cfg = RunConfig(
        variant="basic",
        epochs=[1],
        splits=["test"],
        subset_size=8,
        subsample=(20, 5),
    )
    report = profile_run(cfg, run)
    from repcx.complexity import subsample as do_subsample

    for (e, bidx, s), est in report.cells.items():
        t = tensors[(e, s, bidx)].reshape(30, -1)
        sub = do_subsample(pset(t, labels[s]), 20, 5)
        want_value, want_per, want_tail = subset_mean_brute(sub.points, sub.labels, 8)
        assert est.n_points == 20
        assert est.subset_count == 2
        assert est.dropped_tail == want_tail == 4
        assert est.per_subset == tuple(want_per)
        assert est.value == want_value


def test_profile_traces_npy_dumps(any_backend, tmp_path, rng):
    """Externally produced NPY dumps ingest exactly like RTD; extras ignored."""
    run = tmp_path / "npyrun"
    tdir = run / "epoch_001" / "traces" / "test"
    tdir.mkdir(parents=True)
    n = 15
    labels = rng.integers(0, 3, n).astype(np.int64)
    np.save(run / "labels_test.npy", labels)
    tensors = {}
    for idx, layer in [(0, "init_block"), (1, "output")]:
        t = rng.standard_normal((n, 4)).astype(np.float32)
        tensors[idx] = t
        np.save(tdir / f"{idx:03d}_{layer}_exit.npy", t)
    np.save(tdir / "logits.npy", rng.standard_normal((n, 10)).astype(np.float32))
    (tdir / "notes.txt").write_text("aux file, ignored")
    cfg = RunConfig(variant="basic", epochs=[1], splits=["test"])
    report = profile_run(cfg, run)
    assert [b[0] for b in report.boundary_axis] == [0, 1]
    for idx, t in tensors.items():
        assert report.cells[(1, idx, "test")].value == loo_brute_error(t, labels)


def test_profile_traces_missing_labels(tmp_path, rng):
    run, *_ = make_traces_run(tmp_path, rng, epochs=(1,), splits=("test",))
    (run / "labels_test.rtd").unlink()
    cfg = RunConfig(variant="basic", epochs=[1], splits=["test"])
    with pytest.raises(ValidationError, match="labels_test"):
        profile_run(cfg, run)


def test_profile_neither_bundle_nor_traces(tmp_path):
    (tmp_path / "r" / "epoch_001").mkdir(parents=True)
    cfg = RunConfig(variant="basic", epochs=[1], splits=["test"])
    with pytest.raises(ValidationError, match="epoch_001"):
        profile_run(cfg, tmp_path / "r")


# ---------------------------------------------------------------------------
# emit_report
# ---------------------------------------------------------------------------

def single_cell_report():
    est = ComplexityEstimate(
        value=0.125, n_points=16, subset_count=1, subset_size=16, per_subset=(0.125,), dropped_tail=0
    )
    return __import__("repcx.profiler", fromlist=["ProfileReport"]).ProfileReport(
        config=RunConfig(epochs=[1], splits=["test"]).to_dict(),
        boundary_axis=[(0, "conv1", "entry")],
        cells={(1, 0, "test"): est},
        end_to_end={(1, "test"): (0.25, 16)},
    )


def test_emit_csv_row_count(tmp_path):
    report = single_cell_report()
    emit_report(report, "csv", tmp_path / "r.csv")
    rows = list(csv.DictReader((tmp_path / "r.csv").open()))
    assert len(rows) == 2  # one boundary + END2END
    assert rows[0]["boundary_name"] == "conv1"
    assert rows[1]["boundary_name"] == "END2END"
    assert rows[1]["boundary_index"] == "1"


def test_csv_json_roundtrip_exact(any_backend, tmp_path, rng):
    run, _, _, _ = make_traces_run(tmp_path, rng, epochs=(1, 2), splits=("test",), n=17)
    cfg = RunConfig(variant="basic", epochs=[1, 2], splits=["test"], subset_size=5)
    report = profile_run(cfg, run)
    emit_report(report, "csv", tmp_path / "r.csv")
    emit_report(report, "json", tmp_path / "r.json")
    from_json = json.loads((tmp_path / "r.json").read_text())
    json_vals = {
        (c["epoch"], c["boundary_index"], c["split"]): c["estimate"]["value"]
        for c in from_json["cells"]
    }
    for row in csv.DictReader((tmp_path / "r.csv").open()):
        if row["boundary_name"] == "END2END":
            continue
        key = (int(row["epoch"]), int(row["boundary_index"]), row["split"])
        assert float(row["complexity"]) == json_vals[key]  # exact, 17 sig digits
        assert json_vals[key] == report.cells[key].value


def test_emit_plot_series_layout(tmp_path, rng):
    run, layers, _, _ = make_traces_run(tmp_path, rng, epochs=(1, 2), splits=("test",), n=10)
    cfg = RunConfig(variant="basic", epochs=[1, 2], splits=["test"])
    report = profile_run(cfg, run)
    emit_report(report, "plot-series", tmp_path / "p.json")
    payload = json.loads((tmp_path / "p.json").read_text())
    assert set(payload["series"]["test"].keys()) == {"1", "2"}
    series = payload["series"]["test"]["1"]
    assert [p[0] for p in series] == [b[0] for b in layers]  # boundary order


def test_emit_unknown_format(tmp_path):
    with pytest.raises(ParameterError):
        emit_report(single_cell_report(), "xml", tmp_path / "x")
