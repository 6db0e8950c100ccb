"""Writers for the profiler's wire formats: LNW1 bundles and NPY dumps.

Implemented against the documented formats (not against the profiler's
code) so this package stays decoupled from it.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import PARAM_SHAPES


def write_lnw1(params: dict, variant: str, bundle_dir: str | Path) -> None:
    """LNW1 bundle: manifest.json + weights.bin (f32 LE row-major payloads)."""
    bundle = Path(bundle_dir)
    bundle.mkdir(parents=True, exist_ok=True)
    manifest_params = []
    payloads = []
    offset = 0
    for name, shape in PARAM_SHAPES:
        arr = np.ascontiguousarray(params[name], dtype=np.float32)
        if tuple(arr.shape) != shape:
            raise ValueError(f"parameter {name} has shape {arr.shape}, expected {shape}")
        data = arr.astype("<f4").tobytes()
        manifest_params.append({"name": name, "shape": list(shape), "offset_bytes": offset})
        payloads.append(data)
        offset += len(data)
    manifest = {"format": "LNW1", "variant": variant, "params": manifest_params}
    (bundle / "manifest.json").write_text(json.dumps(manifest, indent=2))
    (bundle / "weights.bin").write_bytes(b"".join(payloads))


def read_lnw1(bundle_dir: str | Path) -> tuple[dict, str]:
    """-> ({param name: f32 array}, variant); minimal reader for re-export."""
    bundle = Path(bundle_dir)
    manifest = json.loads((bundle / "manifest.json").read_text())
    if manifest.get("format") != "LNW1":
        raise ValueError(f"{bundle} is not an LNW1 bundle")
    blob = (bundle / "weights.bin").read_bytes()
    params = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        start = int(entry["offset_bytes"])
        params[entry["name"]] = (
            np.frombuffer(blob[start : start + 4 * count], dtype="<f4")
            .reshape(shape)
            .astype(np.float32)
        )
    return params, manifest["variant"]


def save_npy(arr: np.ndarray, path: str | Path) -> None:
    """C-order little-endian NPY v1, the dump format the profiler ingests."""
    arr = np.ascontiguousarray(arr)
    if arr.dtype == np.float64:
        arr = arr.astype("<f8")
    elif arr.dtype == np.int64:
        arr = arr.astype("<i8")
    elif arr.dtype == np.uint8:
        pass
    else:
        arr = arr.astype("<f4")
    np.save(path, arr)


def write_metrics(metrics: dict, out_dir: str | Path) -> None:
    """metrics.json: {epoch -> {train_err, test_err}}."""
    Path(out_dir, "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
