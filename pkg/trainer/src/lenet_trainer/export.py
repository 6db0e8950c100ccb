"""Activation export via forward hooks.

Boundary files follow the profiler's naming (`NNN_<layer>_<side>` with the
network input as boundary 0) so dumps are directly ingestible.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .bundles import read_lnw1, save_npy
from .model import LeNet5, params_to_model

# normalization used by the model zoo the pretrained CIFAR weights come from
CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_STD = (0.2023, 0.1994, 0.2010)


def capture_activations(
    model: torch.nn.Module, named_modules: list[tuple[str, torch.nn.Module]], x: torch.Tensor
) -> list[np.ndarray]:
    """Run model(x) in eval mode, returning each listed module's output."""
    captured: dict[int, np.ndarray] = {}
    handles = []
    for slot, (_, module) in enumerate(named_modules):
        def hook(mod, inputs, output, slot=slot):
            captured[slot] = output.detach().cpu().numpy().astype(np.float32)

        handles.append(module.register_forward_hook(hook))
    try:
        model.eval()
        with torch.no_grad():
            model(x)
    finally:
        for h in handles:
            h.remove()
    return [captured[i] for i in range(len(named_modules))]


def export_reference_activations(
    bundle_dir: str | Path,
    images: np.ndarray,
    out_dir: str | Path,
    labels: np.ndarray | None = None,
) -> list[str]:
    """Per-boundary NPY dumps plus logits for a bundle's forward pass.

    Boundary 0 is the input; boundary k the exit of layer k; the flatten
    after the third tanh is folded into that boundary's shape, matching the
    profiler's trace layout.
    """
    params, variant = read_lnw1(bundle_dir)
    model = params_to_model(params, variant)
    x = torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32))
    names = list(model.layer_order)
    outputs = capture_activations(model, [(n, getattr(model, n)) for n in names], x)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def dump(idx, layer, side, arr):
        name = f"{idx:03d}_{layer}_{side}.npy"
        save_npy(arr, out / name)
        written.append(name)

    dump(0, names[0], "entry", images.astype(np.float32))
    for k, (layer, arr) in enumerate(zip(names, outputs), start=1):
        if layer == "tanh3":
            arr = arr.reshape(len(arr), -1)
        dump(k, layer, "exit", arr)
    save_npy(outputs[-1], out / "logits.npy")
    written.append("logits.npy")
    if labels is not None:
        save_npy(np.ascontiguousarray(labels, dtype=np.int64), out / "labels.npy")
        written.append("labels.npy")
    return written


# ---------------------------------------------------------------------------
# Pretrained residual networks on CIFAR-100
# ---------------------------------------------------------------------------

def resnet_boundary_modules(model: torch.nn.Module, fine: bool = False):
    """Capture points: init block, every residual unit (optionally its inner
    conv blocks), the final pool, and the classifier output."""
    picks: list[tuple[str, torch.nn.Module]] = []
    features = model.features
    picks.append(("init_block", features.init_block))
    for stage_name, stage in features.named_children():
        if not stage_name.startswith("stage"):
            continue
        for unit_name, unit in stage.named_children():
            if fine:
                picks.append((f"{stage_name}_{unit_name}_conv1", unit.body.conv1))
                picks.append((f"{stage_name}_{unit_name}_conv2", unit.body.conv2))
            picks.append((f"{stage_name}_{unit_name}", unit))
    picks.append(("final_pool", features.final_pool))
    picks.append(("output", model.output))
    return picks


def load_cifar100(data_dir: str | Path, split: str) -> tuple[np.ndarray, np.ndarray]:
    """CIFAR-100 from a local torchvision root, zoo-normalized, NCHW f32."""
    from torchvision.datasets import CIFAR100

    ds = CIFAR100(root=str(data_dir), train=(split == "train"), download=False)
    x = ds.data.astype(np.float32) / 255.0  # (n, 32, 32, 3)
    x = (x - np.array(CIFAR_MEAN, dtype=np.float32)) / np.array(CIFAR_STD, dtype=np.float32)
    x = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
    y = np.asarray(ds.targets, dtype=np.int64)
    return x, y


def export_resnet_activations(
    model_name: str,
    split: str,
    out_dir: str | Path,
    data_dir: str | Path,
    max_samples: int | None = None,
    fine: bool = False,
    batch: int = 256,
) -> dict:
    """Dump per-unit representations of a pretrained zoo model.

    Requires the `pytorchcv` model zoo and a local CIFAR-100 copy; weights
    are fetched by the zoo on first use.  One NPY per boundary plus labels
    and a boundary manifest.
    """
    try:
        from pytorchcv.model_provider import get_model
    except ImportError as exc:  # pragma: no cover - depends on extras
        raise RuntimeError(
            "pytorchcv is required for resnet export (pip install pytorchcv)"
        ) from exc
    model = get_model(model_name, pretrained=True)
    x, y = load_cifar100(data_dir, split)
    if max_samples is not None:
        x, y = x[:max_samples], y[:max_samples]

    picks = resnet_boundary_modules(model, fine=fine)
    chunks: list[list[np.ndarray]] = [[] for _ in picks]
    for i in range(0, len(x), batch):
        outs = capture_activations(model, picks, torch.from_numpy(x[i : i + batch]))
        for slot, arr in enumerate(outs):
            chunks[slot].append(arr)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    boundary_list = []
    for idx, ((name, _), parts) in enumerate(zip(picks, chunks)):
        arr = np.concatenate(parts) if len(parts) > 1 else parts[0]
        save_npy(arr, out / f"{idx:03d}_{name}_exit.npy")
        boundary_list.append({"index": idx, "name": name, "shape": list(arr.shape[1:])})
    save_npy(y, out / "labels.npy")
    manifest = {
        "model": model_name,
        "split": split,
        "n_samples": int(len(x)),
        "boundaries": boundary_list,
    }
    (out / "boundaries.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
