"""Training loop: reference hyperparameters, per-epoch bundle export."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from torch.utils.data import DataLoader, TensorDataset

from .bundles import write_lnw1, write_metrics
from .data import reduce_every_nth
from .model import DROPOUT_P, LeNet5, state_to_params


@dataclass
class TrainSpec:
    variant: str = "basic"           # basic | dropout
    dataset: str = "full"            # full | reduced (every 6th training image)
    seed: int = 42
    learning_rate: float = 0.001
    batch_size: int = 32
    optimizer: str = "adam"
    loss: str = "cross-entropy"
    epochs: int = 15
    dropout_p: float = DROPOUT_P

    def validate(self) -> None:
        if self.variant not in ("basic", "dropout"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.dataset not in ("full", "reduced"):
            raise ValueError(f"unknown dataset mode {self.dataset!r}")
        if self.optimizer != "adam":
            raise ValueError("only the adam optimizer is supported")
        if self.loss != "cross-entropy":
            raise ValueError("only cross-entropy loss is supported")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@torch.no_grad()
def eval_error(model: LeNet5, x: np.ndarray, y: np.ndarray, batch: int = 512) -> float:
    model.eval()
    wrong = 0
    for i in range(0, len(x), batch):
        logits = model(torch.from_numpy(x[i : i + batch]))
        wrong += int((logits.argmax(dim=1).numpy() != y[i : i + batch]).sum())
    return wrong / len(x)


def train_and_export(
    spec: TrainSpec,
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
    out_dir: str | Path,
    log=print,
) -> dict:
    """Train per spec; write epoch_NNN/ LNW1 bundles, metrics.json, manifest.

    Returns the metrics dict {epoch: {"train_err": ..., "test_err": ...}},
    where train_err is measured on the training set actually used.
    """
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if spec.dataset == "reduced":
        train_x, train_y = reduce_every_nth(train_x, train_y, 6, 0)

    torch.manual_seed(spec.seed)
    model = LeNet5(variant=spec.variant, p=spec.dropout_p)
    opt = torch.optim.Adam(model.parameters(), lr=spec.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    loader = DataLoader(
        TensorDataset(torch.from_numpy(train_x), torch.from_numpy(train_y)),
        batch_size=spec.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(spec.seed),
        num_workers=0,
    )

    manifest = {"spec": asdict(spec), "n_train": len(train_x), "n_test": len(test_x)}
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    metrics: dict = {}
    for epoch in range(1, spec.epochs + 1):
        t0 = time.perf_counter()
        model.train()
        for xb, yb in loader:
            opt.zero_grad()
            loss = loss_fn(model(xb), yb)
            loss.backward()
            opt.step()
        train_err = eval_error(model, train_x, train_y)
        test_err = eval_error(model, test_x, test_y)
        metrics[str(epoch)] = {"train_err": train_err, "test_err": test_err}
        write_lnw1(state_to_params(model), spec.variant, out / f"epoch_{epoch:03d}")
        write_metrics(metrics, out)
        log(
            f"epoch {epoch:2d}: train_err={train_err:.4f} test_err={test_err:.4f} "
            f"({time.perf_counter() - t0:.1f}s)"
        )
    if spec.epochs == 0:
        write_metrics(metrics, out)
    return metrics
