"""Torch definitions of the two profiled network variants.

Layer names and order are the contract: the profiler's boundary files and
the exported weight bundles both key off them.
"""

from __future__ import annotations

import torch
import torch.nn as nn

BASIC_LAYERS = (
    "conv1", "tanh1", "pool1",
    "conv2", "tanh2", "pool2",
    "conv3", "tanh3",
    "linr1", "tanh4", "linr2",
)
DROPOUT_LAYERS = (
    "conv1", "drop1", "tanh1", "pool1",
    "conv2", "drop2", "tanh2", "pool2",
    "conv3", "drop3", "tanh3",
    "linr1", "drop4", "tanh4", "linr2",
)

DROPOUT_P = 0.2


class LeNet5(nn.Module):
    """Sequential 5-layer convolutional classifier, 1x32x32 in, 10 logits out.

    variant="dropout" adds 2-D dropout after each convolution and plain
    dropout after the first dense layer.
    """

    def __init__(self, variant: str = "basic", p: float = DROPOUT_P):
        super().__init__()
        if variant not in ("basic", "dropout"):
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.conv1 = nn.Conv2d(in_channels=1, out_channels=6, kernel_size=5, stride=1)
        self.tanh1 = nn.Tanh()
        self.pool1 = nn.AvgPool2d(kernel_size=2)
        self.conv2 = nn.Conv2d(in_channels=6, out_channels=16, kernel_size=5, stride=1)
        self.tanh2 = nn.Tanh()
        self.pool2 = nn.AvgPool2d(kernel_size=2)
        self.conv3 = nn.Conv2d(in_channels=16, out_channels=120, kernel_size=5, stride=1)
        self.tanh3 = nn.Tanh()
        self.linr1 = nn.Linear(in_features=120, out_features=84)
        self.tanh4 = nn.Tanh()
        self.linr2 = nn.Linear(in_features=84, out_features=10)
        if variant == "dropout":
            self.drop1 = nn.Dropout2d(p=p)
            self.drop2 = nn.Dropout2d(p=p)
            self.drop3 = nn.Dropout2d(p=p)
            self.drop4 = nn.Dropout(p=p)

    @property
    def layer_order(self) -> tuple[str, ...]:
        return BASIC_LAYERS if self.variant == "basic" else DROPOUT_LAYERS

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for name in self.layer_order:
            x = getattr(self, name)(x)
            if name == "tanh3":
                x = torch.flatten(x, 1)
        return x


# (name, shape) pairs in bundle order; mirrors the LNW1 wire format
PARAM_SHAPES = (
    ("conv1.w", (6, 1, 5, 5)),
    ("conv1.b", (6,)),
    ("conv2.w", (16, 6, 5, 5)),
    ("conv2.b", (16,)),
    ("conv3.w", (120, 16, 5, 5)),
    ("conv3.b", (120,)),
    ("linr1.w", (84, 120)),
    ("linr1.b", (84,)),
    ("linr2.w", (10, 84)),
    ("linr2.b", (10,)),
)


def state_to_params(model: LeNet5) -> dict:
    """Model state -> {bundle param name: float32 numpy array}."""
    sd = model.state_dict()
    out = {}
    for name, _ in PARAM_SHAPES:
        layer, kind = name.split(".")
        key = f"{layer}.{'weight' if kind == 'w' else 'bias'}"
        out[name] = sd[key].detach().cpu().numpy().astype("float32")
    return out


def params_to_model(params: dict, variant: str) -> LeNet5:
    """Inverse of state_to_params; loads bundle arrays into a fresh model."""
    model = LeNet5(variant=variant)
    sd = model.state_dict()
    for name, shape in PARAM_SHAPES:
        layer, kind = name.split(".")
        key = f"{layer}.{'weight' if kind == 'w' else 'bias'}"
        arr = params[name]
        if tuple(arr.shape) != shape:
            raise ValueError(f"parameter {name} has shape {arr.shape}, expected {shape}")
        sd[key] = torch.from_numpy(arr.copy())
    model.load_state_dict(sd)
    return model
