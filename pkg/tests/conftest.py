from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `import oracles`

from repcx.tensor_io import LENET_PARAM_SHAPES, LeNetWeights, save_weights


@pytest.fixture(params=["numba", "numpy"])
def any_backend(request, monkeypatch):
    """Run a test under both kernel backends."""
    monkeypatch.setenv("REPCX_BACKEND", request.param)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_weights(seed: int = 42, variant: str = "basic", scale: float = 0.1) -> LeNetWeights:
    g = np.random.default_rng(seed)
    params = {
        name: g.normal(0.0, scale, shape).astype(np.float32)
        for name, shape in LENET_PARAM_SHAPES
    }
    return LeNetWeights(params=params, variant=variant)


def zero_weights(variant: str = "basic") -> LeNetWeights:
    params = {
        name: np.zeros(shape, dtype=np.float32) for name, shape in LENET_PARAM_SHAPES
    }
    return LeNetWeights(params=params, variant=variant)


@pytest.fixture
def basic_weights():
    return make_weights(variant="basic")


@pytest.fixture
def dropout_weights():
    return make_weights(variant="dropout")


@pytest.fixture
def basic_bundle(tmp_path, basic_weights):
    bundle = tmp_path / "bundle_basic"
    save_weights(basic_weights, bundle)
    return bundle


@pytest.fixture
def dropout_bundle(tmp_path, dropout_weights):
    bundle = tmp_path / "bundle_dropout"
    save_weights(dropout_weights, bundle)
    return bundle


def synthetic_digits(n: int, seed: int = 7) -> tuple[np.ndarray, np.ndarray]:
    """Class-correlated fake digit images: (n, 28, 28) u8 plus labels."""
    g = np.random.default_rng(seed)
    labels = g.integers(0, 10, n).astype(np.uint8)
    images = g.integers(0, 60, (n, 28, 28)).astype(np.uint8)
    for i, lab in enumerate(labels):
        r, c = divmod(int(lab), 4)
        images[i, 4 + 5 * r : 9 + 5 * r, 4 + 5 * c : 9 + 5 * c] += 180
    return images, labels
