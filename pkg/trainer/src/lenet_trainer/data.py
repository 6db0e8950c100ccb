"""Dataset loading: MNIST IDX files or a synthetic stand-in.

Preprocessing is bit-aligned with the profiler's loader: u8 pixels scaled
to [0,1] by /255 and zero-padded 2 px per side to 32x32.  No mean/std
normalization.
"""

from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path

import numpy as np

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def _read_idx(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic == 0x803:
        n, rows, cols = struct.unpack_from(">III", raw, 4)
        return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows, cols)
    if magic == 0x801:
        (n,) = struct.unpack_from(">I", raw, 4)
        return np.frombuffer(raw, dtype=np.uint8, offset=8)[:n]
    raise ValueError(f"bad IDX magic 0x{magic:08x} in {path}")


def preprocess(images_u8: np.ndarray) -> np.ndarray:
    """(n, 28, 28) u8 -> (n, 1, 32, 32) float32 in [0,1], zero-padded."""
    n = len(images_u8)
    scaled = images_u8.astype(np.float32) / np.float32(255.0)
    out = np.zeros((n, 1, 32, 32), dtype=np.float32)
    out[:, 0, 2:30, 2:30] = scaled
    return out


def _find(data_dir: Path, stem: str) -> Path:
    for cand in (data_dir / stem, data_dir / (stem + ".gz")):
        if cand.is_file():
            return cand
    raise FileNotFoundError(f"{stem}[.gz] not found in {data_dir}")


def load_mnist_dir(data_dir: str | Path):
    """-> (train_x, train_y, test_x, test_y); x float32 (n,1,32,32), y int64."""
    data_dir = Path(data_dir)
    tr_x = preprocess(_read_idx(_find(data_dir, MNIST_FILES["train_images"])))
    tr_y = _read_idx(_find(data_dir, MNIST_FILES["train_labels"])).astype(np.int64)
    te_x = preprocess(_read_idx(_find(data_dir, MNIST_FILES["test_images"])))
    te_y = _read_idx(_find(data_dir, MNIST_FILES["test_labels"])).astype(np.int64)
    return tr_x, tr_y, te_x, te_y


def mnist_dir_from_env() -> Path | None:
    """REPCX_MNIST_DIR if it holds the four standard files, else None."""
    env = os.environ.get("REPCX_MNIST_DIR", "").strip()
    if not env:
        return None
    data_dir = Path(env)
    try:
        for stem in MNIST_FILES.values():
            _find(data_dir, stem)
    except FileNotFoundError:
        return None
    return data_dir


def synthetic_dataset(n_train: int, n_test: int, seed: int = 0):
    """Learnable fake digits: one bright 5x5 patch per class on noise."""
    g = np.random.default_rng(seed)

    def make(n, salt):
        gg = np.random.default_rng([seed, salt])
        labels = gg.integers(0, 10, n).astype(np.int64)
        images = gg.integers(0, 50, (n, 28, 28)).astype(np.uint8)
        for i, lab in enumerate(labels):
            r, c = divmod(int(lab), 4)
            images[i, 3 + 6 * r : 8 + 6 * r, 3 + 7 * c : 8 + 7 * c] += 190
        return preprocess(images), labels

    del g
    tr_x, tr_y = make(n_train, 1)
    te_x, te_y = make(n_test, 2)
    return tr_x, tr_y, te_x, te_y


def reduce_every_nth(x: np.ndarray, y: np.ndarray, stride: int = 6, offset: int = 0):
    """Sequential-order reduction: keep indices offset, offset+stride, ..."""
    return x[offset::stride], y[offset::stride]
