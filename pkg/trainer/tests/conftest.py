from __future__ import annotations

import shutil
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def read_rtd(path):
    """Minimal reader for the profiler's documented RTD dump format."""
    raw = Path(path).read_bytes()
    assert raw[:4] == b"RTD1", f"not an RTD file: {path}"
    (ndim,) = struct.unpack_from("<I", raw, 4)
    dims = struct.unpack_from(f"<{ndim}Q", raw, 8)
    (code,) = struct.unpack_from("B", raw, 8 + 8 * ndim)
    dtype = {0: "<f4", 1: "<f8", 2: "|u1", 3: "<i8"}[code]
    return np.frombuffer(raw, dtype=dtype, offset=9 + 8 * ndim).reshape(dims)


def repcx_cli(*args):
    """Invoke the profiler CLI (the external interface this package feeds)."""
    exe = shutil.which("repcx")
    cmd = [exe] if exe else [sys.executable, "-m", "repcx.cli"]
    return subprocess.run([*cmd, *map(str, args)], capture_output=True, text=True)


@pytest.fixture
def synth_images():
    from lenet_trainer.data import synthetic_dataset

    tr_x, tr_y, te_x, te_y = synthetic_dataset(120, 40, seed=3)
    return tr_x, tr_y, te_x, te_y
