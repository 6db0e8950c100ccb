"""From-scratch forward pass of the 5-layer convolutional digit classifier.

Two variants: the basic 11-layer network (conv/tanh/avgpool stacks plus two
dense layers) and a 15-layer variant with four dropout layers.  The forward
pass records the tensor at every layer boundary; the exit of layer k and
the entry of layer k+1 are the same tensor, stored once, with the input
image as boundary 0.

All kernels accumulate in float64 with a fixed left-to-right reduction
order (channel, then kernel row, then kernel column; bias added last) and
store activations in float32, so numba and numpy backends produce identical
bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backend
from .errors import DimensionError, ParameterError, ValidationError
from .pointset import LabeledPointSet
from .tensor_io import LeNetWeights, save_tensor

DROPOUT_P = 0.2
IMAGE_SHAPE = (1, 32, 32)

# (layer name, kind); kinds drive both execution and boundary bookkeeping
_BASIC_LAYERS = (
    ("conv1", "conv"),
    ("tanh1", "tanh"),
    ("pool1", "pool"),
    ("conv2", "conv"),
    ("tanh2", "tanh"),
    ("pool2", "pool"),
    ("conv3", "conv"),
    ("tanh3", "tanh_flatten"),
    ("linr1", "linear"),
    ("tanh4", "tanh"),
    ("linr2", "linear"),
)
_DROPOUT_LAYERS = (
    ("conv1", "conv"),
    ("drop1", "drop2d"),
    ("tanh1", "tanh"),
    ("pool1", "pool"),
    ("conv2", "conv"),
    ("drop2", "drop2d"),
    ("tanh2", "tanh"),
    ("pool2", "pool"),
    ("conv3", "conv"),
    ("drop3", "drop2d"),
    ("tanh3", "tanh_flatten"),
    ("linr1", "linear"),
    ("drop4", "drop1d"),
    ("tanh4", "tanh"),
    ("linr2", "linear"),
)

MODES = ("eval", "train-dropout")


def layer_names(variant: str) -> tuple[str, ...]:
    if variant == "basic":
        return tuple(name for name, _ in _BASIC_LAYERS)
    if variant == "dropout":
        return tuple(name for name, _ in _DROPOUT_LAYERS)
    raise ParameterError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class BoundaryId:
    index: int
    layer_name: str
    side: str  # "entry" | "exit"

    @property
    def filename(self) -> str:
        return f"{self.index:03d}_{self.layer_name}_{self.side}.rtd"


def boundaries(variant: str) -> list[BoundaryId]:
    """Boundary 0 is the network input; boundary k is the exit of layer k."""
    names = layer_names(variant)
    ids = [BoundaryId(0, names[0], "entry")]
    ids += [BoundaryId(k + 1, name, "exit") for k, name in enumerate(names)]
    return ids


@dataclass
class ActivationTrace:
    variant: str
    mode: str
    dropout_seed: int | None
    boundaries: list[BoundaryId]
    tensors: list[np.ndarray]  # one per boundary; leading batch axis in batch traces


# ---------------------------------------------------------------------------
# Kernels (numba + numpy fallback)
# ---------------------------------------------------------------------------

if backend.NUMBA_AVAILABLE:
    from numba import njit, prange

    @njit(parallel=True, cache=True)
    def _conv_batch_numba(x, w, b, stride, out):  # pragma: no cover
        n_samples, _, _, _ = x.shape
        n_out, n_in, k, _ = w.shape
        ho = out.shape[2]
        wo = out.shape[3]
        for n in prange(n_samples):
            for o in range(n_out):
                for y in range(ho):
                    for xx in range(wo):
                        s = 0.0
                        for c in range(n_in):
                            for i in range(k):
                                for j in range(k):
                                    s += x[n, c, y * stride + i, xx * stride + j] * w[o, c, i, j]
                        out[n, o, y, xx] = np.float32(s + b[o])

    @njit(parallel=True, cache=True)
    def _linear_batch_numba(v, w, b, out):  # pragma: no cover
        n_samples, d = v.shape
        n_out = w.shape[0]
        for n in prange(n_samples):
            for o in range(n_out):
                s = 0.0
                for k in range(d):
                    s += w[o, k] * v[n, k]
                out[n, o] = np.float32(s + b[o])


def _conv_batch_numpy(x, w, b, stride, out):
    n_samples, n_in, _, _ = x.shape
    n_out = w.shape[0]
    k = w.shape[2]
    ho, wo = out.shape[2], out.shape[3]
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (n, c, ho, wo, k, k)
    patches = win.transpose(0, 2, 3, 1, 4, 5).reshape(n_samples, ho * wo, n_in * k * k)
    wf = w.reshape(n_out, n_in * k * k)
    # chunk so the (chunk, P, O, R) product tensor stays bounded
    per_sample = patches.shape[1] * n_out * patches.shape[2] * 8
    chunk = max(1, (64 << 20) // max(per_sample, 1))
    for s0 in range(0, n_samples, chunk):
        s1 = min(s0 + chunk, n_samples)
        prod = patches[s0:s1, :, None, :] * wf[None, None, :, :]
        acc = np.cumsum(prod, axis=-1)[..., -1]  # sequential (c, i, j) order
        res = (acc + b[None, None, :]).astype(np.float32)
        out[s0:s1] = res.transpose(0, 2, 1).reshape(s1 - s0, n_out, ho, wo)


def _linear_batch_numpy(v, w, b, out):
    n_samples, d = v.shape
    if d == 0:
        acc = np.zeros((n_samples, w.shape[0]))
    else:
        prod = v[:, None, :] * w[None, :, :]
        acc = np.cumsum(prod, axis=-1)[:, :, -1]
    out[:] = (acc + b[None, :]).astype(np.float32)


def _conv_batch(x64: np.ndarray, w64: np.ndarray, b64: np.ndarray, stride: int) -> np.ndarray:
    n, _, h, wdt = x64.shape
    o = w64.shape[0]
    k = w64.shape[2]
    ho = (h - k) // stride + 1
    wo = (wdt - k) // stride + 1
    out = np.empty((n, o, ho, wo), dtype=np.float32)
    if backend.use_numba():
        _conv_batch_numba(x64, w64, b64, stride, out)
    else:
        _conv_batch_numpy(x64, w64, b64, stride, out)
    return out


def _linear_batch(v64: np.ndarray, w64: np.ndarray, b64: np.ndarray) -> np.ndarray:
    out = np.empty((v64.shape[0], w64.shape[0]), dtype=np.float32)
    if backend.use_numba():
        _linear_batch_numba(v64, w64, b64, out)
    else:
        _linear_batch_numpy(v64, w64, b64, out)
    return out


def _avgpool_batch(x64: np.ndarray) -> np.ndarray:
    s = ((x64[..., 0::2, 0::2] + x64[..., 0::2, 1::2]) + x64[..., 1::2, 0::2]) + x64[
        ..., 1::2, 1::2
    ]
    return (s / 4.0).astype(np.float32)


# ---------------------------------------------------------------------------
# Public single-sample operations
# ---------------------------------------------------------------------------

def conv2d_valid(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, stride: int = 1) -> np.ndarray:
    """Valid cross-correlation: out[o,y,x] = bias[o] + sum x[c,ys+i,xs+j]*k[o,c,i,j]."""
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    bias = np.asarray(bias)
    if x.ndim != 3 or kernel.ndim != 4 or bias.ndim != 1:
        raise DimensionError("conv2d_valid expects x(C,H,W), kernel(O,C,k,k), bias(O)")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    o, c, k, k2 = kernel.shape
    if k != k2:
        raise DimensionError("kernel must be square")
    if x.shape[0] != c:
        raise DimensionError(f"input channels {x.shape[0]} != kernel channels {c}")
    if bias.shape[0] != o:
        raise DimensionError(f"bias length {bias.shape[0]} != output channels {o}")
    if x.shape[1] < k or x.shape[2] < k:
        raise DimensionError(f"input {x.shape[1]}x{x.shape[2]} smaller than kernel {k}")
    return _conv_batch(
        np.ascontiguousarray(x[None], dtype=np.float64),
        np.ascontiguousarray(kernel, dtype=np.float64),
        np.ascontiguousarray(bias, dtype=np.float64),
        stride,
    )[0]


def tanh_map(t: np.ndarray) -> np.ndarray:
    """Elementwise tanh; float64 stays float64, everything else stores float32."""
    t = np.asarray(t)
    out = np.tanh(t.astype(np.float64))
    return out if t.dtype == np.float64 else out.astype(np.float32)


def avgpool2(t: np.ndarray) -> np.ndarray:
    """Non-overlapping 2x2 mean pooling with stride 2."""
    t = np.asarray(t)
    if t.ndim != 3:
        raise DimensionError(f"avgpool2 expects (C,H,W), got shape {t.shape}")
    if t.shape[1] % 2 or t.shape[2] % 2:
        raise DimensionError(f"avgpool2 needs even H and W, got {t.shape[1]}x{t.shape[2]}")
    return _avgpool_batch(t[None].astype(np.float64))[0]


def linear(v: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense layer: out[o] = b[o] + sum_d w[o,d] * v[d]."""
    v = np.asarray(v)
    w = np.asarray(w)
    b = np.asarray(b)
    if v.ndim != 1 or w.ndim != 2 or b.ndim != 1:
        raise DimensionError("linear expects v(D), w(O,D), b(O)")
    if w.shape[1] != v.shape[0] or w.shape[0] != b.shape[0]:
        raise DimensionError(
            f"incompatible shapes v{v.shape}, w{w.shape}, b{b.shape}"
        )
    return _linear_batch(
        np.ascontiguousarray(v[None], dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
    )[0]


def dropout_apply(
    t: np.ndarray, p: float, rng: np.random.Generator, channelwise: bool
) -> np.ndarray:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    Channelwise mode (2-D dropout) zeroes whole leading-axis channels;
    elementwise mode zeroes individual entries.  Mask uniforms come from the
    supplied PCG64 generator (one draw per channel or element, in order).
    """
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0,1), got {p}")
    t = np.asarray(t)
    if channelwise:
        keep = rng.random(t.shape[0]) >= p
        mask = keep.reshape((-1,) + (1,) * (t.ndim - 1))
    else:
        mask = rng.random(t.shape) >= p
    scaled = t.astype(np.float64) * (mask / (1.0 - p))
    return scaled.astype(np.float32)


def classify(logits: np.ndarray) -> int:
    """Argmax class (softmax is monotone); ties go to the lowest class id."""
    logits = np.asarray(logits)
    if logits.ndim != 1 or logits.shape[0] != 10:
        raise DimensionError(f"logits must be a 10-vector, got shape {logits.shape}")
    if not np.isfinite(logits).all():
        raise ValidationError("logits contain non-finite values")
    return int(np.argmax(logits))


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

def _mask_sizes(variant: str) -> tuple[tuple[str, int], ...]:
    # channel counts for drop1..drop3 (2-D dropout) and width for drop4
    if variant != "dropout":
        return ()
    return (("drop1", 6), ("drop2", 16), ("drop3", 120), ("drop4", 84))


def _dropout_masks(
    dropout_seed: int, sample_indices: np.ndarray, variant: str
) -> dict[str, np.ndarray]:
    """Per-sample survival masks; stream = PCG64([dropout_seed, sample_index]).

    Each sample's uniforms are drawn layer by layer in forward order, so the
    trace is independent of batching and scheduling.
    """
    sizes = _mask_sizes(variant)
    masks = {name: np.empty((len(sample_indices), width), dtype=bool) for name, width in sizes}
    for r, si in enumerate(sample_indices):
        rng = np.random.default_rng([int(dropout_seed), int(si)])
        for name, width in sizes:
            masks[name][r] = rng.random(width) >= DROPOUT_P
    return masks


def _apply_mask_batch(x: np.ndarray, keep: np.ndarray) -> np.ndarray:
    mask = keep.reshape(keep.shape + (1,) * (x.ndim - keep.ndim))
    return (x.astype(np.float64) * (mask / (1.0 - DROPOUT_P))).astype(np.float32)


def _run_layers(
    w: LeNetWeights,
    images: np.ndarray,
    mode: str,
    masks: dict[str, np.ndarray] | None,
) -> list[np.ndarray]:
    """Apply the variant's layer sequence; returns all boundary tensors."""
    layers = _BASIC_LAYERS if w.variant == "basic" else _DROPOUT_LAYERS
    cur = images.astype(np.float32)
    recorded = [cur]
    for name, kind in layers:
        if kind == "conv":
            cur = _conv_batch(
                cur.astype(np.float64),
                w[f"{name}.w"].astype(np.float64),
                w[f"{name}.b"].astype(np.float64),
                1,
            )
        elif kind == "tanh":
            cur = np.tanh(cur.astype(np.float64)).astype(np.float32)
        elif kind == "tanh_flatten":
            cur = np.tanh(cur.astype(np.float64)).astype(np.float32)
            cur = cur.reshape(cur.shape[0], -1)
        elif kind == "pool":
            cur = _avgpool_batch(cur.astype(np.float64))
        elif kind == "linear":
            cur = _linear_batch(
                cur.astype(np.float64),
                w[f"{name}.w"].astype(np.float64),
                w[f"{name}.b"].astype(np.float64),
            )
        elif kind in ("drop2d", "drop1d"):
            if mode == "train-dropout":
                cur = _apply_mask_batch(cur, masks[name])
            # eval mode: identity (entry and exit share the value)
        else:  # pragma: no cover
            raise AssertionError(kind)
        recorded.append(cur)
    return recorded


def forward_batch(
    w: LeNetWeights,
    images: np.ndarray,
    mode: str = "eval",
    dropout_seed: int | None = None,
    sample_indices: np.ndarray | None = None,
    capture: bool = True,
    chunk: int = 256,
) -> tuple[ActivationTrace | None, np.ndarray]:
    """Forward pass over a batch of 1x32x32 images.

    Returns (trace, logits); trace is None when capture is disabled.  In
    train-dropout mode, sample_indices (default 0..n-1) key each sample's
    mask stream so results do not depend on chunking.
    """
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[1:] != IMAGE_SHAPE:
        raise DimensionError(
            f"images must be (n, 1, 32, 32), got shape {images.shape}"
        )
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "train-dropout":
        if w.variant != "dropout":
            raise ParameterError("train-dropout mode requires the dropout variant")
        if dropout_seed is None:
            raise ParameterError("train-dropout mode requires a dropout seed")
    n = images.shape[0]
    if sample_indices is None:
        sample_indices = np.arange(n, dtype=np.int64)
    bids = boundaries(w.variant)
    out_tensors: list[np.ndarray] | None = None
    logits = np.empty((n, 10), dtype=np.float32)
    for s0 in range(0, n, chunk):
        s1 = min(s0 + chunk, n)
        masks = None
        if mode == "train-dropout":
            masks = _dropout_masks(dropout_seed, sample_indices[s0:s1], w.variant)
        recorded = _run_layers(w, images[s0:s1], mode, masks)
        logits[s0:s1] = recorded[-1]
        if capture:
            if out_tensors is None:
                out_tensors = [
                    np.empty((n,) + t.shape[1:], dtype=np.float32) for t in recorded
                ]
            for t_full, t_chunk in zip(out_tensors, recorded):
                t_full[s0:s1] = t_chunk
    trace = None
    if capture:
        trace = ActivationTrace(
            variant=w.variant,
            mode=mode,
            dropout_seed=dropout_seed,
            boundaries=bids,
            tensors=out_tensors if out_tensors is not None else [],
        )
    return trace, logits


def forward(
    w: LeNetWeights,
    image: np.ndarray,
    mode: str = "eval",
    dropout_seed: int | None = None,
    sample_index: int = 0,
) -> tuple[ActivationTrace, np.ndarray]:
    """Single-sample forward pass; boundary tensors carry no batch axis."""
    image = np.asarray(image, dtype=np.float32)
    if image.shape != IMAGE_SHAPE:
        raise DimensionError(f"image must be 1x32x32, got shape {image.shape}")
    trace, logits = forward_batch(
        w,
        image[None],
        mode=mode,
        dropout_seed=dropout_seed,
        sample_indices=np.array([sample_index], dtype=np.int64),
    )
    trace.tensors = [t[0] for t in trace.tensors]
    return trace, logits[0]


def end_to_end_error(w: LeNetWeights, data: LabeledPointSet) -> float:
    """Eval-mode classification error over a point set of flattened images."""
    d = int(np.prod(IMAGE_SHAPE))
    if data.dim != d:
        raise DimensionError(f"expected flattened {IMAGE_SHAPE} images (d={d}), got d={data.dim}")
    if data.n == 0:
        raise ValidationError("cannot compute an error rate over an empty set")
    images = data.points.reshape((-1,) + IMAGE_SHAPE)
    _, logits = forward_batch(w, images, mode="eval", capture=False)
    preds = np.argmax(logits, axis=1)
    return float(int((preds != data.labels).sum()) / data.n)


# ---------------------------------------------------------------------------
# Trace files
# ---------------------------------------------------------------------------

def write_trace(trace: ActivationTrace, out_dir: str | Path, labels: np.ndarray | None = None) -> list[Path]:
    """One RTD file per boundary (batch tensors), plus labels.rtd if given."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for bid, tensor in zip(trace.boundaries, trace.tensors):
        path = out / bid.filename
        save_tensor(np.ascontiguousarray(tensor, dtype=np.float32), path)
        written.append(path)
    if labels is not None:
        save_tensor(np.ascontiguousarray(labels, dtype=np.int64), out / "labels.rtd")
        written.append(out / "labels.rtd")
    return written


def parse_trace_filename(name: str) -> tuple[int, str, str]:
    """`NNN_layer_side.{rtd,npy}` -> (index, layer, side).

    Layer names may contain underscores (residual-net dumps do).
    """
    stem = name
    for suffix in (".rtd", ".npy"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
            break
    head, _, tail = stem.partition("_")
    layer, _, side = tail.rpartition("_")
    if not head.isdigit() or side not in ("entry", "exit") or not layer:
        raise ValidationError(f"not a trace filename: {name!r}")
    return int(head), layer, side


__all__ = [
    "DROPOUT_P",
    "IMAGE_SHAPE",
    "BoundaryId",
    "ActivationTrace",
    "layer_names",
    "boundaries",
    "conv2d_valid",
    "tanh_map",
    "avgpool2",
    "linear",
    "dropout_apply",
    "classify",
    "forward",
    "forward_batch",
    "end_to_end_error",
    "write_trace",
    "parse_trace_filename",
]
