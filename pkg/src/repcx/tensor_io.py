"""Binary tensor, dataset, and weight-bundle I/O.

Formats
-------
RTD (canonical dump format, read/write):
    magic b"RTD1" | u32 LE ndim | ndim x u64 LE extents | u8 dtype code
    (0=f32, 1=f64, 2=u8, 3=i64) | little-endian row-major payload.
    No padding anywhere.

NPY (read-only interop): version 1.0, dtypes <f4, <f8, <i8, |u1,
    C-order only.

IDX (MNIST distribution format): big-endian, magic 0x00000803 for image
    stacks and 0x00000801 for label vectors; transparent gzip accepted.

LNW1 weight bundle: a directory holding manifest.json plus weights.bin
    with concatenated f32 LE row-major parameter payloads.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, UnsupportedDtypeError, ValidationError
from .pointset import LabeledPointSet, PointSetMeta

RTD_MAGIC = b"RTD1"

_CODE_TO_DTYPE = {0: "<f4", 1: "<f8", 2: "|u1", 3: "<i8"}
_KIND_TO_CODE = {
    np.dtype(np.float32): 0,
    np.dtype(np.float64): 1,
    np.dtype(np.uint8): 2,
    np.dtype(np.int64): 3,
}

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


def _check_finite(arr: np.ndarray, source: str) -> None:
    if arr.dtype.kind == "f" and arr.size and not np.isfinite(arr).all():
        raise ValidationError(f"non-finite values in {source}")


# ---------------------------------------------------------------------------
# RTD
# ---------------------------------------------------------------------------

def save_tensor(t: np.ndarray, path: str | Path) -> None:
    """Write a tensor as an RTD file; load_tensor round-trips it bit-exactly."""
    arr = np.ascontiguousarray(t).reshape(np.shape(t))  # keep 0-d shapes intact
    if arr.dtype not in _KIND_TO_CODE:
        raise UnsupportedDtypeError(f"dtype {arr.dtype} is not storable (f32/f64/u8/i64 only)")
    _check_finite(arr, "tensor being saved")
    code = _KIND_TO_CODE[arr.dtype]
    with open(path, "wb") as fh:
        fh.write(RTD_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(struct.pack("B", code))
        fh.write(arr.astype(_CODE_TO_DTYPE[code], copy=False).tobytes())


def _load_rtd(raw: bytes, source: str) -> np.ndarray:
    off = len(RTD_MAGIC)
    try:
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        dims = struct.unpack_from(f"<{ndim}Q", raw, off)
        off += 8 * ndim
        (code,) = struct.unpack_from("B", raw, off)
        off += 1
    except struct.error as exc:
        raise FormatError(f"truncated RTD header in {source}") from exc
    if code not in _CODE_TO_DTYPE:
        raise UnsupportedDtypeError(f"unknown RTD dtype code {code} in {source}")
    dtype = np.dtype(_CODE_TO_DTYPE[code])
    count = 1
    for d in dims:
        count *= d
    payload = raw[off:]
    if len(payload) != count * dtype.itemsize:
        raise FormatError(
            f"RTD payload of {len(payload)} bytes does not match "
            f"dims {list(dims)} x {dtype.itemsize}B in {source}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
    arr = arr.astype(dtype.newbyteorder("="))  # native order, writable copy
    _check_finite(arr, source)
    return arr


# ---------------------------------------------------------------------------
# NPY (read-only)
# ---------------------------------------------------------------------------

_NPY_MAGIC = b"\x93NUMPY"
_NPY_DTYPES = {"<f4", "<f8", "<i8", "|u1"}


def _load_npy(raw: bytes, source: str) -> np.ndarray:
    if len(raw) < 10:
        raise FormatError(f"truncated NPY header in {source}")
    major, minor = raw[6], raw[7]
    if major != 1:
        raise FormatError(f"NPY version {major}.{minor} not supported (need 1.x) in {source}")
    (hlen,) = struct.unpack_from("<H", raw, 8)
    header_end = 10 + hlen
    if len(raw) < header_end:
        raise FormatError(f"truncated NPY header in {source}")
    try:
        import ast

        header = ast.literal_eval(raw[10:header_end].decode("latin1"))
        descr = header["descr"]
        fortran = header["fortran_order"]
        shape = tuple(int(s) for s in header["shape"])
    except Exception as exc:
        raise FormatError(f"malformed NPY header in {source}") from exc
    if fortran:
        raise FormatError(f"Fortran-order NPY arrays are not supported ({source})")
    if descr not in _NPY_DTYPES:
        raise UnsupportedDtypeError(f"NPY dtype {descr!r} not supported in {source}")
    dtype = np.dtype(descr)
    count = 1
    for d in shape:
        count *= d
    payload = raw[header_end:]
    if len(payload) != count * dtype.itemsize:
        raise FormatError(f"NPY payload size mismatch in {source}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    arr = arr.astype(dtype.newbyteorder("="))
    _check_finite(arr, source)
    return arr


# ---------------------------------------------------------------------------
# Generic loading
# ---------------------------------------------------------------------------

def load_tensor(path: str | Path) -> np.ndarray:
    """Load an RTD or NPY tensor file, sniffing the format by magic bytes."""
    raw = Path(path).read_bytes()
    if len(raw) == 0:
        raise FormatError(f"empty tensor file: {path}")
    if raw[:4] == RTD_MAGIC:
        return _load_rtd(raw, str(path))
    if raw[:6] == _NPY_MAGIC:
        return _load_npy(raw, str(path))
    raise FormatError(f"unrecognized tensor file magic in {path}")


def load_labels(path: str | Path) -> np.ndarray:
    """Load a 1-D label vector (i64 or u8 file), range-checked to be >= 0."""
    arr = load_tensor(path)
    if arr.ndim != 1:
        raise ValidationError(f"labels file {path} must be 1-D, got shape {arr.shape}")
    if arr.dtype.kind == "f":
        raise ValidationError(f"labels file {path} must be integer-typed")
    labels = arr.astype(np.int64)
    if labels.size and labels.min() < 0:
        raise ValidationError(f"negative label in {path}")
    return labels


def flatten(t: np.ndarray) -> np.ndarray:
    """Row-major linearization of one sample's activation tensor."""
    return np.ascontiguousarray(t).reshape(-1)


# ---------------------------------------------------------------------------
# IDX / MNIST
# ---------------------------------------------------------------------------

def _read_maybe_gzip(path: str | Path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def read_idx(path: str | Path) -> np.ndarray:
    """Raw IDX read: u8 image stack (n, rows, cols) or u8 label vector (n,)."""
    raw = _read_maybe_gzip(path)
    if len(raw) < 8:
        raise FormatError(f"truncated IDX header in {path}")
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic == IDX_MAGIC_IMAGES:
        if len(raw) < 16:
            raise FormatError(f"truncated IDX image header in {path}")
        n, rows, cols = struct.unpack_from(">III", raw, 4)
        payload = raw[16:]
        if len(payload) != n * rows * cols:
            raise FormatError(f"IDX image payload size mismatch in {path}")
        return np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols).copy()
    if magic == IDX_MAGIC_LABELS:
        (n,) = struct.unpack_from(">I", raw, 4)
        payload = raw[8:]
        if len(payload) != n:
            raise FormatError(f"IDX label payload size mismatch in {path}")
        return np.frombuffer(payload, dtype=np.uint8).copy()
    raise FormatError(f"bad IDX magic 0x{magic:08x} in {path}")


def write_idx(path: str | Path, arr: np.ndarray) -> None:
    """Raw IDX write; inverse of read_idx for u8 image stacks and labels."""
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    with open(path, "wb") as fh:
        if arr.ndim == 3:
            fh.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, *arr.shape))
        elif arr.ndim == 1:
            fh.write(struct.pack(">II", IDX_MAGIC_LABELS, arr.shape[0]))
        else:
            raise ValidationError(f"IDX arrays must be rank 1 or 3, got {arr.ndim}")
        fh.write(arr.tobytes())


def preprocess_images(images_u8: np.ndarray) -> np.ndarray:
    """28x28 u8 -> float32 in [0,1], zero-padded 2px per side to 32x32."""
    n, rows, cols = images_u8.shape
    scaled = images_u8.astype(np.float32) / np.float32(255.0)
    padded = np.zeros((n, rows + 4, cols + 4), dtype=np.float32)
    padded[:, 2 : 2 + rows, 2 : 2 + cols] = scaled
    return padded


def load_mnist_idx(images_path: str | Path, labels_path: str | Path) -> LabeledPointSet:
    """MNIST IDX pair -> point set of flattened 1x32x32 images (d = 1024)."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise FormatError(f"{images_path} is not an IDX image stack")
    if labels.ndim != 1:
        raise FormatError(f"{labels_path} is not an IDX label vector")
    if len(images) != len(labels):
        raise ValidationError(
            f"image count {len(images)} does not match label count {len(labels)}"
        )
    padded = preprocess_images(images)
    points = padded.reshape(len(images), -1)
    return LabeledPointSet(points, labels.astype(np.int64))


def load_dataset(images_path: str | Path, labels_path: str | Path) -> LabeledPointSet:
    """Image dataset from an IDX pair or from RTD/NPY tensor files.

    Tensor image files may be (n, 1, 32, 32), (n, 32, 32) or (n, d); rows are
    flattened either way.
    """
    head = _read_maybe_gzip(images_path)[:4]
    if len(head) == 4 and struct.unpack(">I", head)[0] == IDX_MAGIC_IMAGES:
        return load_mnist_idx(images_path, labels_path)
    images = load_tensor(images_path)
    if images.ndim < 2:
        raise ValidationError(f"image tensor {images_path} must have a sample axis")
    points = np.ascontiguousarray(images, dtype=np.float32).reshape(len(images), -1)
    return LabeledPointSet(points, load_labels(labels_path))


# ---------------------------------------------------------------------------
# LNW1 weight bundles
# ---------------------------------------------------------------------------

LENET_PARAM_SHAPES: tuple[tuple[str, tuple[int, ...]], ...] = (
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

VARIANTS = ("basic", "dropout")


@dataclass
class LeNetWeights:
    """The ten parameter tensors of the 5-layer convolutional classifier."""

    params: dict[str, np.ndarray]
    variant: str = "basic"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        for name, shape in LENET_PARAM_SHAPES:
            if name not in self.params:
                raise ValidationError(f"missing parameter {name}")
            arr = np.ascontiguousarray(self.params[name], dtype=np.float32)
            if arr.shape != shape:
                raise ValidationError(
                    f"parameter {name} has shape {arr.shape}, expected {shape}"
                )
            _check_finite(arr, f"parameter {name}")
            self.params[name] = arr
        extra = set(self.params) - {n for n, _ in LENET_PARAM_SHAPES}
        if extra:
            raise ValidationError(f"unexpected parameters: {sorted(extra)}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]


def save_weights(w: LeNetWeights, bundle_dir: str | Path) -> None:
    """Write an LNW1 bundle (manifest.json + weights.bin)."""
    bundle = Path(bundle_dir)
    bundle.mkdir(parents=True, exist_ok=True)
    manifest_params = []
    offset = 0
    payloads = []
    for name, shape in LENET_PARAM_SHAPES:
        data = w.params[name].astype("<f4").tobytes()
        manifest_params.append(
            {"name": name, "shape": list(shape), "offset_bytes": offset}
        )
        payloads.append(data)
        offset += len(data)
    manifest = {"format": "LNW1", "variant": w.variant, "params": manifest_params}
    (bundle / "manifest.json").write_text(json.dumps(manifest, indent=2))
    (bundle / "weights.bin").write_bytes(b"".join(payloads))


def load_weights(bundle_dir: str | Path) -> LeNetWeights:
    """Load and validate an LNW1 bundle; errors name the offending parameter."""
    bundle = Path(bundle_dir)
    manifest_path = bundle / "manifest.json"
    weights_path = bundle / "weights.bin"
    if not manifest_path.is_file():
        raise FormatError(f"missing manifest.json in {bundle}")
    if not weights_path.is_file():
        raise FormatError(f"missing weights.bin in {bundle}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed manifest.json in {bundle}") from exc
    if manifest.get("format") != "LNW1":
        raise FormatError(f"manifest format {manifest.get('format')!r} is not LNW1")
    variant = manifest.get("variant")
    if variant not in VARIANTS:
        raise ValidationError(f"manifest variant {variant!r} must be one of {VARIANTS}")
    entries = {p["name"]: p for p in manifest.get("params", [])}
    blob = weights_path.read_bytes()
    params: dict[str, np.ndarray] = {}
    for name, shape in LENET_PARAM_SHAPES:
        if name not in entries:
            raise ValidationError(f"manifest is missing parameter {name}")
        entry = entries[name]
        if tuple(entry["shape"]) != shape:
            raise ValidationError(
                f"parameter {name} has shape {tuple(entry['shape'])}, expected {shape}"
            )
        count = int(np.prod(shape))
        start = int(entry["offset_bytes"])
        end = start + 4 * count
        if start < 0 or end > len(blob):
            raise FormatError(f"parameter {name} payload out of range in weights.bin")
        arr = np.frombuffer(blob[start:end], dtype="<f4").reshape(shape)
        params[name] = arr.astype(np.float32)
    return LeNetWeights(params=params, variant=variant)


__all__ = [
    "save_tensor",
    "load_tensor",
    "load_labels",
    "flatten",
    "read_idx",
    "write_idx",
    "preprocess_images",
    "load_mnist_idx",
    "load_dataset",
    "LeNetWeights",
    "LENET_PARAM_SHAPES",
    "save_weights",
    "load_weights",
    "LabeledPointSet",
    "PointSetMeta",
]
