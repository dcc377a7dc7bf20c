"""Datasets: MNIST IDX parsing, pooling, splitting and synthetic Gaussian signals."""

import enum
import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
_UBYTE = 0x08
# 60000 * 28 * 28 is ~47M; anything past this is not an image file we can hold
MAX_IDX_ELEMENTS = 1 << 31


class IdxMagicError(FormatError):
    pass


class IdxTruncatedError(FormatError):
    pass


class IdxDimensionError(FormatError):
    pass


class DataSource(str, enum.Enum):
    MNIST = "mnist"
    MNIST_DOWNSAMPLED = "mnist_downsampled"
    SYNTHETIC_GAUSSIAN = "synthetic_gaussian"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Signals stored row-wise, ``samples.shape == (N, n)``.

    ``normalization`` is the ``(scale, offset)`` pair mapping raw values to
    stored ones, ``stored = raw * scale + offset``.
    """

    samples: np.ndarray
    source: DataSource
    normalization: tuple = (1.0, 0.0)
    image_shape: tuple = None
    labels: np.ndarray = None
    noise_sigma: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-d (N, n) array")
        if self.source != DataSource.SYNTHETIC_GAUSSIAN and samples.size:
            if samples.min() < -1.0 or samples.max() > 1.0:
                raise ValueError("image samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "source", DataSource(self.source))

    @property
    def n(self):
        return self.samples.shape[1]

    def __len__(self):
        return self.samples.shape[0]

    def subset(self, index):
        labels = None if self.labels is None else self.labels[index]
        return replace(self, samples=self.samples[index], labels=labels)


def _open_bytes(path):
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(data):
    """Decode an unsigned-byte IDX payload into a ``uint8`` array."""
    if len(data) < 4:
        raise IdxTruncatedError("IDX header shorter than 4 bytes")
    zero, dtype, ndim = struct.unpack(">HBB", data[:4])
    if zero != 0 or dtype != _UBYTE or ndim == 0:
        raise IdxMagicError("bad IDX magic 0x%s" % data[:4].hex())
    head = 4 + 4 * ndim
    if len(data) < head:
        raise IdxTruncatedError("IDX header declares %d dims but is truncated" % ndim)
    dims = struct.unpack(">%dI" % ndim, data[4:head])
    total = 1
    for d in dims:
        total *= d
        if total > MAX_IDX_ELEMENTS:
            raise IdxDimensionError("IDX dimensions %s overflow the element limit" % (dims,))
    payload = data[head:]
    if len(payload) < total:
        raise IdxTruncatedError("IDX payload has %d bytes, expected %d" % (len(payload), total))
    if len(payload) > total:
        raise IdxDimensionError("IDX payload has %d trailing bytes" % (len(payload) - total))
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()


def encode_idx(array):
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError("only uint8 arrays can be written as IDX")
    header = struct.pack(">HBB", 0, _UBYTE, array.ndim) + struct.pack(">%dI" % array.ndim, *array.shape)
    return header + np.ascontiguousarray(array).tobytes()


def read_idx(path, expected_magic=None):
    data = _open_bytes(path)
    if expected_magic is not None and len(data) >= 4:
        magic = struct.unpack(">I", data[:4])[0]
        if magic != expected_magic:
            raise IdxMagicError("%s: magic %d, expected %d" % (path, magic, expected_magic))
    return parse_idx(data)


def write_idx(array, path):
    Path(path).write_bytes(encode_idx(array))


def pixels_to_unit_range(pixels):
    """Map bytes 0..255 linearly onto [-1, 1]."""
    return np.asarray(pixels, dtype=np.float64) / 127.5 - 1.0


def load_mnist_idx(images_path, labels_path=None):
    images = read_idx(images_path, IMAGE_MAGIC)
    if images.ndim != 3:
        raise IdxDimensionError("image file must be 3-d, got %d dims" % images.ndim)
    labels = None
    if labels_path is not None:
        labels = read_idx(labels_path, LABEL_MAGIC)
        if labels.ndim != 1 or len(labels) != len(images):
            raise IdxDimensionError("label count %d does not match %d images" % (len(labels), len(images)))
    count, rows, cols = images.shape
    return Dataset(
        samples=pixels_to_unit_range(images.reshape(count, rows * cols)),
        source=DataSource.MNIST,
        normalization=(1.0 / 127.5, -1.0),
        image_shape=(rows, cols),
        labels=labels,
    )


def bundled_mnist_subset():
    """The 5000-image MNIST subset shipped with ``mlxtend``, as uint8 arrays.

    Returns ``(images, labels)`` with ``images.shape == (5000, 28, 28)``.
    """
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise ImportError("the bundled MNIST subset needs mlxtend (pip install advrecon[mnist])") from exc
    X, y = mnist_data()
    return X.astype(np.uint8).reshape(-1, 28, 28), y.astype(np.uint8)


def downsample(dataset, factor):
    """Block-mean pooling by ``factor`` along both image axes."""
    if dataset.image_shape is None:
        raise ValueError("dataset has no image shape to pool over")
    factor = int(factor)
    rows, cols = dataset.image_shape
    if factor < 1 or rows % factor or cols % factor:
        raise ValueError("image side %dx%d is not divisible by factor %d" % (rows, cols, factor))
    if factor == 1:
        return dataset
    N = len(dataset)
    r, c = rows // factor, cols // factor
    pooled = dataset.samples.reshape(N, r, factor, c, factor).mean(axis=(2, 4))
    return replace(
        dataset,
        samples=np.clip(pooled.reshape(N, r * c), -1.0, 1.0),
        source=DataSource.MNIST_DOWNSAMPLED,
        image_shape=(r, c),
    )


def train_test_split(dataset, train_count, seed):
    total = len(dataset)
    if not 0 < train_count < total:
        raise ValueError("train_count must lie in (0, %d), got %r" % (total, train_count))
    perm = np.random.default_rng(seed).permutation(total)
    return dataset.subset(perm[:train_count]), dataset.subset(perm[train_count:])


def sample_gaussian_signals(count, dim, seed, sigma_noise=0.0):
    """``count`` i.i.d. N(0, I_dim) signals; ``sigma_noise`` is recorded for measuring."""
    if count <= 0 or dim <= 0:
        raise ValueError("count and dim must be positive")
    if sigma_noise < 0:
        raise ValueError("sigma_noise must be non-negative")
    rng = np.random.default_rng(seed)
    return Dataset(
        samples=rng.standard_normal((count, dim)),
        source=DataSource.SYNTHETIC_GAUSSIAN,
        noise_sigma=float(sigma_noise),
    )


def measure(A, dataset, seed=0):
    """Row-wise ``y = A x + v`` with ``v ~ N(0, sigma^2 I)``; exact when sigma is 0."""
    Y = dataset.samples @ A.entries.T
    if dataset.noise_sigma > 0:
        Y = Y + np.random.default_rng(seed).normal(0.0, dataset.noise_sigma, Y.shape)
    return Y
