"""Binary checkpoints for MLPs.

Layout (little-endian): 13-byte magic ``ADVRECON-NET\\0``, u8 version, u64
layer count L, L+1 u64 layer widths, L u8 activation tags, then for every
layer ``W`` row-major followed by ``b``, all float64.
"""

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .network import ACTIVATION_TAGS, Mlp, MlpReconstructor, PerturbationGenerator

MAGIC = b"ADVRECON-NET\0"
VERSION = 1
_TAG_NAMES = {v: k for k, v in ACTIVATION_TAGS.items()}
# guards against absurd headers before allocating
MAX_LAYERS = 1 << 12


def encode_network(net):
    L = len(net.weights)
    parts = [MAGIC, struct.pack("<BQ", VERSION, L), struct.pack("<%dQ" % (L + 1), *net.layer_dims),
             bytes(ACTIVATION_TAGS[a] for a in net.activations)]
    for W, b in net.weights:
        parts.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_network(data):
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError("not a network checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(data) < pos + 9:
        raise FormatError("truncated checkpoint header")
    version, L = struct.unpack_from("<BQ", data, pos)
    pos += 9
    if version != VERSION:
        raise FormatError("checkpoint version %d, this reader handles %d" % (version, VERSION))
    if not 1 <= L <= MAX_LAYERS:
        raise FormatError("implausible layer count %d" % L)
    if len(data) < pos + 8 * (L + 1) + L:
        raise FormatError("truncated checkpoint header")
    dims = list(struct.unpack_from("<%dQ" % (L + 1), data, pos))
    pos += 8 * (L + 1)
    tags = data[pos:pos + L]
    pos += L
    try:
        activations = [_TAG_NAMES[t] for t in tags]
    except KeyError as exc:
        raise FormatError("unknown activation tag %d" % exc.args[0]) from None
    need = sum(o * i + o for i, o in zip(dims[:-1], dims[1:]))
    if len(data) - pos != 8 * need:
        raise FormatError("checkpoint payload has %d bytes, expected %d" % (len(data) - pos, 8 * need))
    flat = np.frombuffer(data, dtype="<f8", offset=pos).astype(np.float64)
    weights = []
    k = 0
    for i, o in zip(dims[:-1], dims[1:]):
        W = flat[k:k + o * i].reshape(o, i)
        k += o * i
        weights.append((W, flat[k:k + o]))
        k += o
    cls = {"tanh": MlpReconstructor, "linear": PerturbationGenerator}.get(activations[-1], Mlp)
    return cls(dims, weights, activations)


def checkpoint_save(net, path):
    Path(path).write_bytes(encode_network(net))


def checkpoint_load(path):
    return decode_network(Path(path).read_bytes())
