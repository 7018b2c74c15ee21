"""Named-tensor checkpoint format.

Layout (all integers little-endian):
  magic   4 bytes  b"AKD1"
  version u32      currently 1
  count   u32      number of tensors
  per tensor:
    name_len u32, name utf-8 bytes
    dtype    u8   (4 = float32, 8 = float64)
    rank     u32, extents rank * u32
    payload  little-endian raw values, row-major
  crc32    u32 of every preceding byte

Round trips are bitwise exact; the CRC is verified on load.
"""

import struct
import zlib

import numpy as np

from .errors import CheckpointError

MAGIC = b"AKD1"
VERSION = 1
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}
_TAGS = {np.dtype("float32"): 4, np.dtype("float64"): 8}


def save(path, tensors):
    """Write a dict of name -> numpy array (float32/float64)."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(getattr(arr, "data", arr))
        if arr.dtype not in _TAGS:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<BI", _TAGS[arr.dtype], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).astype(
            _DTYPES[_TAGS[arr.dtype]], copy=False).tobytes())
    body = b"".join(chunks)
    with open(path, "wb") as f:
        f.write(body)
        f.write(struct.pack("<I", zlib.crc32(body)))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.off = 0

    def take(self, n, what):
        if self.off + n > len(self.buf):
            raise CheckpointError(
                f"truncated checkpoint: needed {n} bytes for {what} "
                f"at offset {self.off}")
        out = self.buf[self.off:self.off + n]
        self.off += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def load(path):
    """Read a checkpoint; returns dict of name -> numpy array."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise CheckpointError(f"file too short ({len(raw)} bytes) at offset 0")
    body, crc_bytes = raw[:-4], raw[-4:]
    expected = struct.unpack("<I", crc_bytes)[0]
    actual = zlib.crc32(body)
    if actual != expected:
        raise CheckpointError(
            f"CRC mismatch at offset {len(body)}: stored {expected:#010x}, "
            f"computed {actual:#010x}")
    r = _Reader(body)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic at offset 0")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    count = r.u32("tensor count")
    out = {}
    for _ in range(count):
        name_len = r.u32("name length")
        name = r.take(name_len, "name").decode("utf-8")
        tag = r.take(1, "dtype tag")[0]
        if tag not in _DTYPES:
            raise CheckpointError(
                f"unknown dtype tag {tag} for {name!r} at offset {r.off - 1}")
        rank = r.u32("rank")
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank, "extents"))
        n = int(np.prod(shape)) if rank else 1
        payload = r.take(n * _DTYPES[tag].itemsize, f"payload of {name!r}")
        out[name] = np.frombuffer(payload, dtype=_DTYPES[tag]).reshape(shape).copy()
    if r.off != len(body):
        raise CheckpointError(f"{len(body) - r.off} trailing bytes at offset {r.off}")
    return out


def save_model(path, params, meta=None):
    """Persist Tensors plus optional scalar metadata tensors."""
    tensors = {k: t.data for k, t in params.items()}
    if meta:
        for k, v in meta.items():
            tensors[f"meta.{k}"] = np.asarray(float(v), dtype=np.float64)
    save(path, tensors)
