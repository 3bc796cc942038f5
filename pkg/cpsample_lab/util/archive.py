"""CPTA tensor archive: datasets, samples and model checkpoints share this container.

Layout (little-endian):
    "CPTA"  u32 version=1  u32 count
    per tensor: u32 name_len, name (UTF-8), u8 dtype (1=f32, 2=f64), u32 ndim, ndim x u64 dims,
                raw row-major data
    u32 metadata_len, metadata (UTF-8)
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from cpsample_lab.common import ArchiveFormatException
from cpsample_lab.libtensor import Tensor

MAGIC = b"CPTA"
VERSION = 1
DTYPE_CODES = {"f32": 1, "f64": 2}
CODE_DTYPES = {1: ("f32", np.dtype("<f4")), 2: ("f64", np.dtype("<f8"))}


@dataclass
class TensorArchive:
    tensors: dict = field(default_factory=dict)
    metadata: str = ""

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def with_prefix(self, prefix):
        """{name: ndarray} for every tensor whose name starts with `prefix`."""
        return {k: v.numpy() for k, v in self.tensors.items() if k.startswith(prefix)}


def _items(tensors):
    items = list(tensors.items()) if isinstance(tensors, dict) else list(tensors)
    names = [name for name, _ in items]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ArchiveFormatException(f"duplicate tensor names: {', '.join(dupes)}")
    return [(name, t if isinstance(t, Tensor) else Tensor(t)) for name, t in items]


def encode_archive(tensors, metadata=""):
    items = _items(tensors)
    out = [MAGIC, struct.pack("<II", VERSION, len(items))]
    for name, t in items:
        raw = name.encode("utf-8")
        code = DTYPE_CODES[t.storage]
        dims = t.data.shape
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack(f"<BI{len(dims)}Q", code, len(dims), *dims))
        out.append(t.stored().astype(CODE_DTYPES[code][1]).tobytes(order="C"))
    meta = metadata.encode("utf-8")
    out.append(struct.pack("<I", len(meta)) + meta)
    return b"".join(out)


def write_archive(path, tensors, metadata=""):
    """Write atomically: a failed write leaves no file behind."""
    blob = encode_archive(tensors, metadata)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


class _Cursor:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.blob):
            raise ArchiveFormatException(f"truncated archive while reading {what}")
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_archive(blob):
    cur = _Cursor(blob)
    if cur.take(4, "magic") != MAGIC:
        raise ArchiveFormatException("bad magic: not a CPTA archive")
    version, count = cur.unpack("<II", "header")
    if version != VERSION:
        raise ArchiveFormatException(f"unsupported archive version {version}")
    tensors = {}
    for i in range(count):
        (name_len,) = cur.unpack("<I", f"tensor {i} name")
        try:
            name = cur.take(name_len, f"tensor {i} name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise ArchiveFormatException(f"tensor {i}: name is not UTF-8") from e
        if name in tensors:
            raise ArchiveFormatException(f"duplicate tensor name '{name}'")
        code, ndim = cur.unpack("<BI", f"'{name}' header")
        if code not in CODE_DTYPES:
            raise ArchiveFormatException(f"'{name}': unknown dtype code {code}")
        dims = cur.unpack(f"<{ndim}Q", f"'{name}' dims")
        storage, dtype = CODE_DTYPES[code]
        count_elems = int(np.prod(dims, dtype=np.int64))
        raw = cur.take(count_elems * dtype.itemsize, f"'{name}' data")
        data = np.frombuffer(raw, dtype=dtype, count=count_elems).reshape(dims)
        tensors[name] = Tensor(data, storage=storage)
    (meta_len,) = cur.unpack("<I", "metadata length")
    try:
        metadata = cur.take(meta_len, "metadata").decode("utf-8")
    except UnicodeDecodeError as e:
        raise ArchiveFormatException("metadata is not UTF-8") from e
    if cur.pos != len(blob):
        raise ArchiveFormatException(f"{len(blob) - cur.pos} trailing bytes after metadata")
    return TensorArchive(tensors, metadata)


def read_archive(path):
    with open(path, "rb") as f:
        return decode_archive(f.read())
