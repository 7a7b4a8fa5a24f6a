"""Named-tensor weight container and its binary file format.

Layout, all integers little-endian: magic "VWTC", u32 version (1), u32
tensor count; then per tensor: u32 name length, UTF-8 name, u8 dtype code
(0 = float32), u8 ndim, ndim u64 dims, row-major float32 payload.
"""

import struct

import numpy as np

from ..errors import InputError

__all__ = ["WeightContainer", "read_container", "write_container"]

MAGIC = b"VWTC"
VERSION = 1
DTYPE_F32 = 0


class WeightContainer:
    """Ordered mapping of unique tensor names to float32 arrays."""

    def __init__(self):
        self._tensors = {}

    def add(self, name: str, data):
        if name in self._tensors:
            raise InputError(f"duplicate tensor name {name!r}")
        arr = np.ascontiguousarray(data, dtype=np.float32)
        self._tensors[name] = arr

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def get(self, name: str) -> np.ndarray:
        if name not in self._tensors:
            raise KeyError(name)
        return self._tensors[name]

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()


def write_container(path, container: WeightContainer):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(container)))
        for name, arr in container.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", DTYPE_F32, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype("<f4").tobytes())


def read_container(path) -> WeightContainer:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise InputError(f"{path}: not a weight container (bad magic at offset 0)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise InputError(f"{path}: unsupported container version {version}")
    container = WeightContainer()
    offset = 12
    for i in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset : offset + name_len].decode("utf-8")
            if len(blob) < offset + name_len:
                raise struct.error("name out of bounds")
            offset += name_len
            dtype_code, ndim = struct.unpack_from("<BB", blob, offset)
            offset += 2
            dims = struct.unpack_from(f"<{ndim}Q", blob, offset)
            offset += 8 * ndim
        except struct.error:
            raise InputError(
                f"{path}: truncated tensor header (entry {i} at offset {offset})"
            ) from None
        if dtype_code != DTYPE_F32:
            raise InputError(f"{path}: tensor {name!r} has unsupported dtype code {dtype_code}")
        n_values = 1
        for d in dims:
            n_values *= int(d)
        end = offset + 4 * n_values
        if len(blob) < end:
            raise InputError(
                f"{path}: truncated payload for tensor {name!r} at offset {offset}"
            )
        data = np.frombuffer(blob, dtype="<f4", count=n_values, offset=offset)
        container.add(name, data.reshape([int(d) for d in dims]).copy())
        offset = end
    if offset != len(blob):
        raise InputError(f"{path}: {len(blob) - offset} trailing bytes after last tensor")
    return container
