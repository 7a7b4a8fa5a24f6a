"""Weight container writing and strict verification.

Layout, all integers little-endian: magic "VWTC", u32 version (1), u32
tensor count; per tensor a u32 name length, the UTF-8 name, u8 dtype code
(0 = float32), u8 ndim, ndim u64 dims, then the row-major float32 payload.

The scanner here is deliberately paranoid: it is the backing for the
`verify` command, so every short read reports the byte offset at which the
file ran out instead of whatever numpy would have said.
"""
import struct

import numpy as np

MAGIC = b"VWTC"
VERSION = 1
DTYPE_F32 = 0


class IntegrityError(Exception):
    """Container file violates the binary layout or holds bad values."""


def write_container(path, tensors):
    """Write (name, float32 array) pairs in order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors:
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", DTYPE_F32, arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.tobytes())


class _Cursor:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.blob):
            raise IntegrityError(
                f"truncated file: needed {n} bytes for {what} "
                f"at byte offset {self.pos}, file ends at {len(self.blob)}"
            )
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out


def scan_container(path):
    """Walk a container file strictly; yields (name, float32 array) pairs.

    Raises IntegrityError with a byte offset on any structural problem.
    Finiteness of values is the caller's concern (see convert.verify).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    cur = _Cursor(blob)
    if cur.take(4, "magic") != MAGIC:
        raise IntegrityError("bad magic at offset 0: not a VWTC container")
    version, count = struct.unpack("<II", cur.take(8, "header"))
    if version != VERSION:
        raise IntegrityError(f"unsupported container version {version}")
    for i in range(count):
        (name_len,) = struct.unpack("<I", cur.take(4, f"entry {i} name length"))
        raw = cur.take(name_len, f"entry {i} name")
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IntegrityError(f"entry {i}: name is not valid UTF-8") from exc
        dtype_code, ndim = struct.unpack("<BB", cur.take(2, f"{name}: dtype/ndim"))
        if dtype_code != DTYPE_F32:
            raise IntegrityError(f"{name}: unknown dtype code {dtype_code}")
        shape = tuple(
            struct.unpack("<Q", cur.take(8, f"{name}: dim {d}"))[0]
            for d in range(ndim)
        )
        n_bytes = 4 * int(np.prod(shape, dtype=np.int64))
        payload = cur.take(n_bytes, f"{name}: payload")
        yield name, np.frombuffer(payload, dtype="<f4").reshape(shape)
    if cur.pos != len(blob):
        raise IntegrityError(
            f"{len(blob) - cur.pos} trailing bytes after the last entry "
            f"(at byte offset {cur.pos})"
        )
