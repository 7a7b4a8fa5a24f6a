"""Core conversion and verification logic behind the CLI."""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .container import IntegrityError, scan_container, write_container
from .namemap import MapError
from .readers import read_checkpoint


class SourceError(Exception):
    """Mapped tensors are absent from, or unusable in, the checkpoint."""


@dataclass(frozen=True)
class ConvertedTensor:
    source: str
    target: str
    shape: Tuple[int, ...]


def _apply(entry, arr):
    if not np.issubdtype(arr.dtype, np.floating):
        raise SourceError(f"{entry.source}: dtype {arr.dtype} is not a float type")
    if entry.permute is not None:
        if sorted(entry.permute) != list(range(arr.ndim)):
            raise MapError(
                f"{entry.source}: permutation {list(entry.permute)} is not a "
                f"permutation of rank {arr.ndim}"
            )
        arr = np.transpose(arr, entry.permute)
    if entry.squeeze:
        arr = np.squeeze(arr)
    return np.ascontiguousarray(arr, dtype=np.float32)


def convert(checkpoint_path, entries, out_path) -> list:
    """Convert mapped tensors into a container file at out_path.

    Returns the manifest of converted tensors in map order. Raises
    SourceError listing every missing source name at once.
    """
    tensors = read_checkpoint(checkpoint_path)
    missing = [e.source for e in entries if e.source not in tensors]
    if missing:
        raise SourceError(
            f"{len(missing)} mapped tensors missing from {checkpoint_path}: "
            + ", ".join(missing)
        )
    converted, manifest = [], []
    for entry in entries:
        arr = _apply(entry, tensors[entry.source])
        converted.append((entry.target, arr))
        manifest.append(ConvertedTensor(entry.source, entry.target, arr.shape))
    write_container(out_path, converted)
    return manifest


def verify(container_path) -> int:
    """Validate layout and value finiteness; returns the tensor count.

    Raises IntegrityError on structural damage (with a byte offset for
    truncation) or on non-finite values (naming the tensor).
    """
    count = 0
    for name, arr in scan_container(container_path):
        if not np.isfinite(arr).all():
            bad = int(arr.size - np.isfinite(arr).sum())
            raise IntegrityError(f"{name}: {bad} non-finite values")
        count += 1
    return count
