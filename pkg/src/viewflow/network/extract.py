"""Clip ingestion: frames -> optical flow -> tap features -> archive.

Clips live on disk as folders of numbered PNG or PGM frames. Each clip is
preprocessed (gray, short side resized, center crop), flow is computed for
every consecutive frame pair (with an optional on-disk cache), the flow
volume is padded to the network's minimum temporal extent and pushed
through the backbone to the tap. Features land in a directory of .vfea
files plus an index.json mapping clip id to file and metadata.
"""

import concurrent.futures
import dataclasses
import json
import logging
import os
import re
import struct
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from ..errors import DataError, InputError, ViewflowError
from ..flow import FlowParams, flow_to_network_input, image, io as flow_io, tvl1_flow
from .model import Network, forward_to_tap

__all__ = [
    "ExtractionResult",
    "extract_features",
    "read_clip_frames",
    "preprocess_frame",
    "clip_flow_volume",
    "write_feature",
    "read_feature",
    "read_index",
]

log = logging.getLogger(__name__)

FEATURE_MAGIC = b"VFEA"
FEATURE_VERSION = 1
FRAME_SUFFIXES = (".png", ".pgm")
INDEX_NAME = "index.json"

_digits = re.compile(r"(\d+)")


def _frame_key(name: str):
    """Numeric-aware ordering so frame_2 sorts before frame_10."""
    parts = _digits.split(os.path.splitext(name)[0])
    return tuple(int(p) if p.isdigit() else p for p in parts)


def read_clip_frames(clip_dir: str) -> List[np.ndarray]:
    """Load a clip folder as a list of grayscale [H, W] float frames."""
    if not os.path.isdir(clip_dir):
        raise DataError(f"clip folder {clip_dir} does not exist")
    names = sorted(
        (n for n in os.listdir(clip_dir) if n.lower().endswith(FRAME_SUFFIXES)),
        key=_frame_key,
    )
    if len(names) < 2:
        raise DataError(f"clip folder {clip_dir} has {len(names)} frames; need at least 2")
    frames = []
    for name in names:
        with Image.open(os.path.join(clip_dir, name)) as img:
            frames.append(image.to_gray(np.asarray(img)))
    first = frames[0].shape
    for name, frame in zip(names, frames):
        if frame.shape != first:
            raise DataError(f"clip folder {clip_dir}: frame {name} is {frame.shape}, expected {first}")
    return frames


def preprocess_frame(gray: np.ndarray, input_size: int) -> np.ndarray:
    """Resize the short side to input_size * 256/224, then center crop."""
    h, w = gray.shape
    target_short = int(round(input_size * 256.0 / 224.0))
    if h <= w:
        new_h = target_short
        new_w = max(int(round(w * target_short / h)), input_size)
    else:
        new_w = target_short
        new_h = max(int(round(h * target_short / w)), input_size)
    resized = image.resize_bilinear(gray, new_h, new_w)
    top = (new_h - input_size) // 2
    left = (new_w - input_size) // 2
    return resized[top : top + input_size, left : left + input_size]


def _cache_path(cache_dir, clip_id, pair_idx, size):
    return os.path.join(cache_dir, clip_id, f"{size[0]}x{size[1]}_{pair_idx:04d}.vflo")


def clip_flow_volume(
    frames: List[np.ndarray],
    params: FlowParams,
    min_frames: int,
    cache_dir: Optional[str] = None,
    clip_id: Optional[str] = None,
) -> np.ndarray:
    """Flow for consecutive frame pairs, padded to min_frames, as [1,2,T,H,W]."""
    size = frames[0].shape
    flows = []
    for idx in range(len(frames) - 1):
        cached = None
        if cache_dir and clip_id:
            path = _cache_path(cache_dir, clip_id, idx, size)
            if os.path.exists(path):
                cached = flow_io.read_flow(path)
        if cached is None:
            cached = tvl1_flow(frames[idx], frames[idx + 1], params)
            if cache_dir and clip_id:
                path = _cache_path(cache_dir, clip_id, idx, size)
                os.makedirs(os.path.dirname(path), exist_ok=True)
                flow_io.write_flow(path, cached)
        flows.append(cached)
    while len(flows) < min_frames:
        flows.append(flows[-1])
    return flow_to_network_input(flows).data


def write_feature(path: str, values: np.ndarray):
    arr = np.ascontiguousarray(values, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", FEATURE_VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.astype("<f4").tobytes())


def read_feature(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != FEATURE_MAGIC:
        raise InputError(f"{path}: not a feature file (bad magic)")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != FEATURE_VERSION:
        raise InputError(f"{path}: unsupported feature version {version}")
    head = 12 + 8 * ndim
    if len(blob) < head:
        raise InputError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{ndim}Q", blob, 12)
    count = 1
    for d in dims:
        count *= int(d)
    if len(blob) != head + 4 * count:
        raise InputError(
            f"{path}: payload is {len(blob) - head} bytes, expected {4 * count}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=head)
    return data.reshape([int(d) for d in dims]).copy()


def read_index(feature_dir: str) -> dict:
    path = os.path.join(feature_dir, INDEX_NAME)
    if not os.path.exists(path):
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise InputError(f"{path}: index must be a JSON object")
    return obj


def _write_index(feature_dir: str, index: dict):
    path = os.path.join(feature_dir, INDEX_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


@dataclasses.dataclass
class ExtractionResult:
    written: List[str]
    skipped: List[str]
    errors: List[Tuple[str, str]]
    index_path: str


def _compute_one(entry, network, params, cache_dir):
    frames = read_clip_frames(entry.path)
    frames = [preprocess_frame(f, network.spec.input_size) for f in frames]
    volume = clip_flow_volume(
        frames, params, network.spec.min_frames, cache_dir=cache_dir, clip_id=entry.id
    )
    return forward_to_tap(network, volume, clip_id=entry.id)


def extract_features(
    manifest,
    network: Network,
    params: FlowParams,
    out_dir: str,
    cache_dir: Optional[str] = None,
    force: bool = False,
    jobs: int = 1,
) -> ExtractionResult:
    """Extract tap features for every clip in the manifest.

    Already-archived clips are skipped unless force is set, duplicate ids
    are processed once, and a failing clip is recorded and skipped rather
    than aborting the batch. Processing order is sorted by clip id so the
    archive comes out the same regardless of manifest order or job count.
    """
    os.makedirs(out_dir, exist_ok=True)
    index = {} if force else read_index(out_dir)
    written, skipped, errors = [], [], []
    seen = set()
    todo = []
    for entry in sorted(manifest.entries, key=lambda e: e.id):
        if entry.id in seen:
            log.debug("extract: duplicate clip id %s; keeping first occurrence", entry.id)
            continue
        seen.add(entry.id)
        feature_file = f"{entry.id}.vfea"
        if (
            not force
            and entry.id in index
            and os.path.exists(os.path.join(out_dir, feature_file))
        ):
            skipped.append(entry.id)
            continue
        todo.append(entry)

    def compute(entry):
        try:
            return entry, _compute_one(entry, network, params, cache_dir), None
        except (ViewflowError, OSError) as exc:
            return entry, None, f"{type(exc).__name__}: {exc}"

    if jobs > 1 and len(todo) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(compute, todo))
    else:
        results = [compute(entry) for entry in todo]

    for entry, block, error in results:
        if error is not None:
            log.warning("extract: clip %s failed: %s", entry.id, error)
            errors.append((entry.id, error))
            continue
        feature_file = f"{entry.id}.vfea"
        write_feature(os.path.join(out_dir, feature_file), block.values)
        index[entry.id] = {
            "file": feature_file,
            "label": entry.label,
            "view": entry.view,
            "split": entry.split,
            "actor": entry.actor,
        }
        written.append(entry.id)

    index_path = _write_index(out_dir, index)
    return ExtractionResult(written=written, skipped=skipped, errors=errors, index_path=index_path)
