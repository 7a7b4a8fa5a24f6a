"""Bundled synthetic dataset: moving textured discs under three views.

Twenty action classes are twenty motion patterns (ten headings at two
speeds) of a textured disc over a static textured background. Each clip
is rendered under one of three simulated camera views:

  view 0  lateral: the scene as-is
  view 1  egocentric: zoomed-in crop with per-frame camera shake
  view 2  frontal: mirrored, slightly rotated and rescaled

The views preserve within-view class structure but change how motion
maps to pixels (mirroring flips headings, zoom rescales speeds), so
classifiers trained on one view transfer imperfectly to another. That
gives the pipeline a dataset where same-view accuracy should beat
cross-view accuracy, with zero external data.

Clips are directories of PGM frames plus a manifest.json; everything is
deterministic in (seed, clip id), so regeneration is byte-identical.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .harness.manifest import ClipEntry, Manifest, manifest_from_entries

__all__ = ["SynthParams", "generate_dataset", "class_motion"]

log = logging.getLogger(__name__)

N_HEADINGS = 10
SPEEDS = (1.6, 3.2)


@dataclass(frozen=True)
class SynthParams:
    classes: int = 20
    views: tuple = (0, 1, 2)
    train_clips: int = 10
    test_clips: int = 5
    frames: int = 9
    size: int = 80
    seed: int = 17

    def __post_init__(self):
        if not 2 <= self.classes <= N_HEADINGS * len(SPEEDS):
            raise ConfigError(
                f"classes must be in [2, {N_HEADINGS * len(SPEEDS)}], got {self.classes}"
            )
        if self.frames < 2:
            raise ConfigError(f"frames must be >= 2, got {self.frames}")
        if self.size < 32:
            raise ConfigError(f"size must be >= 32, got {self.size}")
        if self.train_clips < 1 or self.test_clips < 1:
            raise ConfigError("train_clips and test_clips must be >= 1")
        views = tuple(sorted(set(int(v) for v in self.views)))
        if not views or any(v not in (0, 1, 2) for v in views):
            raise ConfigError(f"views must be a subset of (0, 1, 2), got {self.views}")
        object.__setattr__(self, "views", views)


def class_motion(class_index: int):
    """(velocity x, velocity y) in pixels per frame for a class."""
    heading = 2.0 * math.pi * (class_index % N_HEADINGS) / N_HEADINGS
    speed = SPEEDS[class_index // N_HEADINGS]
    return speed * math.cos(heading), speed * math.sin(heading)


def _clip_rng(seed: int, clip_id: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}/{clip_id}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _texture(rng, size, low, high, smooth=2.5):
    noise = rng.normal(size=(size, size))
    tex = ndimage.gaussian_filter(noise, smooth, mode="wrap")
    tex = (tex - tex.min()) / (tex.max() - tex.min() + 1e-9)
    return (low + (high - low) * tex).astype(np.float32)


def _render_base(rng, params: SynthParams, vx, vy):
    """Frames of a textured disc drifting over a static background."""
    size = params.size
    background = _texture(rng, size, 0.0, 0.55)
    disc_tex = _texture(rng, size, 0.35, 1.0, smooth=1.8)
    radius = size * 0.16
    jitter = rng.uniform(-size * 0.08, size * 0.08, 2)
    span = (params.frames - 1) / 2.0
    cx0 = size / 2.0 + jitter[0] - vx * span
    cy0 = size / 2.0 + jitter[1] - vy * span

    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    frames = []
    for t in range(params.frames):
        cx = cx0 + vx * t
        cy = cy0 + vy * t
        frame = background.copy()
        inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
        # sample the disc texture in disc-local coordinates so the
        # pattern travels with the disc instead of sliding under a hole
        lx = np.clip(np.rint(xs - cx + size / 2.0), 0, size - 1).astype(np.intp)
        ly = np.clip(np.rint(ys - cy + size / 2.0), 0, size - 1).astype(np.intp)
        frame[inside] = disc_tex[ly[inside], lx[inside]]
        frames.append(frame)
    return frames


def _affine_about_center(frame, matrix, shift=(0.0, 0.0)):
    """Bilinear warp; matrix maps output coords to source, about the centre."""
    size = frame.shape[0]
    c = (size - 1) / 2.0
    centre = np.array([c, c])
    offset = centre - matrix @ (centre - np.asarray(shift))
    return ndimage.affine_transform(
        frame, matrix, offset=offset, order=1, mode="nearest", output=np.float32
    )


def _apply_view(frames, view, rng):
    if view == 0:
        return frames
    if view == 1:
        zoom = np.diag([1 / 1.7, 1 / 1.7])
        out = []
        for frame in frames:
            shake = rng.uniform(-1.2, 1.2, 2)
            out.append(_affine_about_center(frame, zoom, shift=shake))
        return out
    if view == 2:
        angle = math.radians(10.0)
        rot = np.array(
            [
                [math.cos(angle), -math.sin(angle)],
                [math.sin(angle), math.cos(angle)],
            ]
        )
        mirror = np.diag([1.0, -1.0])  # axis order is (row, col): flip columns
        matrix = rot @ mirror / 1.05
        return [_affine_about_center(f, matrix) for f in frames]
    raise ConfigError(f"unknown view {view}")


def _write_pgm(path, frame):
    shade = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
    h, w = shade.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(shade.tobytes())


def _render_clip(clip_dir, clip_id, class_index, view, params):
    rng = _clip_rng(params.seed, clip_id)
    vx, vy = class_motion(class_index)
    speed_noise = float(rng.uniform(0.92, 1.08))
    frames = _render_base(rng, params, vx * speed_noise, vy * speed_noise)
    frames = _apply_view(frames, view, rng)
    os.makedirs(clip_dir, exist_ok=True)
    for t, frame in enumerate(frames):
        _write_pgm(os.path.join(clip_dir, f"frame_{t:03d}.pgm"), frame)


def generate_dataset(root, params: SynthParams = None, force: bool = False) -> Manifest:
    """Render all clips under root/clips and write root/manifest.json.

    Existing clip directories with the right frame count are left alone
    unless force is set; rendering is deterministic, so a forced rerun
    produces identical bytes.
    """
    params = params or SynthParams()
    root = os.path.abspath(root)
    clips_dir = os.path.join(root, "clips")
    os.makedirs(clips_dir, exist_ok=True)

    entries = []
    rendered = 0
    for class_index in range(params.classes):
        label = f"c{class_index:02d}"
        for view in params.views:
            for split, count in (("TR", params.train_clips), ("TE", params.test_clips)):
                for k in range(count):
                    clip_id = f"{label}_v{view}_{split.lower()}{k:02d}"
                    rel = os.path.join("clips", clip_id)
                    clip_dir = os.path.join(root, rel)
                    have = (
                        not force
                        and os.path.isdir(clip_dir)
                        and len(
                            [f for f in os.listdir(clip_dir) if f.endswith(".pgm")]
                        )
                        == params.frames
                    )
                    if not have:
                        _render_clip(clip_dir, clip_id, class_index, view, params)
                        rendered += 1
                    entries.append(
                        ClipEntry(
                            id=clip_id,
                            path=rel,
                            label=label,
                            view=view,
                            split=split,
                            actor="synthetic",
                        )
                    )

    manifest_path = os.path.join(root, "manifest.json")
    payload = {
        "schema": 1,
        "clips": [
            {
                "id": e.id,
                "path": e.path.replace(os.sep, "/"),
                "label": e.label,
                "view": e.view,
                "split": e.split,
                "actor": e.actor,
            }
            for e in entries
        ],
    }
    with open(manifest_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info(
        "synthetic dataset at %s: %d clips (%d rendered, %d reused)",
        root,
        len(entries),
        rendered,
        len(entries) - rendered,
    )
    return manifest_from_entries(entries, root=root)
