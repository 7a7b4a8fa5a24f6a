"""Dataset manifest: the JSON catalog of clips the pipeline operates on.

A manifest is a JSON object {"schema": 1, "clips": [entry, ...]} where each
entry carries id, path, label, view, split, actor. Paths are resolved
relative to the manifest file's directory.
"""

import dataclasses
import json
import logging
import os
from typing import Tuple

from ..errors import ManifestError

__all__ = ["ClipEntry", "Manifest", "load_manifest", "manifest_from_entries"]

log = logging.getLogger(__name__)

VALID_SPLITS = ("TR", "TE")


@dataclasses.dataclass(frozen=True)
class ClipEntry:
    id: str
    path: str
    label: str
    view: int
    split: str
    actor: str


@dataclasses.dataclass(frozen=True)
class Manifest:
    entries: Tuple[ClipEntry, ...]
    root: str = "."

    def __len__(self):
        return len(self.entries)

    def by_id(self):
        return {e.id: e for e in self.entries}

    def labels(self):
        return sorted({e.label for e in self.entries})

    def views(self):
        return sorted({e.view for e in self.entries})


def _check_entry(idx, obj):
    if not isinstance(obj, dict):
        raise ManifestError(f"clips[{idx}]: entry must be an object, got {type(obj).__name__}")
    problems = []
    for field in ("id", "path", "label", "split"):
        value = obj.get(field)
        if not isinstance(value, str) or not value:
            problems.append(f"{field!r} must be a non-empty string")
    view = obj.get("view")
    if not isinstance(view, int) or isinstance(view, bool) or view < 0:
        problems.append("'view' must be a non-negative integer")
    if "actor" in obj and not isinstance(obj["actor"], (str, int)):
        problems.append("'actor' must be a string or integer")
    if isinstance(obj.get("split"), str) and obj["split"] not in VALID_SPLITS:
        problems.append(f"'split' must be one of {list(VALID_SPLITS)}, got {obj['split']!r}")
    if problems:
        raise ManifestError(f"clips[{idx}] (id={obj.get('id')!r}): " + "; ".join(problems))
    return ClipEntry(
        id=obj["id"],
        path=obj["path"],
        label=obj["label"],
        view=view,
        split=obj["split"],
        actor=str(obj.get("actor", "")),
    )


def _warn_uncovered(entries):
    """Flag (label, view) pairs present in one split but absent in the other."""
    pairs = {"TR": set(), "TE": set()}
    for e in entries:
        pairs[e.split].add((e.label, e.view))
    for split, other in (("TR", "TE"), ("TE", "TR")):
        for pair in sorted(pairs[split] - pairs[other]):
            log.warning(
                "manifest: label %r view %d appears in %s but not in %s",
                pair[0], pair[1], split, other,
            )


def manifest_from_entries(entries, root=".") -> Manifest:
    seen = {}
    for e in entries:
        if e.id in seen:
            raise ManifestError(f"duplicate clip id {e.id!r}")
        seen[e.id] = e
    _warn_uncovered(entries)
    return Manifest(entries=tuple(entries), root=root)


def load_manifest(path) -> Manifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ManifestError(f"manifest {path}: top level must be an object")
    if obj.get("schema") != 1:
        raise ManifestError(f"manifest {path}: expected schema 1, got {obj.get('schema')!r}")
    clips = obj.get("clips")
    if not isinstance(clips, list):
        raise ManifestError(f"manifest {path}: 'clips' must be an array")
    root = os.path.dirname(os.path.abspath(path))
    entries = []
    for idx, entry_obj in enumerate(clips):
        entry = _check_entry(idx, entry_obj)
        resolved = entry.path
        if not os.path.isabs(resolved):
            resolved = os.path.normpath(os.path.join(root, resolved))
        entries.append(dataclasses.replace(entry, path=resolved))
    return manifest_from_entries(entries, root=root)
