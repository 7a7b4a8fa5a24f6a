"""Name map loading and validation.

A name map is a JSON document:

    {"version": 1,
     "entries": [
       {"source": "Flow/inception_i3d/Conv3d_1a_7x7/conv_3d/w",
        "target": "Conv3d_1a_7x7/conv/kernel",
        "permute": [4, 3, 0, 1, 2]},
       {"source": "Flow/inception_i3d/Conv3d_1a_7x7/batch_norm/beta",
        "target": "Conv3d_1a_7x7/bn/beta",
        "squeeze": true}
     ]}

`permute` (optional) reorders the source axes and must be a permutation of
the source tensor's rank. `squeeze` (optional) drops all length-1 axes
after the permutation, for checkpoints that store per-channel vectors in
broadcastable form. The map must be bijective: no source and no target may
appear twice. Entry order is preserved in the output container.
"""
import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Tuple


class MapError(Exception):
    """Name map is malformed or inconsistent with a source tensor."""


@dataclass(frozen=True)
class MapEntry:
    source: str
    target: str
    permute: Optional[Tuple[int, ...]] = None
    squeeze: bool = False


def default_map_path():
    """Bundled map for the canonical flow-stream Kinetics-400 release."""
    return resources.files("vwtc_convert").joinpath("maps/i3d_flow_kinetics400.json")


def load_name_map(path) -> list:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MapError(f"{path}: cannot read name map: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise MapError(f"{path}: expected a JSON object with version 1")
    raw = doc.get("entries")
    if not isinstance(raw, list):
        raise MapError(f"{path}: 'entries' must be a list")

    entries = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise MapError(f"{path}: entries[{i}] is not an object")
        unknown = set(item) - {"source", "target", "permute", "squeeze"}
        if unknown:
            raise MapError(f"{path}: entries[{i}]: unknown keys {sorted(unknown)}")
        source, target = item.get("source"), item.get("target")
        if not isinstance(source, str) or not isinstance(target, str):
            raise MapError(f"{path}: entries[{i}]: source and target must be strings")
        permute = item.get("permute")
        if permute is not None:
            if not isinstance(permute, list) or not all(isinstance(p, int) for p in permute):
                raise MapError(f"{path}: entries[{i}]: permute must be a list of ints")
            permute = tuple(permute)
        squeeze = item.get("squeeze", False)
        if not isinstance(squeeze, bool):
            raise MapError(f"{path}: entries[{i}]: squeeze must be a boolean")
        entries.append(MapEntry(source, target, permute, squeeze))

    for field in ("source", "target"):
        seen, dups = set(), set()
        for e in entries:
            key = getattr(e, field)
            (dups if key in seen else seen).add(key)
        if dups:
            raise MapError(f"{path}: duplicate {field} names: {sorted(dups)}")
    return entries
