"""Checkpoint-to-container conversion for flow-stream Inception-3D weights.

This package is the only place that parses deep-learning-framework file
formats; the recognition pipeline itself only ever reads .vwtc containers.
"""
from .container import IntegrityError, scan_container, write_container
from .convert import ConvertedTensor, SourceError, convert, verify
from .namemap import MapEntry, MapError, default_map_path, load_name_map

__all__ = [
    "ConvertedTensor",
    "IntegrityError",
    "MapEntry",
    "MapError",
    "SourceError",
    "convert",
    "default_map_path",
    "load_name_map",
    "scan_container",
    "verify",
    "write_container",
]
