"""Backbone networks: weight containers, topology specs, execution, extraction."""

from .container import WeightContainer, read_container, write_container
from .extract import (
    ExtractionResult,
    clip_flow_volume,
    extract_features,
    preprocess_frame,
    read_clip_frames,
    read_feature,
    read_index,
    write_feature,
)
from .model import FeatureBlock, Network, forward_to_tap, load_network, random_container
from .spec import (
    BUILTIN_SPECS,
    Layer,
    NetworkSpec,
    builtin_spec,
    compute_shapes,
    load_spec,
    parameter_bindings,
    resolve_padding,
    same_pads,
    spec_from_json,
    spec_to_json,
)

__all__ = [
    "WeightContainer",
    "read_container",
    "write_container",
    "ExtractionResult",
    "clip_flow_volume",
    "extract_features",
    "preprocess_frame",
    "read_clip_frames",
    "read_feature",
    "read_index",
    "write_feature",
    "FeatureBlock",
    "Network",
    "forward_to_tap",
    "load_network",
    "random_container",
    "BUILTIN_SPECS",
    "Layer",
    "NetworkSpec",
    "builtin_spec",
    "compute_shapes",
    "load_spec",
    "parameter_bindings",
    "resolve_padding",
    "same_pads",
    "spec_from_json",
    "spec_to_json",
]
