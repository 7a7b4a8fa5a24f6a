from .tvl1 import FlowField, FlowParams, tvl1_flow
from .image import build_pyramid, to_gray, warp_image, resize_bilinear
from .io import CLIP_BOUND, flow_to_network_input, read_flow, write_flow

__all__ = [
    "FlowField",
    "FlowParams",
    "tvl1_flow",
    "build_pyramid",
    "to_gray",
    "warp_image",
    "resize_bilinear",
    "flow_to_network_input",
    "read_flow",
    "write_flow",
    "CLIP_BOUND",
]
