"""Landmark-driven RGBD face avatars.

Thin wrapper over the compiled core: oracle faces, landmark maps, the wire
protocol, evaluation metrics and generator inference.
"""

from ._hmdface import (  # noqa: F401
    LANDMARK_COUNT,
    WIRE_FRAME_BYTES,
    HmdfaceError,
    decode_frame,
    depth_stats,
    encode_frame,
    generate,
    landmarks_of,
    masked_ssim,
    mirror_index,
    payload_bitrate,
    postprocess,
    rasterize,
    render_face,
)

__all__ = [
    "LANDMARK_COUNT",
    "WIRE_FRAME_BYTES",
    "HmdfaceError",
    "decode_frame",
    "depth_stats",
    "encode_frame",
    "generate",
    "landmarks_of",
    "masked_ssim",
    "mirror_index",
    "payload_bitrate",
    "postprocess",
    "rasterize",
    "render_face",
]
