"""Self-supervised multi-partition reconstruction for multispectral CT."""

from ._splitct import (
    FormatError,
    IoError,
    Settings,
    add_noise,
    cp_fast,
    default_detector_count,
    evaluate,
    forward,
    generate_phantom,
    infer,
    read_tensor,
    write_tensor,
)

__all__ = [
    "FormatError",
    "IoError",
    "Settings",
    "add_noise",
    "cp_fast",
    "default_detector_count",
    "evaluate",
    "forward",
    "generate_phantom",
    "infer",
    "read_tensor",
    "write_tensor",
]
