"""Rotation-aware Siamese template tracker and evaluation harness."""

__version__ = "0.1.0"

from .geometry import AxisBox, OrientedBox, context_side, extract_patch, rotated_iou
from .tracker import Tracker, TrackerConfig

__all__ = [
    "AxisBox",
    "OrientedBox",
    "context_side",
    "extract_patch",
    "rotated_iou",
    "Tracker",
    "TrackerConfig",
    "__version__",
]
