"""Sparse event-based eye tracking.

Integer-only submanifold sparse CNN backbone, float GRU + FC head, an
analytical dataflow latency model and a hardware-aware subnet search.
"""

from .errors import SeeError
from .events import EventClip, VoxelGridConfig, parse_events, slice_clips, voxelize
from .model import BlockSpec, LayerSpec, Model, ModelSpec, quantize_model, run_backbone
from .sparse import SparseTensor, from_dense, to_dense

__version__ = "0.1.0"

__all__ = [
    "BlockSpec", "EventClip", "LayerSpec", "Model", "ModelSpec", "SeeError", "SparseTensor",
    "VoxelGridConfig", "from_dense", "parse_events", "quantize_model", "run_backbone",
    "slice_clips", "to_dense", "voxelize",
]
