"""DrFER network: set-abstraction branches, cross-over wiring, fusion, heads."""

from .branch import Branch, BranchDecoder, BranchEncoder, ClassifierHead, Encoding
from .checkpoint import (
    STAGE_TAGS,
    Checkpoint,
    check_stage_order,
    checkpoint_id,
    load_checkpoint,
    save_checkpoint,
)
from .fusion import FusionModule
from .layers import (
    SetAbstraction,
    ball_query,
    farthest_point_sample,
    index_points,
    normalize_points,
    square_distance,
)
from .model import DisentangledOutput, DrFERModel, count_parameters

__all__ = [
    "Branch",
    "BranchDecoder",
    "BranchEncoder",
    "ClassifierHead",
    "Encoding",
    "STAGE_TAGS",
    "Checkpoint",
    "check_stage_order",
    "checkpoint_id",
    "load_checkpoint",
    "save_checkpoint",
    "FusionModule",
    "SetAbstraction",
    "ball_query",
    "farthest_point_sample",
    "index_points",
    "normalize_points",
    "square_distance",
    "DisentangledOutput",
    "DrFERModel",
    "count_parameters",
]
