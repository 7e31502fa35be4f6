"""Rotation-decoupled IoU for yaw-rotated 3D boxes: geometry, losses, gradients and experiments."""

from .codec import InvalidInputError, RegressionVector, anchor_diag, decode, encode, raw_vector
from .geometry import Box3D, bev_corners, bev_iou, convex_intersection, iou_3d, iou_3d_monte_carlo, polygon_area
from .grad import GradVector7, fd_check, grad_iou3d_numeric, grad_loss, grad_rdiou, grad_rqfl
from .losses import (
    LossWeights,
    QflParams,
    direction_ce,
    direction_target,
    rdiou_ciou_loss,
    rdiou_diou_loss,
    rdiou_iou_loss,
    rqfl,
    total_loss,
)
from .rdiou import RDIoUConfig, center_penalty, decouple, enclosing_diag, overlap_1d, rdiou

__version__ = "0.1.0"
