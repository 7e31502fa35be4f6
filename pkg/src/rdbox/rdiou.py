"""Rotation-decoupled IoU.

Each box is lifted to an axis-aligned 4D box: the spatial center and
extents stay as they are and the yaw becomes a fourth coordinate with a
fixed edge ``k``. The IoU of the two 4D boxes is then an ordinary
product-of-overlaps IoU, differentiable in every parameter.

All functions here accept floats or duals inside the
:class:`~rdbox.codec.RegressionVector` fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

from .autodiff import cos, kmax, kmin, sin
from .codec import InvalidInputError, RegressionVector, check_sizes


@dataclass(frozen=True)
class RDIoUConfig:
    k: float = 1.0

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise InvalidInputError(f"k must be positive, got {self.k!r}")


DEFAULT_CONFIG = RDIoUConfig()


@dataclass(frozen=True)
class DecoupledBox4:
    center: Tuple
    extent: Tuple


def decouple(o: RegressionVector, t: RegressionVector, cfg: RDIoUConfig = DEFAULT_CONFIG):
    """Lift a (prediction, target) pair into 4D.

    The yaw coordinates are ``sin(th_o) cos(th_t)`` and ``cos(th_o) sin(th_t)``,
    so their difference is ``sin(th_o - th_t)``. The mapping is not symmetric
    in (o, t) when both yaws are nonzero.
    """
    check_sizes(o)
    check_sizes(t)
    so, co = sin(o.thetat), cos(o.thetat)
    st, ct = sin(t.thetat), cos(t.thetat)
    bo = DecoupledBox4((o.xt, o.yt, o.zt, so * ct), (o.lt, o.wt, o.ht, cfg.k))
    bt = DecoupledBox4((t.xt, t.yt, t.zt, co * st), (t.lt, t.wt, t.ht, cfg.k))
    return bo, bt


def overlap_1d(a_c, t_c, a_e, t_e):
    """Signed overlap of two intervals given by center and length (negative when apart)."""
    return kmin(a_c + a_e / 2.0, t_c + t_e / 2.0) - kmax(a_c - a_e / 2.0, t_c - t_e / 2.0)


def enclosing_1d(a_c, t_c, a_e, t_e):
    return kmax(a_c + a_e / 2.0, t_c + t_e / 2.0) - kmin(a_c - a_e / 2.0, t_c - t_e / 2.0)


def _volume(b: DecoupledBox4):
    l, w, h, k = b.extent
    return l * w * h * k


def _intersection(bo: DecoupledBox4, bt: DecoupledBox4):
    inter = 1.0
    for co, ct, eo, et in zip(bo.center, bt.center, bo.extent, bt.extent):
        # clamp each axis before the product: two negatives must not make a volume
        inter = inter * kmax(overlap_1d(co, ct, eo, et), 0.0)
    return inter


def rdiou_decoupled(bo: DecoupledBox4, bt: DecoupledBox4):
    inter = _intersection(bo, bt)
    return inter / (_volume(bo) + _volume(bt) - inter)


def rdiou(o: RegressionVector, t: RegressionVector, cfg: RDIoUConfig = DEFAULT_CONFIG):
    return rdiou_decoupled(*decouple(o, t, cfg))


def diag_decoupled(bo: DecoupledBox4, bt: DecoupledBox4):
    total = 0.0
    for co, ct, eo, et in zip(bo.center, bt.center, bo.extent, bt.extent):
        total = total + enclosing_1d(co, ct, eo, et) ** 2
    return total


def enclosing_diag(o: RegressionVector, t: RegressionVector, cfg: RDIoUConfig = DEFAULT_CONFIG):
    """Sum over the four axes of the squared enclosing-interval length."""
    return diag_decoupled(*decouple(o, t, cfg))


def center_penalty_decoupled(bo: DecoupledBox4, bt: DecoupledBox4):
    dist = 0.0
    for co, ct in zip(bo.center, bt.center):
        dist = dist + (co - ct) ** 2
    return dist / diag_decoupled(bo, bt)


def center_penalty(o: RegressionVector, t: RegressionVector, cfg: RDIoUConfig = DEFAULT_CONFIG):
    """Squared 4D center distance over :func:`enclosing_diag`; lies in [0, 1)."""
    return center_penalty_decoupled(*decouple(o, t, cfg))
