"""Anchor-relative box encoding.

Centers are offset by the anchor and normalised (x, y by the anchor's base
diagonal, z by its height); sizes are plain ratios to the anchor sizes and
yaw is a plain difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Tuple

from .geometry import Box3D


class InvalidInputError(ValueError):
    pass


@dataclass(frozen=True)
class RegressionVector:
    """Seven-value box representation consumed by RDIoU and the losses.

    Entries may be plain floats or :class:`rdbox.autodiff.Dual` values.
    """

    xt: float
    yt: float
    zt: float
    lt: float
    wt: float
    ht: float
    thetat: float

    def as_tuple(self) -> Tuple:
        return tuple(getattr(self, f.name) for f in fields(self))

    @classmethod
    def from_sequence(cls, values) -> "RegressionVector":
        if len(values) != 7:
            raise InvalidInputError(f"expected 7 values, got {len(values)}")
        return cls(*values)


def check_sizes(r: RegressionVector) -> None:
    for name in ("lt", "wt", "ht"):
        v = getattr(r, name)
        if not v > 0:
            raise InvalidInputError(f"size entry {name}={v!r} must be positive")


def anchor_diag(a: Box3D) -> float:
    return math.sqrt(a.l * a.l + a.w * a.w)


def encode(g: Box3D, a: Box3D) -> RegressionVector:
    d = anchor_diag(a)
    return RegressionVector(
        (g.x - a.x) / d,
        (g.y - a.y) / d,
        (g.z - a.z) / a.h,
        g.l / a.l,
        g.w / a.w,
        g.h / a.h,
        g.theta - a.theta,
    )


def decode(r: RegressionVector, a: Box3D) -> Box3D:
    check_sizes(r)
    d = anchor_diag(a)
    return Box3D(
        r.xt * d + a.x,
        r.yt * d + a.y,
        r.zt * a.h + a.z,
        r.lt * a.l,
        r.wt * a.w,
        r.ht * a.h,
        r.thetat + a.theta,
    )


def raw_vector(b: Box3D) -> RegressionVector:
    """World-unit box parameters reused directly as a regression vector.

    Used by the simulations, which compare raw boxes rather than
    anchor-encoded targets.
    """
    return RegressionVector(*b.as_tuple())
