"""RDIoU-guided regression and classification losses.

Every function returns an unreduced scalar; batching and averaging are left
to the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .autodiff import atan, kabs, log, value_of
from .codec import InvalidInputError, RegressionVector
from .rdiou import (
    DEFAULT_CONFIG,
    RDIoUConfig,
    center_penalty_decoupled,
    decouple,
    rdiou_decoupled,
)

_CIOU_SCALE = 4.0 / math.pi**2


@dataclass(frozen=True)
class LossWeights:
    gamma1: float = 0.2  # direction classification
    gamma2: float = 2.0  # box regression

    def __post_init__(self):
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise InvalidInputError("loss weights must be non-negative")


@dataclass(frozen=True)
class QflParams:
    beta1: float = 0.25
    beta2: float = 2.0

    def __post_init__(self):
        if not self.beta1 > 0 or self.beta2 < 0:
            raise InvalidInputError("need beta1 > 0 and beta2 >= 0")


def _rdiou_and_penalty(o, t, cfg):
    bo, bt = decouple(o, t, cfg)
    return rdiou_decoupled(bo, bt), center_penalty_decoupled(bo, bt)


def rdiou_iou_loss(o: RegressionVector, t: RegressionVector, cfg: RDIoUConfig = DEFAULT_CONFIG):
    rd, _ = _rdiou_and_penalty(o, t, cfg)
    return 1.0 - rd


def rdiou_diou_loss(o: RegressionVector, t: RegressionVector, cfg: RDIoUConfig = DEFAULT_CONFIG):
    """``1 - RDIoU + rho_c``, the 4D analogue of the DIoU loss."""
    rd, rho = _rdiou_and_penalty(o, t, cfg)
    return 1.0 - rd + rho


def aspect_term(o: RegressionVector, t: RegressionVector):
    """CIoU aspect-ratio consistency ``v`` on the footprint (l/w)."""
    diff = atan(t.lt / t.wt) - atan(o.lt / o.wt)
    return _CIOU_SCALE * diff * diff


def _alpha(rd, v):
    if value_of(v) == 0.0:
        return 0.0
    return v / ((1.0 - rd) + v)


def ciou_alpha(o: RegressionVector, t: RegressionVector, cfg: RDIoUConfig = DEFAULT_CONFIG) -> float:
    """Trade-off weight of the aspect term, as a plain float."""
    rd, _ = _rdiou_and_penalty(o, t, cfg)
    return value_of(_alpha(value_of(rd), value_of(aspect_term(o, t))))


def rdiou_ciou_loss(
    o: RegressionVector,
    t: RegressionVector,
    cfg: RDIoUConfig = DEFAULT_CONFIG,
    detach_alpha: bool = True,
    alpha: float | None = None,
):
    """DIoU loss plus ``alpha * v``.

    By default ``alpha`` is held constant with respect to the inputs (the
    usual CIoU practice). Passing ``alpha`` pins it to a given number, which
    is how the detached gradient is checked against finite differences.
    """
    rd, rho = _rdiou_and_penalty(o, t, cfg)
    v = aspect_term(o, t)
    if alpha is None:
        if detach_alpha:
            alpha = value_of(_alpha(value_of(rd), value_of(v)))
        else:
            alpha = _alpha(rd, v)
    return 1.0 - rd + rho + alpha * v


def rqfl(rd, y: float, p: QflParams = QflParams()):
    """Quality focal loss with RDIoU ``rd`` as the soft target for score ``y``."""
    y = value_of(y)
    if not 0.0 < y < 1.0:
        raise InvalidInputError(f"score y={y!r} must lie in the open interval (0, 1)")
    rv = value_of(rd)
    if not 0.0 <= rv <= 1.0:
        raise InvalidInputError(f"quality target {rv!r} must lie in [0, 1]")
    mod = kabs(rd - y) ** p.beta2
    return -p.beta1 * mod * ((1.0 - rd) * math.log(1.0 - y) + rd * math.log(y))


def _softplus(x: float) -> float:
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def direction_ce(logit_pos: float, target_bin: int) -> float:
    """Binary cross-entropy of ``sigmoid(logit_pos)`` against a 0/1 direction bin."""
    if target_bin not in (0, 1):
        raise InvalidInputError(f"direction bin must be 0 or 1, got {target_bin!r}")
    if not math.isfinite(logit_pos):
        raise InvalidInputError("logit must be finite")
    return _softplus(-logit_pos) if target_bin == 1 else _softplus(logit_pos)


def direction_target(theta_g: float) -> int:
    return 1 if math.sin(theta_g) >= 0.0 else 0


def total_loss(l_rqfl: float, l_d: float, l_rl: float, w: LossWeights = LossWeights()) -> float:
    return l_rqfl + w.gamma1 * l_d + w.gamma2 * l_rl
