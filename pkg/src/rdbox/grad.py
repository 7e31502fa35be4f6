"""Gradients of RDIoU and the losses, plus finite-difference validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional

import numpy as np

from . import losses
from .autodiff import Dual, seed, track_ties, value_of
from .codec import RegressionVector
from .geometry import Box3D, iou_3d
from .rdiou import DEFAULT_CONFIG, RDIoUConfig, rdiou

PARAM_NAMES = ("x", "y", "z", "l", "w", "h", "theta")

LOSS_KINDS = ("diou", "iou", "ciou")


class GradVector7(NamedTuple):
    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


def _dual_vector(o: RegressionVector) -> RegressionVector:
    return RegressionVector(*seed([value_of(v) for v in o.as_tuple()]))


def _as_grad(out) -> GradVector7:
    if isinstance(out, Dual):
        return GradVector7(*(float(v) for v in out.der))
    # output does not depend on the inputs at all
    return GradVector7(*([0.0] * 7))


def value_and_grad(f: Callable, o: RegressionVector, t: RegressionVector):
    """Evaluate ``f(o, t)`` and its gradient with respect to ``o``."""
    out = f(_dual_vector(o), t)
    return value_of(out), _as_grad(out)


def grad_rdiou(o: RegressionVector, t: RegressionVector, cfg: RDIoUConfig = DEFAULT_CONFIG) -> GradVector7:
    return value_and_grad(lambda a, b: rdiou(a, b, cfg), o, t)[1]


def loss_function(kind: str, cfg: RDIoUConfig = DEFAULT_CONFIG) -> Callable:
    if kind == "diou":
        return lambda a, b: losses.rdiou_diou_loss(a, b, cfg)
    if kind == "iou":
        return lambda a, b: losses.rdiou_iou_loss(a, b, cfg)
    if kind == "ciou":
        return lambda a, b: losses.rdiou_ciou_loss(a, b, cfg)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def grad_loss(kind: str, o: RegressionVector, t: RegressionVector, cfg: RDIoUConfig = DEFAULT_CONFIG) -> GradVector7:
    return value_and_grad(loss_function(kind, cfg), o, t)[1]


def grad_rqfl(
    o: RegressionVector,
    t: RegressionVector,
    y: float,
    cfg: RDIoUConfig = DEFAULT_CONFIG,
    p: losses.QflParams = losses.QflParams(),
) -> GradVector7:
    """Gradient of ``rqfl(rdiou(o, t), y)`` with respect to ``o``."""
    return value_and_grad(lambda a, b: losses.rqfl(rdiou(a, b, cfg), y, p), o, t)[1]


def grad_iou3d_numeric(a: Box3D, b: Box3D, step: float = 1e-6) -> GradVector7:
    """Central-difference gradient of :func:`iou_3d` with respect to ``a``.

    Truncation error is O(step**2); ``step`` must stay below every extent of
    ``a`` so the perturbed boxes remain valid.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    base = list(a.as_tuple())
    out = []
    for i in range(7):
        hi, lo = list(base), list(base)
        hi[i] += step
        lo[i] -= step
        h = hi[i] - lo[i]
        out.append((iou_3d(Box3D(*hi), b) - iou_3d(Box3D(*lo), b)) / h)
    return GradVector7(*out)


@dataclass
class FDReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    abs_error: np.ndarray
    kink: np.ndarray
    ok: np.ndarray
    tol: float
    abs_floor: float = 1e-6

    @property
    def passed(self) -> bool:
        return bool(np.all(self.ok | self.kink))

    @property
    def any_kink(self) -> bool:
        return bool(np.any(self.kink))

    def max_rel_error(self) -> float:
        mask = ~self.kink & (np.abs(self.analytic) >= self.abs_floor)
        return float(self.rel_error[mask].max()) if mask.any() else 0.0


def fd_check(
    f: Callable,
    o: RegressionVector,
    t: RegressionVector,
    tol: float = 1e-5,
    step: float = 1e-6,
    tie_tol: float = 1e-9,
    abs_floor: float = 1e-6,
    abs_tol: float = 1e-8,
    numeric_f: Optional[Callable] = None,
) -> FDReport:
    """Compare the dual-number gradient of ``f`` to central differences.

    A component passes when its relative error is within ``tol``, or when the
    analytic value is below ``abs_floor`` and the absolute error within
    ``abs_tol``. A component is flagged as a kink (reported, never failed)
    when a min/max/abs branch is tied within ``tie_tol`` or close enough that
    the +-``step`` stencil crosses it. ``numeric_f`` overrides the function
    that is finite-differenced.
    """
    base = [value_of(v) for v in o.as_tuple()]
    with track_ties() as events:
        out = f(RegressionVector(*seed(base)), t)
    analytic = _as_grad(out).as_array()

    kink = np.zeros(7, dtype=bool)
    for ev in events:
        moving = ev.slope != 0.0
        near = ev.gap <= tie_tol + 2.0 * step * np.abs(ev.slope)
        kink |= moving & near

    g = numeric_f or f
    numeric = np.zeros(7)
    for i in range(7):
        hi, lo = list(base), list(base)
        hi[i] += step
        lo[i] -= step
        h = hi[i] - lo[i]
        fh = value_of(g(RegressionVector(*hi), t))
        fl = value_of(g(RegressionVector(*lo), t))
        numeric[i] = (fh - fl) / h

    abs_err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, abs_err / scale, 0.0)
    ok = (rel <= tol) | ((np.abs(analytic) < abs_floor) & (abs_err <= abs_tol))
    return FDReport(analytic, numeric, rel, abs_err, kink, ok, tol, abs_floor)


def random_probe(rng: np.random.Generator):
    """A (prediction, target, score) triple with overlapping boxes and a generic yaw pair."""
    t_c = rng.uniform(-1.0, 1.0, 3)
    t_s = rng.uniform(0.5, 2.0, 3)
    t_th = rng.uniform(-math.pi, math.pi)
    o_c = t_c + rng.uniform(-0.3, 0.3, 3) * t_s
    o_s = t_s * rng.uniform(0.7, 1.3, 3)
    o_th = t_th + rng.uniform(-0.6, 0.6)
    o = RegressionVector(*o_c, *o_s, o_th)
    t = RegressionVector(*t_c, *t_s, t_th)
    return o, t, float(rng.uniform(0.05, 0.95))


@dataclass
class ValidationRow:
    name: str
    n_points: int = 0
    n_kink_points: int = 0
    n_fail: int = 0
    max_rel_error: float = 0.0
    failures: List[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.n_fail == 0


def validation_targets(cfg: RDIoUConfig = DEFAULT_CONFIG, qfl: losses.QflParams = losses.QflParams()):
    """(name, f, numeric_f) triples covering every differentiable quantity.

    ``f`` and ``numeric_f`` take ``(o, t, y)``; the detached CIoU loss is
    finite-differenced with ``alpha`` pinned at the probe point, since that
    is the function its gradient describes.
    """
    return [
        ("rdiou", lambda o, t, y: rdiou(o, t, cfg), None),
        ("rdiou_diou_loss", lambda o, t, y: losses.rdiou_diou_loss(o, t, cfg), None),
        ("rdiou_iou_loss", lambda o, t, y: losses.rdiou_iou_loss(o, t, cfg), None),
        ("rdiou_ciou_loss", lambda o, t, y: losses.rdiou_ciou_loss(o, t, cfg), "pin-alpha"),
        ("rqfl", lambda o, t, y: losses.rqfl(rdiou(o, t, cfg), y, qfl), None),
    ]


def validate_gradients(
    n: int = 1000,
    seed_value: int = 0,
    tol: float = 1e-5,
    step: float = 1e-6,
    cfg: RDIoUConfig = DEFAULT_CONFIG,
) -> List[ValidationRow]:
    """Run :func:`fd_check` on ``n`` non-kink probe points for every target.

    Probe points where any component of a target sits on a kink are skipped
    for that target and counted; sampling continues until ``n`` clean points
    were checked.
    """
    rows = []
    for name, f, numeric in validation_targets(cfg):
        row = ValidationRow(name)
        rng = np.random.default_rng([seed_value, len(rows)])
        while row.n_points < n:
            o, t, y = random_probe(rng)
            fo = lambda a, b, f=f, y=y: f(a, b, y)
            nf = None
            if numeric == "pin-alpha":
                alpha = losses.ciou_alpha(o, t, cfg)
                nf = lambda a, b, alpha=alpha: losses.rdiou_ciou_loss(a, b, cfg, alpha=alpha)
            rep = fd_check(fo, o, t, tol=tol, step=step, numeric_f=nf)
            if rep.any_kink:
                row.n_kink_points += 1
                continue
            if not rep.passed:
                row.n_fail += 1
                row.failures.append(row.n_points)
            row.max_rel_error = max(row.max_rel_error, rep.max_rel_error())
            row.n_points += 1
        rows.append(row)
    return rows
