"""Diagnostic experiments comparing RDIoU with the exact 3D IoU.

* rotation sweeps: values and gradients while one box yaws away from the other
* box fitting: first-order descent of a box onto a ground truth under a chosen loss
* fit benchmark: the fitting experiment over many seeded random pairs
* k sweep: any of the above repeated over the rotation edge ``k``

Simulations feed raw world-unit boxes to RDIoU (see :func:`rdbox.codec.raw_vector`).
Every result is a pure function of its settings and seed.
"""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .codec import raw_vector
from .geometry import Box3D, iou_3d
from .grad import grad_iou3d_numeric, loss_function, value_and_grad
from .rdiou import RDIoUConfig, rdiou

ANCHOR_SIZE = (3.9, 1.6, 1.56)
# center distance 2 m along the footprint diagonal; a pure x offset keeps the
# footprint problem mirror-symmetric and the 3D IoU monotone in yaw
def diagonal_offset(distance: float) -> Tuple[float, float, float]:
    c = distance * math.sqrt(0.5)
    return (c, c, 0.0)


DEFAULT_OFFSET = diagonal_offset(2.0)
STANDARD_K_VALUES = (0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8)

LOSS_KINDS = ("rdiou-diou", "rdiou-iou", "rdiou-ciou", "iou3d-numeric")
LOSS_ALIASES = {
    "diou": "rdiou-diou",
    "iou": "rdiou-iou",
    "ciou": "rdiou-ciou",
    "iou3d": "iou3d-numeric",
}

# a loss at or below this is an exact fit: every subgradient choice includes 0
ZERO_LOSS = 1e-12
MIN_SIZE = 1e-3


def canonical_loss(kind: str) -> str:
    kind = LOSS_ALIASES.get(kind, kind)
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss {kind!r}; expected one of {LOSS_KINDS}")
    return kind


def wrap_angle(theta: float) -> float:
    """Wrap into (-pi, pi]; in-range angles are returned unchanged."""
    if -math.pi < theta <= math.pi:
        return theta
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepSpec:
    size: Tuple[float, float, float] = ANCHOR_SIZE
    center_offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    theta_min: float = 0.0
    theta_max: float = math.pi / 2
    theta_step: float = math.pi / 180
    k_values: Tuple[float, ...] = (1.0,)
    fd_step: float = 1e-6

    def __post_init__(self):
        if not self.theta_step > 0:
            raise ValueError("theta_step must be positive")
        if self.theta_max < self.theta_min:
            raise ValueError("empty rotation range")
        if not self.k_values or any(not k > 0 for k in self.k_values):
            raise ValueError("k values must be positive and non-empty")

    def grid(self) -> List[float]:
        span = self.theta_max - self.theta_min
        n = int(round(span / self.theta_step))
        if n == 0:
            return [self.theta_min]
        return [self.theta_min + span * i / n for i in range(n + 1)]

    def boxes(self, dtheta: float) -> Tuple[Box3D, Box3D]:
        """(rotated, reference) pair at rotation difference ``dtheta``."""
        l, w, h = self.size
        ref = Box3D(0.0, 0.0, 0.0, l, w, h, 0.0)
        dx, dy, dz = self.center_offset
        return Box3D(dx, dy, dz, l, w, h, dtheta), ref


@dataclass
class SweepRecord:
    index: int
    dtheta: float
    k: float
    rdiou: float
    iou3d: float
    grad_rdiou_x: Optional[float] = None
    grad_rdiou_y: Optional[float] = None
    grad_rdiou_theta: Optional[float] = None
    grad_iou3d_x: Optional[float] = None
    grad_iou3d_y: Optional[float] = None
    grad_iou3d_theta: Optional[float] = None

    def as_row(self) -> Dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def rotation_value_sweep(spec: SweepSpec) -> List[SweepRecord]:
    out = []
    for dtheta in spec.grid():
        o, t = spec.boxes(dtheta)
        iou = iou_3d(o, t)
        for k in spec.k_values:
            rd = rdiou(raw_vector(o), raw_vector(t), RDIoUConfig(k))
            out.append(SweepRecord(len(out), dtheta, k, rd, iou))
    return out


def rotation_gradient_sweep(spec: SweepSpec) -> List[SweepRecord]:
    """Values plus x, y, yaw gradients (analytic for RDIoU, numeric for 3D IoU)."""
    out = []
    for dtheta in spec.grid():
        o, t = spec.boxes(dtheta)
        iou = iou_3d(o, t)
        gi = grad_iou3d_numeric(o, t, spec.fd_step)
        for k in spec.k_values:
            cfg = RDIoUConfig(k)
            rd, gr = value_and_grad(lambda a, b: rdiou(a, b, cfg), raw_vector(o), raw_vector(t))
            out.append(
                SweepRecord(
                    len(out), dtheta, k, rd, iou,
                    gr.x, gr.y, gr.theta,
                    gi.x, gi.y, gi.theta,
                )
            )
    return out


# ---------------------------------------------------------------- fitting


@dataclass(frozen=True)
class FitSpec:
    gt: Box3D
    init: Box3D
    loss: str = "rdiou-diou"
    optimizer: str = "gd"
    step_size: Optional[float] = None
    iterations: int = 500
    k: float = 1.0
    fd_step: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "loss", canonical_loss(self.loss))
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step size must be positive")

    @property
    def lr(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 0.05 if self.optimizer == "gd" else 0.01

    def header(self) -> Dict:
        return {
            "gt": list(self.gt.as_tuple()),
            "init": list(self.init.as_tuple()),
            "loss": self.loss,
            "optimizer": self.optimizer,
            "step_size": self.lr,
            "iterations": self.iterations,
            "k": self.k,
            "fd_step": self.fd_step,
        }


@dataclass
class FitStep:
    step: int
    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    theta: float
    loss: float
    iou3d: float
    grad_norm: float

    def as_row(self) -> Dict:
        return asdict(self)


@dataclass
class FitTrace:
    header: Dict
    steps: List[FitStep] = field(default_factory=list)
    status: str = "completed"

    @property
    def initial_iou(self) -> float:
        return self.steps[0].iou3d

    @property
    def final_iou(self) -> float:
        return self.steps[-1].iou3d

    @property
    def final_box(self) -> Box3D:
        s = self.steps[-1]
        return Box3D(s.x, s.y, s.z, s.l, s.w, s.h, s.theta)


def loss_and_grad(kind: str, box: Box3D, gt: Box3D, k: float = 1.0, fd_step: float = 1e-6):
    """Loss value and its gradient (numpy, length 7) w.r.t. the raw parameters of ``box``."""
    kind = canonical_loss(kind)
    if kind == "iou3d-numeric":
        value = 1.0 - iou_3d(box, gt)
        grad = -grad_iou3d_numeric(box, gt, fd_step).as_array()
    else:
        f = loss_function(kind.split("-")[1], RDIoUConfig(k))
        value, g = value_and_grad(f, raw_vector(box), raw_vector(gt))
        grad = g.as_array()
    if value <= ZERO_LOSS:
        grad = np.zeros(7)
    return value, grad


def fit_box(spec: FitSpec) -> FitTrace:
    """Descend ``spec.loss`` from ``spec.init`` toward ``spec.gt``.

    One trace row per state, including the initial one. Sizes are kept at or
    above ``MIN_SIZE`` and yaw is wrapped into (-pi, pi] after every step. A
    non-finite parameter ends the run with status ``diverged``.
    """
    trace = FitTrace(spec.header())
    params = np.array(spec.init.as_tuple(), dtype=float)
    m = np.zeros(7)
    v = np.zeros(7)
    b1, b2, eps = 0.9, 0.999, 1e-8
    lr = spec.lr
    stalled = True
    for it in range(spec.iterations + 1):
        box = Box3D(*params)
        value, grad = loss_and_grad(spec.loss, box, spec.gt, spec.k, spec.fd_step)
        iou = iou_3d(box, spec.gt)
        trace.steps.append(FitStep(it, *params.tolist(), value, iou, float(np.linalg.norm(grad))))
        if not (math.isfinite(value) and np.all(np.isfinite(grad))):
            trace.status = "diverged"
            return trace
        if it == spec.iterations:
            break
        if np.any(grad != 0.0):
            stalled = False
        if spec.optimizer == "gd":
            update = lr * grad
        else:
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad * grad
            mhat = m / (1 - b1 ** (it + 1))
            vhat = v / (1 - b2 ** (it + 1))
            update = lr * mhat / (np.sqrt(vhat) + eps)
        params = params - update
        if not np.all(np.isfinite(params)):
            trace.status = "diverged"
            return trace
        params[3:6] = np.maximum(params[3:6], MIN_SIZE)
        params[6] = wrap_angle(params[6])
    last = trace.steps[-1]
    if last.loss <= ZERO_LOSS:
        trace.status = "converged"
    elif stalled and last.iou3d == 0.0:
        trace.status = "no-overlap stall"
    return trace


def init_box_at_iou(gt: Box3D, target_iou: float, dtheta: float = 0.0, tol: float = 1e-10) -> Box3D:
    """A copy of ``gt`` yawed by ``dtheta`` and shifted along +x until its IoU equals ``target_iou``.

    ``target_iou == 0`` places the box just clear of ``gt``.
    """
    if not 0.0 <= target_iou <= 1.0:
        raise ValueError("target IoU must be in [0, 1]")

    def at(shift):
        return Box3D(gt.x + shift, gt.y, gt.z, gt.l, gt.w, gt.h, gt.theta + dtheta)

    far = math.hypot(gt.l, gt.w) * 1.01
    if target_iou == 0.0:
        return at(far)
    if iou_3d(at(0.0), gt) < target_iou:
        raise ValueError(f"IoU {target_iou} is unreachable with yaw offset {dtheta}")
    lo, hi = 0.0, far
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if iou_3d(at(mid), gt) >= target_iou:
            lo = mid
        else:
            hi = mid
    return at(lo)


# ---------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class BenchmarkSpec:
    n_pairs: int = 100
    seed: int = 0
    losses: Tuple[str, ...] = ("rdiou-diou", "iou3d-numeric")
    iou_band: Tuple[float, float] = (0.1, 0.5)
    optimizer: str = "gd"
    step_size: Optional[float] = None
    iterations: int = 500
    k: float = 1.0
    fd_step: float = 1e-6
    max_tries: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "losses", tuple(canonical_loss(x) for x in self.losses))
        lo, hi = self.iou_band
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("IoU band must satisfy 0 <= lo < hi <= 1")
        if self.n_pairs < 0:
            raise ValueError("n_pairs must be >= 0")


@dataclass
class PairResult:
    pair: int
    loss: str
    initial_iou: float
    final_iou: float
    final_loss: float
    status: str

    def as_row(self) -> Dict:
        return asdict(self)


@dataclass
class SummaryRow:
    loss: str
    n: int
    mean_initial_iou: float
    mean_final_iou: float
    median_final_iou: float
    n_final_ge_0_7: int
    frac_final_ge_0_7: float

    def as_row(self) -> Dict:
        return asdict(self)


@dataclass
class BenchmarkResult:
    spec: BenchmarkSpec
    pairs: List[PairResult]
    summary: List[SummaryRow]


def sample_pair(index: int, spec: BenchmarkSpec) -> Optional[Tuple[Box3D, Box3D]]:
    """Ground truth and initial box for pair ``index``, or None if the band was never hit."""
    rng = np.random.default_rng([spec.seed, index])
    lo, hi = spec.iou_band
    cx, cy = rng.uniform(-2.0, 2.0, 2)
    cz = rng.uniform(-0.5, 0.5)
    size = np.array(ANCHOR_SIZE) * rng.uniform(0.8, 1.2, 3)
    yaw = wrap_angle(rng.uniform(-math.pi, math.pi))
    gt = Box3D(cx, cy, cz, *size.tolist(), yaw)
    for _ in range(spec.max_tries):
        dx, dy = rng.uniform(-1.5, 1.5, 2)
        dz = rng.uniform(-0.3, 0.3)
        scale = rng.uniform(0.7, 1.3, 3)
        dyaw = rng.uniform(-math.pi / 2, math.pi / 2)
        init = Box3D(cx + dx, cy + dy, cz + dz, *(size * scale).tolist(), wrap_angle(yaw + dyaw))
        if lo < iou_3d(init, gt) < hi:
            return gt, init
    return None


def _run_pair(args) -> List[PairResult]:
    index, spec = args
    pair = sample_pair(index, spec)
    if pair is None:
        return [PairResult(index, loss, math.nan, math.nan, math.nan, "no-init") for loss in spec.losses]
    gt, init = pair
    out = []
    for loss in spec.losses:
        fs = FitSpec(
            gt, init, loss, spec.optimizer, spec.step_size, spec.iterations, spec.k, spec.fd_step, spec.seed
        )
        tr = fit_box(fs)
        out.append(PairResult(index, loss, tr.initial_iou, tr.final_iou, tr.steps[-1].loss, tr.status))
    return out


def parallel_map(func, items: Sequence, threads: int = 1) -> List:
    """Order-preserving map; worker count never changes the results."""
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(func, items))


def summarize(spec: BenchmarkSpec, pairs: Sequence[PairResult]) -> List[SummaryRow]:
    rows = []
    for loss in spec.losses:
        done = [p for p in pairs if p.loss == loss and p.status != "no-init"]
        if not done:
            continue
        final = [p.final_iou for p in done]
        hits = sum(1 for f in final if f >= 0.7)
        rows.append(
            SummaryRow(
                loss,
                len(done),
                statistics.fmean(p.initial_iou for p in done),
                statistics.fmean(final),
                statistics.median(final),
                hits,
                hits / len(done),
            )
        )
    return rows


def fit_benchmark(spec: BenchmarkSpec, threads: int = 1) -> BenchmarkResult:
    results = parallel_map(_run_pair, [(i, spec) for i in range(spec.n_pairs)], threads)
    pairs = [r for group in results for r in group]
    pairs.sort(key=lambda p: (p.pair, spec.losses.index(p.loss)))
    return BenchmarkResult(spec, pairs, summarize(spec, pairs))


# ---------------------------------------------------------------- k sweep


@dataclass
class KSweepEntry:
    k: float
    summary: Dict
    records: List


def k_sweep(
    kind: str,
    k_values: Sequence[float] = STANDARD_K_VALUES,
    sweep: Optional[SweepSpec] = None,
    bench: Optional[BenchmarkSpec] = None,
    probe_dtheta: float = math.pi / 6,
    threads: int = 1,
) -> List[KSweepEntry]:
    """Repeat a value sweep (``kind="sweep"``) or fit benchmark (``kind="fit"``) per ``k``."""
    out = []
    for k in k_values:
        if kind == "sweep":
            spec = replace(sweep or SweepSpec(), k_values=(k,))
            recs = rotation_value_sweep(spec)
            probe = min(recs, key=lambda r: (abs(r.dtheta - probe_dtheta), r.index))
            summary = {
                "k": k,
                "n_points": len(recs),
                "mean_rdiou": statistics.fmean(r.rdiou for r in recs),
                "probe_dtheta": probe.dtheta,
                "probe_rdiou": probe.rdiou,
                "probe_iou3d": probe.iou3d,
            }
        elif kind == "fit":
            spec = replace(bench or BenchmarkSpec(losses=("rdiou-diou",)), k=k)
            res = fit_benchmark(spec, threads)
            recs = res.pairs
            summary = {"k": k}
            for row in res.summary:
                summary[f"{row.loss}_mean_final_iou"] = row.mean_final_iou
                summary[f"{row.loss}_median_final_iou"] = row.median_final_iou
                summary[f"{row.loss}_frac_final_ge_0_7"] = row.frac_final_ge_0_7
        else:
            raise ValueError(f"unknown k-sweep experiment {kind!r}; expected 'sweep' or 'fit'")
        out.append(KSweepEntry(k, summary, recs))
    return out
