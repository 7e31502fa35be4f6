"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from typing import List, Optional, Sequence

from . import sim
from .codec import InvalidInputError, raw_vector
from .geometry import Box3D, BoxFileError, InvalidBoxError, bev_iou, iou_3d, read_boxes_csv
from .grad import validate_gradients
from .rdiou import RDIoUConfig, rdiou
from .records import render

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# flags that never influence results and are left out of output headers
_NOT_RECORDED = {"out", "threads", "func", "format"}


class UsageError(Exception):
    pass


def _floats(text: str, n: Optional[int] = None, name: str = "value") -> List[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name}: expected comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"{name}: expected {n} numbers, got {len(vals)}")
    return vals


def _float_list(text):
    vals = _floats(text, name="list")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return tuple(vals)


def _vec(n):
    return lambda text: tuple(_floats(text, n))


def _offset(text):
    """``d`` (distance along the footprint diagonal) or ``x,y,z``."""
    vals = _floats(text, name="offset")
    if len(vals) == 1:
        return sim.diagonal_offset(vals[0]) if vals[0] else (0.0, 0.0, 0.0)
    if len(vals) == 3:
        return tuple(vals)
    raise argparse.ArgumentTypeError("offset: expected one distance or x,y,z")


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("RDBOX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"RDBOX_THREADS must be an integer, got {env!r}")
    return 1


def _meta(args) -> dict:
    meta = {"command": args.command}
    for k in sorted(vars(args)):
        if k in _NOT_RECORDED or k == "command":
            continue
        meta[k] = getattr(args, k)
    return meta


def _emit(args, rows, meta_extra=None, cols=None):
    meta = _meta(args)
    if meta_extra:
        meta.update(meta_extra)
    text = render(rows, args.format, meta, cols)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------- commands


def cmd_iou(args) -> int:
    try:
        with open(args.boxes, encoding="utf-8", newline="") as fh:
            boxes = read_boxes_csv(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {args.boxes}: {exc}")
    except BoxFileError as exc:
        raise UsageError(f"{args.boxes}: {exc}")
    if args.pair:
        pairs = [tuple(p) for p in args.pair]
    else:
        pairs = [(i, j) for i in range(len(boxes)) for j in range(i + 1, len(boxes))]
    cfg = RDIoUConfig(args.k)
    rows = []
    for i, j in pairs:
        if not (0 <= i < len(boxes) and 0 <= j < len(boxes)):
            raise UsageError(f"pair ({i}, {j}) out of range for {len(boxes)} boxes")
        a, b = boxes[i], boxes[j]
        rows.append(
            {
                "i": i,
                "j": j,
                "iou3d": iou_3d(a, b),
                "bev_iou": bev_iou(a, b),
                "rdiou": rdiou(raw_vector(a), raw_vector(b), cfg),
            }
        )
    _emit(args, rows, cols=["i", "j", "iou3d", "bev_iou", "rdiou"])
    return EXIT_OK


def _sweep_spec(args) -> sim.SweepSpec:
    return sim.SweepSpec(
        size=args.size,
        center_offset=args.dc,
        theta_min=args.theta_min,
        theta_max=args.theta_max,
        theta_step=args.theta_step,
        k_values=args.k,
        fd_step=args.fd_step,
    )


def cmd_sweep(args) -> int:
    recs = sim.rotation_value_sweep(_sweep_spec(args))
    _emit(args, [r.as_row() for r in recs])
    return EXIT_OK


def cmd_grad_sweep(args) -> int:
    recs = sim.rotation_gradient_sweep(_sweep_spec(args))
    _emit(args, [r.as_row() for r in recs])
    return EXIT_OK


def cmd_fit(args) -> int:
    gt = Box3D(*args.gt)
    if args.init is not None:
        init = Box3D(*args.init)
    elif args.init_iou is not None:
        init = sim.init_box_at_iou(gt, args.init_iou, args.init_dtheta)
    else:
        dx, dy, dz, dth = args.init_offset
        init = Box3D(gt.x + dx, gt.y + dy, gt.z + dz, gt.l, gt.w, gt.h, gt.theta + dth)
    spec = sim.FitSpec(
        gt, init, args.loss, args.optimizer, args.step_size, args.iterations, args.k, args.fd_step, args.seed
    )
    trace = sim.fit_box(spec)
    extra = {"status": trace.status, "initial_iou3d": trace.initial_iou, "final_iou3d": trace.final_iou}
    extra.update({f"spec_{k}": v for k, v in trace.header.items()})
    _emit(args, [s.as_row() for s in trace.steps], extra)
    print(f"status: {trace.status}", file=sys.stderr)
    return EXIT_OK


def _bench_spec(args, losses=None) -> sim.BenchmarkSpec:
    return sim.BenchmarkSpec(
        n_pairs=args.n,
        seed=args.seed,
        losses=tuple(losses or args.losses.split(",")),
        iou_band=args.iou_band,
        optimizer=args.optimizer,
        step_size=args.step_size,
        iterations=args.iterations,
        k=args.k if isinstance(args.k, float) else 1.0,
        fd_step=args.fd_step,
    )


def cmd_fit_bench(args) -> int:
    res = sim.fit_benchmark(_bench_spec(args), _threads(args))
    if args.rows == "pairs":
        rows = [p.as_row() for p in res.pairs]
    else:
        rows = [s.as_row() for s in res.summary]
    _emit(args, rows)
    return EXIT_OK


def cmd_k_sweep(args) -> int:
    if args.experiment == "sweep":
        spec = sim.SweepSpec(
            size=args.size,
            center_offset=args.dc,
            theta_min=args.theta_min,
            theta_max=args.theta_max,
            theta_step=args.theta_step,
        )
        entries = sim.k_sweep("sweep", args.k, sweep=spec, probe_dtheta=args.probe_dtheta)
    else:
        entries = sim.k_sweep("fit", args.k, bench=_bench_spec(args), threads=_threads(args))
    _emit(args, [e.summary for e in entries])
    return EXIT_OK


def cmd_validate_grad(args) -> int:
    rows = validate_gradients(args.n, args.seed, args.tol, args.step, RDIoUConfig(args.k))
    out = [
        {
            "quantity": r.name,
            "n_points": r.n_points,
            "n_kink_points_skipped": r.n_kink_points,
            "n_fail": r.n_fail,
            "max_rel_error": r.max_rel_error,
            "passed": int(r.passed),
        }
        for r in rows
    ]
    _emit(args, out)
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL


# ---------------------------------------------------------------- parser


def _add_output(p):
    p.add_argument("--out", "-o", default="-", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_sweep_geometry(p):
    p.add_argument("--size", type=_vec(3), default=sim.ANCHOR_SIZE, help="box size l,w,h")
    p.add_argument(
        "--dc", type=_offset, default=(0.0, 0.0, 0.0),
        help="center offset: a distance along the footprint diagonal, or x,y,z "
        "(the offset experiment uses --dc 2)",
    )
    p.add_argument("--theta-min", type=float, default=0.0)
    p.add_argument("--theta-max", type=float, default=math.pi / 2)
    p.add_argument("--theta-step", type=float, default=math.pi / 180)


def _add_fit_opts(p):
    p.add_argument("--optimizer", choices=("gd", "adam"), default="gd")
    p.add_argument("--step-size", type=float, default=None, help="default 0.05 (gd) / 0.01 (adam)")
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--fd-step", type=float, default=1e-6)


def _add_bench_opts(p):
    p.add_argument("--n", type=int, default=100, help="number of random pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iou-band", type=_vec(2), default=(0.1, 0.5))
    _add_fit_opts(p)
    p.add_argument("--threads", type=int, default=None, help="worker processes (env RDBOX_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdbox", description="Rotation-decoupled IoU toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("iou", help="IoU values for box pairs from a CSV file")
    p.add_argument("boxes", help="CSV file with header x,y,z,l,w,h,theta")
    p.add_argument("--pair", nargs=2, type=int, action="append", metavar=("I", "J"))
    p.add_argument("--k", type=float, default=1.0)
    _add_output(p)
    p.set_defaults(func=cmd_iou)

    for name, func, helptext in (
        ("sweep", cmd_sweep, "RDIoU and 3D IoU over a rotation range"),
        ("grad-sweep", cmd_grad_sweep, "x/y/yaw gradients over a rotation range"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_sweep_geometry(p)
        p.add_argument("--k", type=_float_list, default=(1.0,), help="comma-separated k values")
        p.add_argument("--fd-step", type=float, default=1e-6)
        _add_output(p)
        p.set_defaults(func=func)

    p = sub.add_parser("fit", help="fit one box to a ground truth by gradient descent")
    p.add_argument("--gt", type=_vec(7), default=(0.0, 0.0, 0.0) + sim.ANCHOR_SIZE + (0.0,))
    init = p.add_mutually_exclusive_group()
    init.add_argument("--init", type=_vec(7), default=None, help="explicit initial box")
    init.add_argument("--init-offset", type=_vec(4), default=(0.5, 0.0, 0.0, 0.2), help="dx,dy,dz,dtheta from gt")
    init.add_argument("--init-iou", type=float, default=None, help="shift along x until this 3D IoU")
    p.add_argument("--init-dtheta", type=float, default=0.0, help="yaw offset used with --init-iou")
    p.add_argument("--loss", choices=sim.LOSS_KINDS + tuple(sim.LOSS_ALIASES), default="rdiou-diou")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    _add_fit_opts(p)
    _add_output(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fit-bench", help="fit benchmark over seeded random pairs")
    p.add_argument("--losses", default="rdiou-diou,iou3d-numeric")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--rows", choices=("summary", "pairs"), default="summary")
    _add_bench_opts(p)
    _add_output(p)
    p.set_defaults(func=cmd_fit_bench)

    p = sub.add_parser("k-sweep", help="repeat an experiment for several k values")
    p.add_argument("--experiment", choices=("sweep", "fit"), default="sweep")
    p.add_argument("--k", type=_float_list, default=sim.STANDARD_K_VALUES)
    _add_sweep_geometry(p)
    p.add_argument("--probe-dtheta", type=float, default=math.pi / 6)
    p.add_argument("--losses", default="rdiou-diou")
    _add_bench_opts(p)
    _add_output(p)
    p.set_defaults(func=cmd_k_sweep)

    p = sub.add_parser("validate-grad", help="check analytic gradients against finite differences")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--k", type=float, default=1.0)
    _add_output(p)
    p.set_defaults(func=cmd_validate_grad)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rdbox {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, InvalidBoxError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"rdbox {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
