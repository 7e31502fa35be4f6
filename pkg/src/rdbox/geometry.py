"""Exact geometry of yaw-rotated 3D boxes.

The footprint intersection is computed by clipping one convex quadrilateral
against the other (Sutherland-Hodgman); the 3D IoU multiplies that area by
the vertical overlap. A Monte-Carlo estimator is provided as an independent
oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

Point = Tuple[float, float]
Polygon2D = List[Point]

EPS = 1e-12

BOX_FIELDS = ("x", "y", "z", "l", "w", "h", "theta")


class InvalidBoxError(ValueError):
    pass


@dataclass(frozen=True)
class Box3D:
    """A box with center (x, y, z), extents (l, w, h) and yaw ``theta``.

    ``l`` runs along the local x axis, ``w`` along the local y axis and
    ``h`` is vertical. ``theta`` rotates counter-clockwise about z.
    """

    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        for name in BOX_FIELDS:
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("l", "w", "h"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidBoxError(f"box extent {name}={v!r} must be positive and finite")

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "Box3D":
        if len(values) != 7:
            raise InvalidBoxError(f"expected 7 box parameters, got {len(values)}")
        return cls(*(float(v) for v in values))

    def as_tuple(self) -> Tuple[float, ...]:
        return (self.x, self.y, self.z, self.l, self.w, self.h, self.theta)

    @property
    def volume(self) -> float:
        return self.l * self.w * self.h


def bev_corners(b: Box3D) -> Polygon2D:
    """Footprint of ``b`` in the x-y plane as 4 counter-clockwise vertices."""
    c, s = math.cos(b.theta), math.sin(b.theta)
    hl, hw = b.l / 2.0, b.w / 2.0
    out = []
    for lx, ly in ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)):
        out.append((b.x + c * lx - s * ly, b.y + s * lx + c * ly))
    return out


def polygon_area(poly: Sequence[Point]) -> float:
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * abs(acc)


def _dedupe(poly: Polygon2D) -> Polygon2D:
    out: Polygon2D = []
    for p in poly:
        if out and abs(p[0] - out[-1][0]) < EPS and abs(p[1] - out[-1][1]) < EPS:
            continue
        out.append(p)
    while len(out) > 1 and abs(out[0][0] - out[-1][0]) < EPS and abs(out[0][1] - out[-1][1]) < EPS:
        out.pop()
    return out


def convex_intersection(a: Sequence[Point], b: Sequence[Point]) -> Polygon2D:
    """Intersection of two convex CCW polygons.

    Returns an empty list when the polygons do not overlap in a region of
    positive extent.
    """
    output = list(a)
    if not output or len(b) < 3:
        return []
    n = len(b)
    for i in range(n):
        if not output:
            return []
        (ax, ay), (bx, by) = b[i], b[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        inp = output
        output = []
        s = inp[-1]
        cs = side(s)
        for e in inp:
            ce = side(e)
            if ce >= -EPS:
                if cs < -EPS:
                    t = cs / (cs - ce)
                    output.append((s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])))
                output.append(e)
            elif cs >= -EPS:
                t = cs / (cs - ce)
                output.append((s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])))
            s, cs = e, ce
        output = _dedupe(output)
    if len(output) < 3:
        return []
    return output


def vertical_overlap(a: Box3D, b: Box3D) -> float:
    top = min(a.z + a.h / 2.0, b.z + b.h / 2.0)
    bottom = max(a.z - a.h / 2.0, b.z - b.h / 2.0)
    return max(0.0, top - bottom)


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    return polygon_area(convex_intersection(bev_corners(a), bev_corners(b)))


def bev_iou(a: Box3D, b: Box3D) -> float:
    inter = bev_intersection_area(a, b)
    union = a.l * a.w + b.l * b.w - inter
    return inter / union


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Exact 3D IoU of two yaw-rotated boxes."""
    dz = vertical_overlap(a, b)
    if dz <= 0.0:
        return 0.0
    inter = bev_intersection_area(a, b) * dz
    union = a.volume + b.volume - inter
    return min(1.0, max(0.0, inter / union))


def _bounds(b: Box3D) -> np.ndarray:
    xy = np.asarray(bev_corners(b))
    lo = [xy[:, 0].min(), xy[:, 1].min(), b.z - b.h / 2.0]
    hi = [xy[:, 0].max(), xy[:, 1].max(), b.z + b.h / 2.0]
    return np.array([lo, hi])


def _inside(b: Box3D, pts: np.ndarray) -> np.ndarray:
    """Membership mask for points stored as rows x, y, z of a (3, n) array."""
    c, s = math.cos(b.theta), math.sin(b.theta)
    dx = pts[0] - b.x
    dy = pts[1] - b.y
    lx = c * dx
    lx += s * dy
    ok = np.abs(lx, out=lx) <= b.l / 2.0
    dx *= -s
    dy *= c
    dx += dy
    ok &= np.abs(dx, out=dx) <= b.w / 2.0
    dz = pts[2] - b.z
    ok &= np.abs(dz, out=dz) <= b.h / 2.0
    return ok


def iou_3d_monte_carlo(a: Box3D, b: Box3D, n_samples: int = 1_000_000, seed: int = 0) -> float:
    """Estimate :func:`iou_3d` by uniform sampling of the union's bounding volume.

    Uses a Philox (counter-based) stream, so the estimate is bit-reproducible
    for a given ``(seed, n_samples)``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    ba, bb = _bounds(a), _bounds(b)
    # separated bounding volumes: no sample can land in both
    if np.any(ba[1] < bb[0]) or np.any(bb[1] < ba[0]):
        return 0.0
    lo = np.minimum(ba[0], bb[0])[:, None]
    span = np.maximum(ba[1], bb[1])[:, None] - lo
    rng = np.random.Generator(np.random.Philox(seed))
    n_a = n_b = n_ab = 0
    chunk = 1 << 18
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        pts = rng.random((3, m))
        pts *= span
        pts += lo
        in_a = _inside(a, pts)
        in_b = _inside(b, pts)
        n_a += int(np.count_nonzero(in_a))
        n_b += int(np.count_nonzero(in_b))
        n_ab += int(np.count_nonzero(in_a & in_b))
        done += m
    union = n_a + n_b - n_ab
    if union == 0:
        return 0.0
    return n_ab / union


class BoxFileError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def read_boxes_csv(lines: Iterable[str]) -> List[Box3D]:
    """Parse the ``x,y,z,l,w,h,theta`` box list format.

    Raises :class:`BoxFileError` carrying the 1-based line number of the
    first offending row.
    """
    reader = csv.reader(lines)
    boxes: List[Box3D] = []
    header_seen = False
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in row]
        if not header_seen:
            if tuple(cells) != BOX_FIELDS:
                raise BoxFileError(lineno, f"expected header {','.join(BOX_FIELDS)!r}, got {','.join(cells)!r}")
            header_seen = True
            continue
        if len(cells) != 7:
            raise BoxFileError(lineno, f"expected 7 columns, got {len(cells)}")
        try:
            values = [float(c) for c in cells]
        except ValueError as exc:
            raise BoxFileError(lineno, f"not a number ({exc})") from None
        if not all(math.isfinite(v) for v in values):
            raise BoxFileError(lineno, "non-finite value")
        try:
            boxes.append(Box3D(*values))
        except InvalidBoxError as exc:
            raise BoxFileError(lineno, str(exc)) from None
    if not header_seen:
        raise BoxFileError(1, "empty box file")
    return boxes


def write_boxes_csv(boxes: Iterable[Box3D], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(BOX_FIELDS)
    for b in boxes:
        w.writerow([repr(v) for v in b.as_tuple()])
