import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdbox.geometry import (
    Box3D,
    BoxFileError,
    InvalidBoxError,
    bev_corners,
    bev_iou,
    convex_intersection,
    iou_3d,
    iou_3d_monte_carlo,
    polygon_area,
    read_boxes_csv,
    write_boxes_csv,
)

from conftest import random_box

OCTAGON_AREA = 2 * (math.sqrt(2) - 1)


def square(cx=0.0, cy=0.0, half=1.0):
    return [(cx - half, cy - half), (cx + half, cy - half), (cx + half, cy + half), (cx - half, cy + half)]


def as_set(poly, nd=9):
    return sorted((round(x, nd) + 0.0, round(y, nd) + 0.0) for x, y in poly)


def test_box_rejects_nonpositive_extent():
    with pytest.raises(InvalidBoxError):
        Box3D(0, 0, 0, 1, 0, 1, 0)
    with pytest.raises(InvalidBoxError):
        Box3D(0, 0, 0, 1, 1, -2, 0)


def test_corners_axis_aligned():
    assert as_set(bev_corners(Box3D(0, 0, 0, 2, 2, 1, 0))) == as_set(square())


def test_corners_square_symmetry():
    assert as_set(bev_corners(Box3D(0, 0, 0, 2, 2, 1, math.pi / 2))) == as_set(square())


def test_corners_rotated_45():
    corners = bev_corners(Box3D(1, 1, 0, 2, 1, 1, math.pi / 4))
    c = math.cos(math.pi / 4)
    # hand rotation of the local corner (1, 0.5)
    expected = (1 + c * 1 - c * 0.5, 1 + c * 1 + c * 0.5)
    assert expected == pytest.approx((1.35355339, 2.06066017), abs=1e-8)
    assert any(math.dist(p, expected) < 1e-12 for p in corners)


def test_corners_are_ccw():
    corners = bev_corners(Box3D(0.3, -1, 0, 3, 1, 1, 2.2))
    signed = sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(corners, corners[1:] + corners[:1]))
    assert signed > 0


def test_corners_periodic_in_theta(rng):
    for _ in range(50):
        b = random_box(rng)
        b2 = Box3D(b.x, b.y, b.z, b.l, b.w, b.h, b.theta + 2 * math.pi)
        for p, q in zip(bev_corners(b), bev_corners(b2)):
            assert math.dist(p, q) < 1e-9


def test_clip_identity():
    inter = convex_intersection(square(), square())
    assert polygon_area(inter) == pytest.approx(4.0, abs=1e-12)


def test_clip_disjoint_is_empty():
    assert convex_intersection(square(), square(3.0, 0.0)) == []


def test_clip_touching_edge_is_empty_or_zero():
    inter = convex_intersection(square(), square(2.0, 0.0))
    assert polygon_area(inter) == pytest.approx(0.0, abs=1e-12)


def test_clip_octagon():
    a = square(half=0.5)
    b = bev_corners(Box3D(0, 0, 0, 1, 1, 1, math.pi / 4))
    inter = convex_intersection(a, b)
    assert len(inter) == 8
    assert polygon_area(inter) == pytest.approx(OCTAGON_AREA, abs=1e-12)
    assert OCTAGON_AREA == pytest.approx(0.828427, abs=1e-6)


def test_clip_result_is_convex_ccw(rng):
    for _ in range(200):
        a, b = random_box(rng, center=1.0), random_box(rng, center=1.0)
        inter = convex_intersection(bev_corners(a), bev_corners(b))
        n = len(inter)
        for i in range(n):
            (x0, y0), (x1, y1), (x2, y2) = inter[i], inter[(i + 1) % n], inter[(i + 2) % n]
            assert (x1 - x0) * (y2 - y1) - (y1 - y0) * (x2 - x1) >= -1e-9


def test_clip_area_bounded(rng):
    for _ in range(300):
        a, b = random_box(rng, center=1.5), random_box(rng, center=1.5)
        area = polygon_area(convex_intersection(bev_corners(a), bev_corners(b)))
        assert area <= min(a.l * a.w, b.l * b.w) + 1e-9


def test_iou_identity():
    b = Box3D(0.4, -2, 1, 3.9, 1.6, 1.56, 0.7)
    assert iou_3d(b, b) == pytest.approx(1.0, abs=1e-12)


def test_iou_octagon_cubes():
    a = Box3D(0, 0, 0, 1, 1, 1, 0)
    b = Box3D(0, 0, 0, 1, 1, 1, math.pi / 4)
    expected = OCTAGON_AREA / (2 - OCTAGON_AREA)
    assert expected == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
    assert iou_3d(a, b) == pytest.approx(0.707107, abs=1e-6)
    assert iou_3d(a, b) == pytest.approx(expected, abs=1e-12)


def test_iou_axis_aligned_third():
    a = Box3D(0, 0, 0, 2, 2, 2, 0)
    b = Box3D(1, 0, 0, 2, 2, 2, 0)
    assert iou_3d(a, b) == pytest.approx((1 * 2 * 2) / (8 + 8 - 4), abs=1e-12)


def test_iou_vertical_separation():
    a = Box3D(0, 0, 0, 2, 2, 1, 0)
    assert iou_3d(a, Box3D(0, 0, 1.5, 2, 2, 1, 0)) == 0.0


def test_bev_iou_ignores_height():
    a = Box3D(0, 0, 0, 2, 2, 1, 0)
    b = Box3D(1, 0, 5, 2, 2, 3, 0)
    assert bev_iou(a, b) == pytest.approx(2 / 6)
    assert iou_3d(a, b) == 0.0


def test_iou_symmetric(rng):
    for _ in range(500):
        a, b = random_box(rng), random_box(rng)
        assert abs(iou_3d(a, b) - iou_3d(b, a)) <= 1e-12


def _move(b, dx, dy, dz, rot):
    c, s = math.cos(rot), math.sin(rot)
    return Box3D(c * b.x - s * b.y + dx, s * b.x + c * b.y + dy, b.z + dz, b.l, b.w, b.h, b.theta + rot)


def test_iou_rigid_motion_invariant(rng):
    for _ in range(500):
        a, b = random_box(rng, center=2.0), random_box(rng, center=2.0)
        dx, dy, dz = rng.uniform(-10, 10, 3)
        rot = rng.uniform(-math.pi, math.pi)
        assert abs(iou_3d(a, b) - iou_3d(_move(a, dx, dy, dz, rot), _move(b, dx, dy, dz, rot))) <= 1e-9


box_params = st.tuples(
    st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1),
    st.floats(0.2, 4), st.floats(0.2, 4), st.floats(0.2, 4),
    st.floats(-math.pi, math.pi),
)


@settings(max_examples=200, deadline=None)
@given(box_params, box_params)
def test_iou_in_unit_interval(p, q):
    v = iou_3d(Box3D(*p), Box3D(*q))
    assert 0.0 <= v <= 1.0


def test_monte_carlo_identical_is_one():
    b = Box3D(0, 0, 0, 1, 1, 1, 0.3)
    assert iou_3d_monte_carlo(b, b, 10**5, seed=3) == 1.0


def test_monte_carlo_disjoint_is_zero():
    a = Box3D(0, 0, 0, 1, 1, 1, 0)
    b = Box3D(5, 0, 0, 1, 1, 1, 0.5)
    assert iou_3d_monte_carlo(a, b, 10**5, seed=3) == 0.0
    # overlapping bounds but disjoint solids still counts zero
    c = Box3D(0.9, 0.9, 0, 1, 1, 1, math.pi / 4)
    assert iou_3d(a, c) == 0.0
    assert iou_3d_monte_carlo(a, c, 10**5, seed=3) == 0.0


def test_monte_carlo_octagon():
    a = Box3D(0, 0, 0, 1, 1, 1, 0)
    b = Box3D(0, 0, 0, 1, 1, 1, math.pi / 4)
    assert iou_3d_monte_carlo(a, b, 10**6, seed=11) == pytest.approx(0.7071, abs=0.005)


def test_monte_carlo_deterministic():
    a = Box3D(0, 0, 0, 2, 1, 1, 0.2)
    b = Box3D(0.5, 0.1, 0.2, 1, 3, 1, -0.4)
    assert iou_3d_monte_carlo(a, b, 300_000, 9) == iou_3d_monte_carlo(a, b, 300_000, 9)
    assert iou_3d_monte_carlo(a, b, 300_000, 9) != iou_3d_monte_carlo(a, b, 300_000, 10)


def test_monte_carlo_agrees_on_sample(rng):
    for i in range(40):
        a, b = random_box(rng, center=1.0), random_box(rng, center=1.0)
        assert abs(iou_3d(a, b) - iou_3d_monte_carlo(a, b, 200_000, i)) <= 0.01


def test_box_csv_roundtrip(tmp_path, rng):
    import io

    boxes = [random_box(rng) for _ in range(5)]
    buf = io.StringIO()
    write_boxes_csv(boxes, buf)
    assert read_boxes_csv(io.StringIO(buf.getvalue())) == boxes


@pytest.mark.parametrize(
    "text, line",
    [
        ("x,y,z,l,w,h,theta\n0,0,0,1,1,1,0\n0,0,0,1,abc,1,0\n", 3),
        ("x,y,z,l,w,h,theta\n0,0,0,1,1,1\n", 2),
        ("x,y,z,l,w,h,theta\n0,0,0,1,-1,1,0\n", 2),
        ("a,b,c\n", 1),
        ("", 1),
    ],
)
def test_box_csv_errors_cite_line(text, line):
    import io

    with pytest.raises(BoxFileError) as exc:
        read_boxes_csv(io.StringIO(text))
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)
