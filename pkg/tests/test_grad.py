import math

import numpy as np
import pytest
import sympy as sp

from rdbox.autodiff import Dual, kabs, kmax, kmin, seed, track_ties
from rdbox.codec import RegressionVector, raw_vector
from rdbox.geometry import Box3D, iou_3d
from rdbox.grad import (
    GradVector7,
    fd_check,
    grad_iou3d_numeric,
    grad_loss,
    grad_rdiou,
    grad_rqfl,
    random_probe,
    validate_gradients,
    value_and_grad,
)
from rdbox.losses import rdiou_ciou_loss, rdiou_diou_loss
from rdbox.rdiou import RDIoUConfig, center_penalty, rdiou

UNIT = RegressionVector(0, 0, 0, 1, 1, 1, 0)
OFFSET = RegressionVector(0.2, 0, 0, 1, 1, 1, 0)
K1 = RDIoUConfig(1.0)


def test_dual_arithmetic_matches_calculus():
    x, y = seed([1.5, -0.5])
    f = (x * x * y - 3.0 / x + y / (x + 2.0)) ** 2
    a, b = 1.5, -0.5
    inner = a * a * b - 3 / a + b / (a + 2)
    dfa = 2 * inner * (2 * a * b + 3 / a**2 - b / (a + 2) ** 2)
    dfb = 2 * inner * (a * a + 1 / (a + 2))
    assert f.val == pytest.approx(inner**2)
    assert f.der == pytest.approx([dfa, dfb])


def test_tie_policy_picks_first_argument():
    a, b = seed([1.0, 1.0])
    assert kmin(a, b) is a
    assert kmax(a, b) is a
    assert kmin(b, a) is b


def test_tie_tracking():
    (x,) = seed([0.0])
    with track_ties() as events:
        kabs(x)
    assert len(events) == 1 and events[0].gap == 0.0
    kabs(x)  # outside the context nothing is recorded
    assert len(events) == 1


def test_grad_rdiou_offset_example():
    g = grad_rdiou(OFFSET, UNIT, K1)
    assert isinstance(g, GradVector7)
    assert g.x == pytest.approx(-2 / 1.2**2, abs=1e-12)
    assert g.x == pytest.approx(-1.388889, abs=1e-6)
    assert g.z == 0.0  # tied z interval: first-branch subgradient


def test_grad_rdiou_yaw_sign():
    o = RegressionVector(0, 0, 0, 1, 1, 1, 0.3)
    g = grad_rdiou(o, UNIT, K1)
    assert g.theta < 0
    f = lambda th: rdiou(RegressionVector(0, 0, 0, 1, 1, 1, th), UNIT, K1)
    assert (f(0.3 + 1e-6) - f(0.3 - 1e-6)) / 2e-6 < 0


def test_grad_diou_offset_example():
    g = grad_loss("diou", OFFSET, UNIT, K1)
    h = 1e-6
    rho = lambda x: center_penalty(RegressionVector(x, 0, 0, 1, 1, 1, 0), UNIT, K1)
    drho = (rho(0.2 + h) - rho(0.2 - h)) / (2 * h)
    assert g.x == pytest.approx(1.388889 + drho, abs=1e-6)


def test_grad_iou_kind_is_negated_rdiou(rng):
    for _ in range(50):
        o, t, _ = random_probe(rng)
        gi = grad_loss("iou", o, t, K1).as_array()
        gr = grad_rdiou(o, t, K1).as_array()
        assert np.array_equal(gi, -gr)


def test_grad_near_minimum_is_small():
    o = RegressionVector(1e-3, -1e-3, 1e-3, 1 + 1e-3, 1 - 1e-3, 1 + 1e-3, 1e-3)
    val, _ = value_and_grad(lambda a, b: rdiou_diou_loss(a, b, K1), o, UNIT)
    assert val < 0.01
    g = grad_loss("diou", o, UNIT, K1).as_array()
    assert np.linalg.norm(g) < 5


def test_grad_loss_unknown_kind():
    with pytest.raises(ValueError):
        grad_loss("giou", OFFSET, UNIT, K1)


def test_grad_rqfl_chain_rule(rng):
    for _ in range(20):
        o, t, y = random_probe(rng)
        rd, gr = value_and_grad(lambda a, b: rdiou(a, b, K1), o, t)
        # d/d(rd) of the focal loss by hand
        beta1, beta2 = 0.25, 2.0
        mod = abs(rd - y) ** beta2
        ce = (1 - rd) * math.log(1 - y) + rd * math.log(y)
        dmod = beta2 * abs(rd - y) ** (beta2 - 1) * math.copysign(1.0, rd - y)
        dce = -math.log(1 - y) + math.log(y)
        dl = -beta1 * (dmod * ce + mod * dce)
        assert grad_rqfl(o, t, y, K1).as_array() == pytest.approx(dl * gr.as_array(), rel=1e-10, abs=1e-14)


def test_iou3d_numeric_identical_boxes():
    b = Box3D(0, 0, 0, 3.9, 1.6, 1.56, 0.4)
    g = grad_iou3d_numeric(b, b)
    assert abs(g.theta) < 1e-6
    assert abs(g.x) < 1e-6


def test_iou3d_numeric_axis_aligned_symbolic():
    xa, la = sp.symbols("x_a l_a", real=True)
    # a spans [xa - la/2, xa + la/2], b spans [0, 2]; y, z extents are 2 for both
    ov = sp.Min(xa + la / 2, 2) - sp.Max(xa - la / 2, 0)
    inter = ov * 4
    iou = inter / (la * 4 + 8 - inter)
    point = {xa: 0, la: 2}
    dx = float(sp.diff(iou, xa).subs(point))
    dl = float(sp.diff(iou, la).subs(point))
    assert float(iou.subs(point)) == pytest.approx(1 / 3)
    g = grad_iou3d_numeric(Box3D(0, 0, 0, 2, 2, 2, 0), Box3D(1, 0, 0, 2, 2, 2, 0))
    assert g.x == pytest.approx(dx, abs=1e-7)
    assert g.l == pytest.approx(dl, abs=1e-7)
    assert dx == pytest.approx(4 / 9)


def test_iou3d_numeric_cubes_yaw_sign():
    a = Box3D(0, 0, 0, 1, 1, 1, 0.3)
    b = Box3D(0, 0, 0, 1, 1, 1, 0.0)
    assert grad_iou3d_numeric(a, b).theta < 0


def test_iou3d_numeric_rejects_bad_step():
    with pytest.raises(ValueError):
        grad_iou3d_numeric(Box3D(0, 0, 0, 1, 1, 1, 0), Box3D(0, 0, 0, 1, 1, 1, 0), 0.0)


def test_fd_check_linear_exact():
    rep = fd_check(lambda o, t: o.xt, OFFSET, UNIT)
    assert rep.passed and not rep.any_kink
    assert np.all(rep.abs_error <= 1e-12)
    assert rep.analytic[0] == 1.0


def test_fd_check_flags_kink_not_fail():
    t = RegressionVector(0.2, 0, 0, 1, 1, 1, 0)
    rep = fd_check(lambda o, t: kabs(o.xt - t.xt), OFFSET, t)
    assert rep.kink[0]
    assert not rep.kink[1:].any()
    assert rep.passed


def test_fd_check_flags_stencil_crossing():
    t = RegressionVector(0.2 + 5e-7, 0, 0, 1, 1, 1, 0)
    rep = fd_check(lambda o, t: kmax(o.xt, t.xt), OFFSET, t)
    assert rep.kink[0]


def test_fd_check_detects_wrong_gradient():
    def f(o, t):
        # value is x**2 but the dual part claims derivative 3x
        if isinstance(o.xt, Dual):
            return Dual(o.xt.val**2, o.xt.der * 3 * o.xt.val)
        return o.xt**2

    rep = fd_check(f, OFFSET, UNIT)
    assert not rep.passed


def test_rdiou_gradients_random_points():
    rows = validate_gradients(200, seed_value=5)
    for r in rows:
        assert r.passed, r
        assert r.n_points == 200


def test_rotation_direction_property():
    t = raw_vector(Box3D(0, 0, 0, 3.9, 1.6, 1.56, 0))
    for dth in np.linspace(0, math.pi / 2, 52)[1:-1]:
        o = raw_vector(Box3D(0, 0, 0, 3.9, 1.6, 1.56, float(dth)))
        assert grad_rdiou(o, t, K1).theta <= 0


def test_ciou_with_live_alpha_matches_finite_differences():
    rng = np.random.default_rng(21)
    f = lambda o, t: rdiou_ciou_loss(o, t, K1, detach_alpha=False)
    checked = 0
    while checked < 200:
        o, t, _ = random_probe(rng)
        # components below 1e-5 sit near the finite-difference round-off floor
        rep = fd_check(f, o, t, abs_floor=1e-5, abs_tol=1e-9)
        if rep.any_kink:
            continue
        assert rep.passed, (o, t, rep.rel_error)
        checked += 1
