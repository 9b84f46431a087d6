import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmflow import (
    Box,
    BoxEscape,
    DoubleWell,
    QuadraticLoad,
    default_scan_resolution,
    global_argmin,
    newton_root,
)

import oracles


def test_default_scan_resolution():
    assert default_scan_resolution(1) == 121
    assert default_scan_resolution(2) == 41
    assert default_scan_resolution(3) == 17
    assert default_scan_resolution(4) == 17


def test_newton_root_cubic():
    dw = DoubleWell()
    x, rn, it, ok = newton_root(dw, 0.0, [-1.2], 1e-12, 60, box=dw.box)
    assert ok and rn <= 1e-12
    assert x[0] == pytest.approx(-1.324717957244746, abs=1e-10)


def test_global_argmin_quadratic_exact():
    q = QuadraticLoad([0.0], [1.0])
    # minimize x^2/2 - t x + w/2 (x - c)^2 -> x = (t + w c) / (1 + w)
    sol = global_argmin(q, 1.0, np.array([0.2]), 3.0)
    assert sol.x[0] == pytest.approx((1.0 + 3.0 * 0.2) / 4.0, abs=1e-10)
    assert sol.residual <= 1e-9
    assert sol.improvement >= -1e-12


def test_global_argmin_picks_global_well():
    dw = DoubleWell()
    # weak tether from the high well must hop to the low well at t = 2
    sol = global_argmin(dw, 2.0, np.array([-1.0]), 0.05)
    assert sol.x[0] > 0.9


def test_tie_break_flag_on_symmetric_envelope():
    dw = DoubleWell()
    sol = global_argmin(dw, 1.0, np.array([0.0]), 0.5)
    assert sol.tie_break
    assert abs(sol.x[0]) == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-9)


def test_box_escape_raised():
    q = QuadraticLoad([0.0], [1.0], box=Box(np.array([-0.5]), np.array([0.5])))
    with pytest.raises(BoxEscape):
        global_argmin(q, 2.0, np.array([0.0]), 1e-6)


@settings(max_examples=60, deadline=None)
@given(
    t=st.floats(0.0, 2.0),
    c=st.floats(-2.0, 2.0),
    w=st.floats(1e-3, 50.0),
)
def test_prox_matches_grid_oracle(t, c, w):
    dw = DoubleWell()
    sol = global_argmin(dw, t, np.array([c]), w)

    def obj(xs):
        return dw.energy(t, xs[:, None]) + 0.5 * w * (xs - c) ** 2

    ref = oracles.grid_min(obj, -2.5, 2.5)
    assert sol.objective <= ref + 1e-7
    assert sol.residual <= 1e-9
    assert sol.improvement >= -1e-12


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0.0, 2.0), c=st.floats(-1.5, 1.5))
def test_prox_certificate_never_worse_than_center(t, c):
    dw = DoubleWell()
    w = 2.0
    sol = global_argmin(dw, t, np.array([c]), w)
    assert sol.objective <= dw.eval(t, [c]) + 1e-12
