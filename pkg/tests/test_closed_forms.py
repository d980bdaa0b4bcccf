import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torsionlab import closed_forms as cf
from torsionlab import geometry as g
from torsionlab.exceptions import DomainRangeError, HypothesisError

# Frozen oracle: maximum of the torsion function of the unit square
UNIT_SQUARE_CENTRE = 0.0736713532815


def test_unit_square_centre():
    assert cf.torsion_rectangle(1.0, 0.0, 0.5) == pytest.approx(UNIT_SQUARE_CENTRE, abs=1e-12)


def test_rectangle_limit_is_parabola():
    assert cf.torsion_rectangle(64, 0.0, 0.5) == pytest.approx(0.125, abs=1e-12)
    ys = np.linspace(0, 1, 11)
    assert np.allclose(cf.torsion_rectangle(64, 0.0, ys), 0.5 * ys * (1 - ys), atol=1e-12)


def test_rectangle_boundary_and_truncation():
    N = 4.0
    assert cf.torsion_rectangle(N, -2.0, 0.3) == 0.0
    assert cf.torsion_rectangle(N, 2.0, 0.7) == 0.0
    assert cf.torsion_rectangle(N, 1.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    val, trunc = cf.torsion_rectangle_series(N, 1.9, 0.5, tol=1e-12)
    assert trunc.tail_bound <= 1e-12
    assert trunc.n_max % 2 == 1


def test_rectangle_solves_poisson():
    # fourth-order Laplacian stencil on the series
    N, h = 3.0, 1e-2
    for x, y in [(0.0, 0.5), (0.7, 0.3), (-1.1, 0.8)]:
        xs = x + h * np.array([-2, -1, 0, 1, 2])
        ys = y + h * np.array([-2, -1, 0, 1, 2])
        c = np.array([-1, 16, -30, 16, -1]) / (12 * h * h)
        lap = c @ cf.torsion_rectangle(N, xs, y) + c @ cf.torsion_rectangle(N, x, ys)
        assert lap == pytest.approx(-1.0, abs=1e-6)


def test_ellipse_closed_form():
    N = 8.0
    assert cf.torsion_ellipse(N, 0.0, 0.0) == pytest.approx(0.125 * 64 / 65, abs=1e-15)
    assert cf.torsion_ellipse(N, N / 2, 0.0) == 0.0
    H = cf.torsion_ellipse_hessian(N)
    assert np.trace(H) == pytest.approx(-1.0, abs=1e-15)
    with pytest.raises(DomainRangeError):
        cf.torsion_ellipse(N, N, 0.0)


def test_v1_examples():
    assert cf.v1(g.rectangle(4), 0.0, 0.5) == 0.125
    dom = g.omega2(16)
    assert cf.v1(dom, 0.0, 0.0) == 0.0
    with pytest.raises(DomainRangeError):
        cf.v1(dom, 0.0, 1.5)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-6, 6), t=st.floats(0.05, 0.95))
def test_v1_hessian_pure_y(x, t):
    dom = g.omega2(16)
    y = t * g.height(dom, x)
    H = cf.v1_hessian(dom, x, y)
    assert H[1, 1] == -1.0
    assert H[0, 1] == H[1, 0]


def test_v1_hessian_finite_difference_fallback():
    dom = g.custom_height(-8, 8, lambda x: 0 * x, lambda x: 1 - x**2 / 128)
    H = cf.v1_hessian(dom, 1.0, 0.4)
    # v1 = y (f2 - y) / 2  ->  v_xx = y f2'' / 2
    assert H[0, 0] == pytest.approx(0.4 * (-2 / 128) / 2, abs=1e-6)
    assert H[0, 1] == pytest.approx(0.5 * (-2 / 128), abs=1e-8)


def test_error_budget_rectangle_and_omega2():
    b = cf.error_budget(g.rectangle(10), 0.0, 1.0, 1.0)
    assert b.term_osc == 0.0
    assert b.term_exp == pytest.approx(math.exp(-5), rel=1e-14)
    # no-flank oracle: the central window only
    dom = g.omega2(64)
    b = cf.error_budget(dom, 0.0)
    xs = np.linspace(-24, 24, 200_001)
    central = np.where(np.abs(xs) <= 16, xs**2 / 64**2, np.nan)
    osc = np.nanmax(np.exp(-np.abs(xs)) * central)
    assert b.term_osc >= osc - 1e-12
    assert b.total > b.term_exp


def test_error_budget_hypotheses():
    with pytest.raises(HypothesisError):
        cf.error_budget(g.omega1(16), 0.01)
    with pytest.raises(ValueError):
        cf.error_budget(g.rectangle(4), 0.0, c1=0.0)
