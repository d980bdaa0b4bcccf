import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torsionlab import closed_forms as cf
from torsionlab import geometry as g
from torsionlab import kernel as k
from torsionlab.exceptions import HypothesisError, SingularityError


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.05, 20), xi=st.floats(-1, 1))
def test_poisson_rhs_converges(a, xi):
    # both truncations agree once the dropped terms are below exp(-40)
    m = k.poisson_rhs_cutoff(a)
    v = k.poisson_rhs(a, xi, m)
    rounding = 8 * np.finfo(float).eps * v
    assert abs(v - k.poisson_rhs(a, xi, m + 50)) <= k.poisson_rhs_tail_bound(a, m) + rounding


@pytest.mark.parametrize("a", [0.1, 1.0, 7.5])
def test_poisson_closed_form_at_zero(a):
    assert k.poisson_rhs(a, 0.0) == pytest.approx(k.poisson_closed_form(a), rel=1e-13)
    lhs = k.poisson_lhs(a, 0.0, 20_000, accelerate=True)
    assert lhs == pytest.approx(k.poisson_closed_form(a), abs=1e-9)


def test_poisson_residual_within_tail():
    a, xi = 2.0, 0.3
    r = k.poisson_identity_residual(a, xi, 1000)
    assert r <= k.poisson_lhs_tail_bound(1000) + k.poisson_rhs_tail_bound(a, 1000)
    with pytest.raises(ValueError):
        k.poisson_identity_residual(0.0, 0.1, 10)


def test_f_n_structure_small_sample():
    rep = k.check_structure(n_samples=20, seed=3)
    assert rep["ode_residual"] <= 1e-4
    assert rep["jump_defect"] <= 1e-10
    assert rep["asymmetry"] <= 1e-14
    assert rep["boundary_ratio"] <= 1.0


def test_f_n_matches_closed_green():
    # Green's function of f'' - k^2 f on [0, d], times 2/h
    ctx = k.KernelContext(x_tilde=0.0, h_tilde=0.8, d_tilde=3.0)
    n, x, xp = 1, 0.9, 2.1
    kk = n * math.pi / ctx.h_tilde
    d = ctx.d_tilde
    green = -math.sinh(kk * x) * math.sinh(kk * (d - xp)) / (kk * math.sinh(kk * d))
    assert k.f_n(ctx, n, x, xp) == pytest.approx(2 / ctx.h_tilde * green, rel=1e-12)


def test_approx_green_equals_rectangle_green():
    dom = g.rectangle(4)
    ctx = k.KernelContext.at(dom, 0.0)
    p, q = (-0.5, 0.3), (0.4, 0.6)
    ref = k.rect_green_double_series(1.0, ctx.d_tilde, (0.5, 0.3), (1.4, 0.6), n_cutoff=1500)
    assert k.approx_green(dom, ctx, p, q) == pytest.approx(ref, abs=2e-4)


def test_approx_green_errors():
    dom = g.rectangle(4)
    ctx = k.KernelContext.at(dom, 0.0)
    with pytest.raises(SingularityError):
        k.approx_green(dom, ctx, (0.1, 0.3), (0.1, 0.6))
    with pytest.raises(HypothesisError):
        k.approx_green(dom, ctx, (1.5, 0.3), (0.1, 0.6))
    with pytest.raises(HypothesisError):
        k.KernelContext.at(g.omega1(16), 0.05)


def test_decay_rate():
    dom = g.omega2(64)
    ctx = k.KernelContext.at(dom, 0.0)
    rate, _ = k.fit_decay_rate(dom, ctx, (0.0, 0.5), np.linspace(1.0, 4.0, 7))
    assert rate == pytest.approx(math.pi / ctx.h_tilde, rel=0.02)


def test_reconstruction_on_rectangle_is_slice_torsion():
    dom = g.rectangle(10)
    ctx = k.KernelContext.at(dom, 0.0)
    for q in [(0.5, 0.5), (-1.0, 0.25)]:
        val = k.reconstruct_v1(dom, ctx, q)
        assert val == pytest.approx(cf.torsion_rectangle(ctx.d_tilde, *q), abs=1e-6)
