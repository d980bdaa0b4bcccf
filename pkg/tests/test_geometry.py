import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torsionlab import geometry as g
from torsionlab.exceptions import DomainRangeError, GeometryError

FAMILIES = [g.rectangle(8), g.ellipse(16), g.omega1(16), g.omega2(16), g.omega2(64)]


def test_height_examples():
    assert g.height(g.rectangle(4), 1.0) == 1.0
    assert g.height(g.omega1(16), 4.0) == pytest.approx(1.0, abs=1e-15)
    assert g.height(g.omega2(16), 2.0) == pytest.approx(1 - 1 / 64, abs=1e-15)


def test_height_out_of_range():
    with pytest.raises(DomainRangeError):
        g.height(g.rectangle(4), 2.5)
    with pytest.raises(DomainRangeError):
        g.dist_to_ends(g.omega1(16), -0.1)


def test_dist_to_ends():
    assert g.dist_to_ends(g.rectangle(10), 0.0) == 5.0
    assert g.dist_to_ends(g.rectangle(10), -5.0) == 0.0
    assert g.dist_to_ends(g.omega1(16), 4.0) == 4.0


@pytest.mark.parametrize("dom", FAMILIES, ids=lambda d: f"{d.kind}{d.N:g}")
def test_family_invariants(dom):
    rng = np.random.default_rng(1)
    xs = rng.uniform(dom.a, dom.b, 1000)
    f1, f2 = dom.f1(xs), dom.f2(xs)
    assert np.all(f1 <= f2 + 1e-15)
    h = g.height(dom, xs)
    assert np.all((h >= -1e-15) & (h <= 1 + 1e-12))
    assert g.validate(dom).valid


def test_validate_flags_problems():
    bad = g.custom_height(0, 10, lambda x: 0 * x, lambda x: 1 + 0.1 * np.sin(x))
    rep = g.validate(bad)
    assert not rep.valid
    assert any("f2" in v["invariant"] or "max h" in v["invariant"] for v in rep.violations)
    dented = g.piecewise_linear([(0, 0), (4, 0), (4, 1), (2, 0.4), (0, 1)])
    rep = g.validate(dented)
    assert not rep.valid
    assert any("concav" in v["invariant"] for v in rep.violations)


def test_length_scale_examples():
    assert g.length_scale(g.rectangle(8)).L == pytest.approx(8.0, abs=1e-9)
    tri = g.custom_height(0, 64, lambda x: 0 * x, lambda x: x / 64)
    assert g.length_scale(tri).L == pytest.approx(4.0, abs=1e-6)
    # oracle: bisection on the window condition for the ellipse profile
    N = 100.0

    def width(L):
        return 2 * (N / 2) * math.sqrt(1 - (1 - L**-2) ** 2) - L

    lo, hi = 1.0, N
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if width(mid) >= 0 else (lo, mid)
    assert g.length_scale(g.ellipse(N)).L == pytest.approx(lo, abs=1e-6)
    assert lo == pytest.approx(11.8815, abs=1e-3)


def test_length_scale_report_invariants():
    for dom in FAMILIES:
        rep = g.length_scale(dom)
        assert dom.N ** (1 / 3) - 1e-6 <= rep.L <= dom.N + 1e-6
        xs = np.linspace(*rep.I, 257)
        assert np.all(g.height(dom, xs) >= 1 - rep.L**-2 - 1e-9)
        assert rep.I_prime[1] - rep.I_prime[0] == pytest.approx(rep.L / 2)


def test_length_scale_monotone():
    assert g.length_scale(g.rectangle(16)).L == pytest.approx(2 * g.length_scale(g.rectangle(8)).L)
    t1 = g.custom_height(0, 64, lambda x: 0 * x, lambda x: x / 64)
    t2 = g.custom_height(0, 128, lambda x: 0 * x, lambda x: x / 128)
    ratio = g.length_scale(t2).L / g.length_scale(t1).L
    assert ratio == pytest.approx(2 ** (1 / 3), abs=1e-3)


def test_concavity_gives_quarter_height():
    for dom in FAMILIES:
        rng = np.random.default_rng(2)
        for xt in rng.uniform(dom.a, dom.b, 200):
            if g.height(dom, xt) < 0.5:
                continue
            r = g.dist_to_ends(dom, xt) / 2
            xs = np.linspace(xt - r, xt + r, 33)
            assert np.all(g.height(dom, xs) >= 0.25 - 1e-12)


def test_property_certificate_reverifies():
    dom = g.omega2(64)
    cert = g.find_property_max(dom, 16.0, 0.5, 0.05)
    assert cert is not None
    assert g.height(dom, cert.x_minus) == pytest.approx(1 - 2 * cert.delta, abs=1e-8)
    assert g.height(dom, cert.x_plus) == pytest.approx(1 - 2 * cert.delta, abs=1e-8)
    dense = np.linspace(cert.x_minus, cert.x_plus, 10 * 32 * int(cert.x_plus - cert.x_minus + 1))
    assert g.error_profile(dom, dense, 0.5, 0.05).max() <= cert.delta / 100


def test_property_certificate_absent_cases():
    # ramp too steep near x = N**0.5
    assert g.find_property_max(g.omega1(16), 4.0, 1.0, 1.0) is None
    # constant height never reaches the level 1 - 2 delta
    assert g.find_property_max(g.rectangle(64), 8.0, 1.0, 1.0) is None
    with pytest.raises(GeometryError):
        g.find_property_max(g.omega2(16), 9.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        g.find_property_max(g.omega2(64), 2.0, 1.0, 1.0)


def test_polygon_normalisation():
    # a thin rhombus tilted by 30 degrees
    base = np.array([(0, 0.5), (5, 0), (10, 0.5), (5, 1)])
    t = math.radians(30)
    rot = base @ np.array([[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]])
    dom = g.piecewise_linear(rot, normalize=True)
    assert g.validate(dom).valid
    assert dom.N == pytest.approx(10.0, rel=1e-9)
    w, _ = g.minimal_width(base)
    assert w == pytest.approx(2 * 5 * 0.5 / math.hypot(5, 0.5), rel=1e-12)


def test_from_config():
    assert g.from_config({"kind": "omega2", "N": 16}).kind == "omega2"
    dom = g.from_config({"kind": "piecewise_linear", "vertices": [[0, 0], [6, 0], [6, 2], [0, 2]]})
    assert g.height(dom, 3.0) == pytest.approx(1.0)
    with pytest.raises(GeometryError):
        g.from_config({"kind": "custom_height"})
    with pytest.raises(GeometryError):
        g.from_config({"kind": "ellipse"})
    with pytest.raises(GeometryError):
        g.from_config({"kind": "disc", "N": 3})


@settings(max_examples=50, deadline=None)
@given(N=st.floats(4, 200), u=st.floats(0, 1))
def test_level_crossing_hits_level(N, u):
    dom = g.omega2(N)
    level = 0.3 + 0.69 * u
    x = g.level_crossing(dom, level, +1)
    assert g.height(dom, x) == pytest.approx(level, abs=1e-8)
