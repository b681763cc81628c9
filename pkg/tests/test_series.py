import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdeaudit.analytic.series import SeriesAnalytic, series_field, terms_needed
from cdeaudit.analytic.steady import steady_state_profile
from cdeaudit.fv import solve
from cdeaudit.field import boundary_flux
from cdeaudit.model import InletSignal, TransportProblem

from conftest import column

PAIRS = [("third", "zero-gradient", None), ("first", "zero-gradient", None),
         ("third", "third", 0.4), ("first", "third", 0.4)]


@pytest.mark.parametrize("entry,exit_,g", PAIRS)
def test_pde_and_boundary_residuals(entry, exit_, g):
    p = column(4.0, lam=0.5, gamma=0.1, entry=entry, exit_=exit_, g_ell=g, c0_init=0.2)
    s = SeriesAnalytic(p, 50).series
    P, Lam, Gam = s.P, s.Lambda, s.Gamma
    X = np.linspace(0.0, 1.0, 21)
    for T in (0.05, 0.2, 1.0, 3.0):
        c = s(X, T)
        cx, cxx, ct = (s.derivative(X, T, w) for w in ("X", "XX", "T"))
        assert np.max(np.abs(ct - cxx / P + cx + Lam * c - Gam)) < 1e-8
        if entry == "first":
            assert abs(c[0] - 1.0) < 1e-8
        else:
            assert abs(c[0] - cx[0] / P - 1.0) < 1e-8
        if exit_ == "zero-gradient":
            assert abs(cx[-1]) < 1e-8
        else:
            assert abs(c[-1] - cx[-1] / P - g) < 1e-8


@settings(max_examples=15, deadline=None)
@given(P=st.floats(0.5, 60), Lam=st.floats(0, 2), scale_v=st.floats(0.1, 10), scale_l=st.floats(0.1, 10))
def test_peclet_invariance(P, Lam, scale_v, scale_l):
    a = column(P, lam=Lam, c_in=InletSignal("pulse", 1.0, 0.0, 0.4))
    b = TransportProblem(v=scale_v, D=scale_v * scale_l / P, ell=scale_l, lam=Lam * scale_v / scale_l,
                         c_in=InletSignal("pulse", 1.0, 0.0, 0.4 * scale_l / scale_v))
    X, T = np.linspace(0, 1, 11), np.array([0.1, 0.5, 1.5])
    ca = SeriesAnalytic(a, 40).c(X[None, :], T[:, None])
    cb = SeriesAnalytic(b, 40).c(X[None, :] * scale_l, T[:, None] * scale_l / scale_v)
    assert np.max(np.abs(ca - cb)) < 1e-10


def test_boundary_flux_of_analytic_field():
    p = column(3.0, lam=0.2)
    f = series_field(p, [0.0, 0.4, 1.0], n_terms=50)
    for t in (0.4, 1.0):
        for side, xb in (("entry", 0.0), ("exit", 1.0)):
            expect = p.v * f.analytic.c(xb, t) - p.D * f.analytic.c_x(xb, t)
            assert abs(boundary_flux(f, side, t) - expect) < 1e-12
        assert boundary_flux(f, "entry", t) == pytest.approx(p.v, abs=1e-9)


def test_relaxes_to_steady_state():
    p = column(5.0, lam=0.3)
    sol = SeriesAnalytic(p, 40)
    x = np.linspace(0, 1, 11)
    assert np.max(np.abs(sol.c(x, 40.0) - steady_state_profile(p).c(x))) < 1e-12


def test_pulse_superposition():
    pulse = column(3.0, c_in=InletSignal("pulse", 1.0, 0.0, 0.4))
    step = column(3.0)
    a, b = SeriesAnalytic(pulse, 40), SeriesAnalytic(step, 40)
    for t in (0.6, 1.3):
        assert a.c(0.7, t) == pytest.approx(b.c(0.7, t) - b.c(0.7, t - 0.4), abs=1e-12)


def test_agrees_with_finite_volume():
    p = column(5.0)
    times = [0.2, 0.5, 1.0]
    f = solve(p, 400, times)
    s = series_field(p, times, x=f.x, n_terms=40)
    diff = np.max(np.abs(f.c[1:] - s.c))
    assert diff < 1e-4


def test_large_peclet_switches_to_extended_precision():
    p = column(400.0)
    f = series_field(p, [0.5, 1.0, 1.5], x=np.array([0.25, 0.5, 1.0]), n_terms=terms_needed(400.0, 0.5))
    assert np.all(np.isfinite(f.c))
    assert f.meta["roundoff"] < 1e-9
    assert f.c[2, 0] == pytest.approx(1.0, abs=1e-9)


def test_terms_needed_grows_for_small_times():
    assert terms_needed(10.0, 0.01) > terms_needed(10.0, 0.1) > terms_needed(10.0, 1.0)


def test_outflow_closure_has_no_series():
    with pytest.raises(ValueError, match="g_ell"):
        SeriesAnalytic(column(5.0, exit_="third"))


def test_field_metadata():
    f = series_field(column(2.0), [0.0, 0.5], n_terms=30)
    assert f.provenance == "series"
    assert f.c.shape == (2, 101)
    assert np.allclose(f.c[0], 0.0, atol=1e-9)
