import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdeaudit.analytic.semiinf import (
    SemiInfiniteSolution,
    semiinf_field,
    semiinf_flux_concentration,
    semiinf_resident_concentration,
)
from cdeaudit.audit import flux_transform
from cdeaudit.model import InletSignal, TransportProblem


def mp_flux(x, t, v, D):
    with mpmath.workdps(40):
        x, t, v, D = map(mpmath.mpf, (x, t, v, D))
        s = 2 * mpmath.sqrt(D * t)
        return float((mpmath.erfc((x - v * t) / s) + mpmath.exp(v * x / D) * mpmath.erfc((x + v * t) / s)) / 2)


def mp_resident(x, t, v, D):
    with mpmath.workdps(40):
        x, t, v, D = map(mpmath.mpf, (x, t, v, D))
        s = 2 * mpmath.sqrt(D * t)
        zm, zp = (x - v * t) / s, (x + v * t) / s
        return float(
            mpmath.erfc(zm) / 2
            + mpmath.sqrt(v**2 * t / (mpmath.pi * D)) * mpmath.exp(-zm**2)
            - (1 + v * x / D + v**2 * t / D) * mpmath.exp(v * x / D) * mpmath.erfc(zp) / 2
        )


def test_pinned_unit_values():
    # oracle values at x = t = v = D = 1, checked against 40-digit evaluation
    assert semiinf_flux_concentration(1, 1, 1, 1) == pytest.approx(0.7137917880779035, rel=1e-15)
    assert semiinf_resident_concentration(1, 1, 1, 1) == pytest.approx(0.4228142193140458, rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(0, 50), t=st.floats(1e-3, 50), P=st.floats(0.1, 1e4))
def test_matches_extended_precision(x, t, P):
    v, D = 1.0, 1.0 / P
    assert semiinf_flux_concentration(x, t, v, D) == pytest.approx(mp_flux(x, t, v, D), rel=1e-11, abs=1e-14)
    assert semiinf_resident_concentration(x, t, v, D) == pytest.approx(mp_resident(x, t, v, D), rel=1e-10, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0, 20), t=st.floats(1e-2, 20), P=st.floats(0.1, 1e5), lam=st.sampled_from([0.0, 1e-9, 0.5, 3.0]))
def test_bounded_and_finite(x, t, P, lam):
    for f in (semiinf_flux_concentration, semiinf_resident_concentration):
        c = f(x, t, 1.0, 1.0 / P, lam)
        assert np.isfinite(c) and -1e-12 <= c <= 1 + 1e-12


def test_transform_identity_on_grid():
    x = np.linspace(0, 5, 10)
    t = np.linspace(0.05, 5, 10)
    X, T = np.meshgrid(x, t)
    for lam in (0.0, 0.5):
        res = flux_transform(SemiInfiniteSolution(1.0, 1.0, lam, 1.0, "resident"), 1.0, 1.0)
        diff = np.abs(res.c(X, T) - semiinf_flux_concentration(X, T, 1.0, 1.0, lam))
        assert diff.max() < 1e-10


@pytest.mark.parametrize("kind", ["resident", "flux"])
@pytest.mark.parametrize("lam", [0.0, 0.7])
def test_solutions_satisfy_the_pde(kind, lam):
    v, D = 1.3, 0.4
    sol = SemiInfiniteSolution(v, D, lam, 1.0, kind)
    x, t, hx = 0.8, 0.9, 1e-4
    cxx = (sol.c(x + hx, t) - 2 * sol.c(x, t) + sol.c(x - hx, t)) / hx**2
    resid = sol.c_t(x, t) - (D * cxx - v * sol.c_x(x, t) - lam * sol.c(x, t))
    assert abs(resid) < 1e-6


def test_entry_conditions():
    v, D = 1.0, 0.5
    flux = SemiInfiniteSolution(v, D, 0.0, 1.0, "flux")
    res = SemiInfiniteSolution(v, D, 0.0, 1.0, "resident")
    for t in (0.1, 1.0, 4.0):
        assert flux.c(0.0, t) == pytest.approx(1.0, abs=1e-14)
        assert v * res.c(0.0, t) - D * res.c_x(0.0, t) == pytest.approx(v, abs=1e-13)


def test_analytic_derivatives_match_differences():
    sol = SemiInfiniteSolution(1.0, 0.3, 0.2, 1.0, "resident")
    x, t, h = 1.1, 0.7, 1e-6
    assert sol.c_x(x, t) == pytest.approx((sol.c(x + h, t) - sol.c(x - h, t)) / (2 * h), rel=1e-7)
    assert sol.c_t(x, t) == pytest.approx((sol.c(x, t + h) - sol.c(x, t - h)) / (2 * h), rel=1e-7)


def test_field_superposes_pulse():
    p = TransportProblem(v=1.0, D=0.1, ell=None, bc_exit=None, c_in=InletSignal("pulse", 2.0, 0.0, 0.5))
    f = semiinf_field(p, [0.0, 0.3, 1.0], [0.0, 0.5, 1.0])
    assert f.provenance == "semiinf"
    assert np.all(f.c[0] == 0.0)
    expect = 2 * (semiinf_resident_concentration(0.5, 1.0, 1.0, 0.1) - semiinf_resident_concentration(0.5, 0.5, 1.0, 0.1))
    assert f.c[2, 1] == pytest.approx(expect, rel=1e-12)


def test_field_rejects_finite_domain():
    with pytest.raises(ValueError):
        semiinf_field(TransportProblem(v=1.0, D=0.1), [0.5], [0.0])
