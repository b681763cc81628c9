import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from cdeaudit.model import (
    EntryBC,
    ExitBC,
    InletSignal,
    InvalidProblemError,
    TransportProblem,
    exit_closure,
    nondimensionalize,
    redimensionalize,
    require_valid,
    validate,
)

anything = st.one_of(
    st.floats(allow_nan=True, allow_infinity=True),
    st.integers(-5, 5),
)
positive = st.floats(1e-3, 1e3)


@given(v=anything, D=anything, ell=st.one_of(st.none(), anything), lam=anything, gamma=anything,
       c0=anything, exit_=st.sampled_from([None, ExitBC.ZERO_GRADIENT, ExitBC.THIRD]),
       kind=st.sampled_from(["constant", "step", "pulse", "ramp"]), t_on=anything,
       t_off=st.one_of(st.none(), anything))
def test_validate_is_total(v, D, ell, lam, gamma, c0, exit_, kind, t_on, t_off):
    p = TransportProblem(v=v, D=D, ell=ell, lam=lam, gamma=gamma, c0_init=c0, bc_exit=exit_,
                         c_in=InletSignal(kind, 1.0, t_on, t_off))
    errors = validate(p)
    assert isinstance(errors, list)
    assert all(isinstance(e, str) and ":" in e for e in errors)


def test_validate_collects_every_violation():
    p = TransportProblem(v=-1.0, D=0.0, ell=None, bc_exit=ExitBC.THIRD, c_in=InletSignal("pulse", 1.0, 0.5, 0.2))
    fields = {e.split(":")[0] for e in validate(p)}
    assert fields == {"v", "D", "bc_exit", "c_in"}
    with pytest.raises(InvalidProblemError) as exc:
        require_valid(p)
    assert len(exc.value.violations) == 4


def test_semi_infinite_rules():
    assert validate(TransportProblem(v=1, D=1, ell=None, bc_exit=None)) == []
    assert any("exit" in e for e in validate(TransportProblem(v=1, D=1, ell=1.0, bc_exit=None)))


def test_negative_t_on_is_undefined_at_zero():
    p = TransportProblem(v=1, D=1, c_in=InletSignal("step", 1.0, -0.1))
    assert any("t=0" in e for e in validate(p))


@given(v=positive, D=positive, ell=positive, lam=st.floats(0, 10), gamma=st.floats(0, 10),
       c=st.floats(0.1, 10), c0=st.floats(0, 5), entry=st.sampled_from(list(EntryBC)),
       exit_=st.sampled_from(list(ExitBC)), t_on=st.floats(0, 2), width=st.floats(0.01, 2))
def test_dimensionless_round_trip(v, D, ell, lam, gamma, c, c0, entry, exit_, t_on, width):
    p = TransportProblem(v=v, D=D, ell=ell, lam=lam, gamma=gamma, c0_init=c0, bc_entry=entry, bc_exit=exit_,
                         c_in=InletSignal("pulse", c, t_on, t_on + width))
    q = redimensionalize(nondimensionalize(p))
    for name in ("v", "D", "ell", "lam", "gamma", "c0_init"):
        assert math.isclose(getattr(q, name), getattr(p, name), rel_tol=1e-12, abs_tol=1e-300)
    assert math.isclose(q.c_in.t_on, t_on, rel_tol=1e-12, abs_tol=1e-15)
    assert math.isclose(q.c_in.value, c, rel_tol=1e-12)


@given(P=st.floats(0.1, 500), scale_v=positive, scale_l=positive)
def test_peclet_invariance_of_dimensionless_form(P, scale_v, scale_l):
    a = TransportProblem(v=1.0, D=1.0 / P, ell=1.0, lam=0.3)
    b = TransportProblem(v=scale_v, D=scale_v * scale_l / P, ell=scale_l, lam=0.3 * scale_v / scale_l)
    da, db = nondimensionalize(a), nondimensionalize(b)
    assert math.isclose(da.P, db.P, rel_tol=1e-12)
    assert math.isclose(da.Lambda, db.Lambda, rel_tol=1e-12)


def test_json_round_trip():
    p = TransportProblem(v=2.0, D=0.1, ell=3.0, lam=0.5, gamma=0.2, c0_init=0.1,
                         c_in=InletSignal("pulse", 2.0, 0.5, 1.5), bc_entry=EntryBC.FIRST,
                         bc_exit=ExitBC.THIRD, g_ell=0.3)
    assert TransportProblem.from_json(json.loads(p.dumps())) == p


def test_from_json_rejects_unknown_kinds_together():
    with pytest.raises(InvalidProblemError) as exc:
        TransportProblem.from_json({"v": 1, "D": 1, "bc_entry": "second", "bc_exit": "open"})
    assert len(exc.value.violations) == 2


def test_exit_closure_mapping():
    assert exit_closure(ExitBC.ZERO_GRADIENT, None) == "zero-gradient"
    assert exit_closure(ExitBC.THIRD, None) == "outflow"
    assert exit_closure(ExitBC.THIRD, 0.4) == "robin"


def test_inlet_signal_pieces_and_integral():
    sig = InletSignal("pulse", 2.0, 0.5, 1.5)
    assert sig.pieces() == [(0.0, 0.0), (0.5, 2.0), (1.5, 0.0)]
    assert sig(0.5) == 2.0 and sig(1.5) == 0.0
    assert sig.left_limit(0.5) == 0.0 and sig.left_limit(1.5) == 2.0
    assert math.isclose(sig.integral(0.0, 10.0), 2.0)
    assert math.isclose(sig.integral(1.0, 1.25), 0.5)


@settings(max_examples=50)
@given(t_on=st.floats(0, 3), width=st.floats(0.01, 3), a=st.floats(0, 7), b=st.floats(0, 7))
def test_inlet_integral_is_additive(t_on, width, a, b):
    sig = InletSignal("pulse", 1.3, t_on, t_on + width)
    lo, hi = sorted((a, b))
    mid = 0.5 * (lo + hi)
    assert math.isclose(sig.integral(lo, hi), sig.integral(lo, mid) + sig.integral(mid, hi), abs_tol=1e-12)
