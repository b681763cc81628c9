"""Steady-state profiles on the finite domain."""

from __future__ import annotations

from dataclasses import dataclass, field

import mpmath
import numpy as np

from cdeaudit.model import EntryBC, TransportProblem, exit_closure, require_valid


class NoSteadyStateError(ValueError):
    pass


@dataclass(frozen=True)
class DimensionlessSteady:
    """``C(X) = p(X) + A exp(m1 (X - 1)) + B exp(m2 X)`` on ``0 <= X <= 1``.

    ``p`` is ``Gamma / Lambda`` for decay, ``Gamma X`` otherwise. Anchoring the
    growing exponential at ``X = 1`` keeps both basis functions bounded by 1
    however large the Peclet number gets. ``exact`` holds the same constants
    as mpmath numbers for extended-precision consumers.
    """

    P: float
    Lambda: float
    Gamma: float
    A: float
    B: float
    m1: float
    m2: float
    exact: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def p_const(self) -> float:
        return self.Gamma / self.Lambda if self.Lambda > 0 else 0.0

    @property
    def p_slope(self) -> float:
        return 0.0 if self.Lambda > 0 else self.Gamma

    def __call__(self, X, order: int = 0):
        """Value (``order=0``) or X-derivative of order 1 or 2."""
        X = np.asarray(X, dtype=float)
        e1 = np.exp(self.m1 * (X - 1.0))
        e2 = np.exp(self.m2 * X)
        p = [self.p_const + self.p_slope * X, np.full(X.shape, self.p_slope), np.zeros(X.shape)][order]
        out = p + self.A * self.m1**order * e1 + self.B * self.m2**order * e2
        return out if out.ndim else float(out)


def roots(P, Lambda, ctx=np):
    """Characteristic roots of ``C''/P - C' - Lambda C = 0`` (m1 >= m2)."""
    s = ctx.sqrt(1 + 4 * Lambda / P)
    m1 = P * (1 + s) / 2
    # 1 - s cancels for small Lambda/P; use the conjugate form
    m2 = -2 * Lambda / (1 + s)
    return m1, m2


def dimensionless_steady(
    P: float,
    Lambda: float,
    Gamma: float,
    C_in: float,
    entry: EntryBC | str,
    closure: str,
    G: float | None = None,
    dps: int = 40,
) -> DimensionlessSteady:
    """Solve for the two-exponential steady profile under a boundary pair.

    ``closure`` is ``zero-gradient``, ``robin`` (needs ``G``) or ``outflow``.
    The 2x2 system is solved in ``dps``-digit arithmetic.
    """
    entry = EntryBC(entry)
    if closure not in ("zero-gradient", "robin", "outflow"):
        raise ValueError(f"unknown exit closure {closure!r}")
    if closure == "robin" and G is None:
        raise ValueError("robin exit requires prescribed effluent data G")
    with mpmath.workdps(dps):
        P_, L_, Gm, Cin = (mpmath.mpf(P), mpmath.mpf(Lambda), mpmath.mpf(Gamma), mpmath.mpf(C_in))
        m1, m2 = roots(P_, L_, mpmath)
        f1_0, f2_0 = mpmath.exp(-m1), mpmath.mpf(1)
        f1_1, f2_1 = mpmath.mpf(1), mpmath.exp(m2)
        if Lambda > 0:
            p0 = p1 = Gm / L_
            dp0 = dp1 = mpmath.mpf(0)
        else:
            p0, dp0, p1, dp1 = mpmath.mpf(0), Gm, Gm, Gm

        if entry is EntryBC.FIRST:
            row0, r0 = [f1_0, f2_0], Cin - p0
        else:
            row0, r0 = [f1_0 * (1 - m1 / P_), f2_0 * (1 - m2 / P_)], Cin - p0 + dp0 / P_
        if closure == "zero-gradient":
            row1, r1 = [m1 * f1_1, m2 * f2_1], -dp1
        elif closure == "robin":
            row1, r1 = [f1_1 * (1 - m1 / P_), f2_1 * (1 - m2 / P_)], mpmath.mpf(G) - p1 + dp1 / P_
        else:
            row1, r1 = [f1_1 * (m1 + L_), f2_1 * (m2 + L_)], Gm - dp1 - L_ * p1

        det = row0[0] * row1[1] - row0[1] * row1[0]
        scale = max(abs(v) for v in row0 + row1)
        if abs(det) > mpmath.mpf(10) ** (-dps // 2) * scale**2:
            A = (r0 * row1[1] - row0[1] * r1) / det
            B = (row0[0] * r1 - r0 * row1[0]) / det
        else:
            # Both fluxes prescribed with no decay: the growing exponential is a
            # null mode and a steady state exists only if the fluxes balance.
            A = mpmath.mpf(0)
            B = r0 / row0[1]
            if abs(row1[1] * B - r1) > mpmath.mpf(10) ** (-dps // 2) * max(1, abs(r1)):
                raise NoSteadyStateError(
                    "no steady state: prescribed entry and exit fluxes do not balance without decay"
                )
        exact = {"A": A, "B": B, "m1": m1, "m2": m2, "p_const": p0 if Lambda > 0 else mpmath.mpf(0),
                 "p_slope": mpmath.mpf(0) if Lambda > 0 else Gm}
        return DimensionlessSteady(P, Lambda, Gamma, float(A), float(B), float(m1), float(m2), exact)


class SteadyProfile:
    """Dimensional steady profile ``c_ss(x)`` with analytic derivatives."""

    def __init__(self, problem: TransportProblem, shape: DimensionlessSteady, c_ref: float):
        self.problem = problem
        self.shape = shape
        self.c_ref = c_ref
        self.ell = float(problem.ell)

    def c(self, x, t=None):
        return self.c_ref * self.shape(np.asarray(x) / self.ell)

    def c_x(self, x, t=None):
        return self.c_ref * self.shape(np.asarray(x) / self.ell, 1) / self.ell

    def c_xx(self, x, t=None):
        return self.c_ref * self.shape(np.asarray(x) / self.ell, 2) / self.ell**2

    def c_t(self, x, t=None):
        return np.zeros_like(np.asarray(x, dtype=float))

    __call__ = c


def steady_state_profile(problem: TransportProblem, inlet_value: float | None = None) -> SteadyProfile:
    """Steady profile for a constant inlet (default: the inlet's final value).

    Raises
    ------
    NoSteadyStateError
        When the boundary pair and fate terms admit no bounded steady state.
    """
    require_valid(problem)
    if problem.ell is None:
        raise ValueError("steady profile requires a finite domain")
    cin = problem.c_in.pieces()[-1][1] if inlet_value is None else inlet_value
    P = problem.peclet
    cref = problem.c_ref
    shape = dimensionless_steady(
        P,
        problem.lam * problem.ell / problem.v,
        problem.gamma * problem.ell / (problem.v * cref),
        cin / cref,
        problem.bc_entry,
        exit_closure(problem.bc_exit, problem.g_ell),
        None if problem.g_ell is None else problem.g_ell / cref,
    )
    return SteadyProfile(problem, shape, cref)
