"""
Eigenfunction-series solutions on the finite domain.

The dimensionless solution is

    C(X, T) = C_ss(X) + sum_n A_n psi_n(X) exp(-mu_n T),
    psi_n = exp(P X / 2) u_n(X),   mu_n = beta_n**2 / P + P / 4 + Lambda,

where ``u_n`` are the eigenfunctions of :mod:`cdeaudit.analytic.eigen` and
``A_n`` project the initial deviation ``C0 - C_ss`` with weight
``exp(-P X)``. Piecewise-constant inlets are superposed from step responses,
one component per jump.

For large ``P`` the individual terms grow like ``exp(P X / 2 - P T / 4)``
while their sum stays O(1), so double precision runs out of digits. Points
where the estimated round-off exceeds ``roundoff_tol`` are re-evaluated in
mpmath at a precision chosen from the size of the terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from cdeaudit.analytic.eigen import (
    DIRICHLET,
    EigenSeries,
    eigenvalues,
    hyperbolic_modes,
    phase,
    transformed_bcs,
)
from cdeaudit.analytic.steady import DimensionlessSteady, dimensionless_steady
from cdeaudit.field import SolutionField
from cdeaudit.model import InletSignal, TransportProblem, exit_closure, nondimensionalize

EPS = np.finfo(float).eps
BETA_TOL = 1e-13
MP_TERM_FLOOR = 1e-22


def _I0(a, q):
    """Integral over [0, 1] of exp(a + q X)."""
    q = np.asarray(q, dtype=complex)
    small = np.abs(q) < 1.0
    qs = np.where(small, q, 1.0)
    ql = np.where(small, 2.0, q)
    with np.errstate(over="ignore", invalid="ignore"):
        near = np.exp(a) * np.where(qs == 0, 1.0, np.expm1(qs) / np.where(qs == 0, 1.0, qs))
        far = (np.exp(a + ql) - np.exp(a)) / ql
    return np.where(small, near, far)


def _I1(q):
    """Integral over [0, 1] of X exp(q X)."""
    q = np.asarray(q, dtype=complex)
    small = np.abs(q) < 0.05
    qs = np.where(small, q, 0.0)
    series = sum(qs**k / (math.factorial(k) * (k + 2)) for k in range(10))
    ql = np.where(small, 1.0, q)
    far = (np.exp(ql) * (ql - 1) + 1) / ql**2
    return np.where(small, series, far)


def _mode_amplitudes(bcs, beta):
    """u = a exp(i beta X) + b exp(-i beta X)."""
    if bcs.h0 is DIRICHLET:
        return np.full(beta.shape, -0.5j), np.full(beta.shape, 0.5j)
    return (beta - 1j * bcs.h0) / 2, (beta + 1j * bcs.h0) / 2


def _coefficients(bcs, P, beta, ss: DimensionlessSteady, C0):
    a, b = _mode_amplitudes(bcs, beta)
    K0 = C0 - ss.p_const
    num = 0
    for amp, s in ((a, 1), (b, -1)):
        q = -P / 2 + s * 1j * beta
        inner = K0 * _I0(0.0, q) - ss.p_slope * _I1(q)
        if ss.A:
            inner = inner - ss.A * _I0(-ss.m1, q + ss.m1)
        if ss.B:
            inner = inner - ss.B * _I0(0.0, q + ss.m2)
        num = num + amp * inner
    norm = a**2 * _I0(0.0, 2j * beta) + 2 * a * b + b**2 * _I0(0.0, -2j * beta)
    return num / norm


@dataclass
class _Component:
    t_start: float
    steady: DimensionlessSteady
    C0: float
    coeffs: np.ndarray


class SeriesSolution:
    """Dimensionless eigen-series evaluator for one boundary pair.

    Parameters
    ----------
    bc_pair : tuple
        ``(entry, closure)`` with entry ``"first"``/``"third"`` and closure
        ``"zero-gradient"`` or ``"robin"`` (third-type exit with prescribed ``G``).
    P, Lambda, Gamma : float
        Peclet, decay and production numbers.
    inlet : InletSignal
        Dimensionless inlet (times in units of ell/v, values scaled by c_ref).
    n_terms : int
        Number of real eigenmodes summed. Another ``n_terms`` are kept to
        estimate the truncation tail.
    C0 : float
        Uniform initial concentration.
    G : float, optional
        Prescribed effluent value for a ``robin`` exit.
    """

    def __init__(self, bc_pair, P, Lambda, Gamma, inlet: InletSignal, n_terms=50, C0=0.0, G=None,
                 roundoff_tol=1e-11):
        entry, closure = bc_pair
        if closure not in ("zero-gradient", "robin"):
            raise ValueError(f"series solution needs a zero-gradient or prescribed third-type exit, got {closure!r}")
        if closure == "robin" and G is None:
            raise ValueError("third-type exit with a series solution requires prescribed effluent data")
        self.bc_pair = (entry, closure)
        self.P, self.Lambda, self.Gamma = float(P), float(Lambda), float(Gamma)
        self.inlet, self.n_terms, self.C0, self.G = inlet, int(n_terms), float(C0), G
        self.roundoff_tol = roundoff_tol
        self.bcs = transformed_bcs(self.bc_pair, self.P)

        self.betas_all = eigenvalues(self.bc_pair, self.P, 2 * self.n_terms)
        self.ks = hyperbolic_modes(self.bc_pair, self.P)
        self.beta = np.concatenate([1j * self.ks, self.betas_all.astype(complex)])
        self.n_main = len(self.ks) + self.n_terms
        self.mu = (self.beta**2).real / self.P + self.P / 4 + self.Lambda

        pieces = inlet.pieces()
        self.components = [self._component(0.0, pieces[0][1], self.Gamma, self.C0, G)]
        for t_jump, dv in inlet.jumps():
            self.components.append(self._component(t_jump, dv, 0.0, 0.0, 0.0 if G is not None else None))
        self._mp_cache: dict[int, list] = {}

    def _component(self, t_start, C_in, Gamma, C0, G):
        ss = dimensionless_steady(self.P, self.Lambda, Gamma, C_in, self.bc_pair[0], self.bc_pair[1], G)
        return _Component(t_start, ss, C0, _coefficients(self.bcs, self.P, self.beta, ss, C0))

    @property
    def eigenseries(self) -> EigenSeries:
        """Eigen-data and coefficients of the initial-condition component."""
        return EigenSeries(
            betas=self.betas_all[: self.n_terms],
            hyperbolic=self.ks,
            coefficients=self.components[0].coeffs[: self.n_main],
            bc_pair=self.bc_pair,
            P=self.P,
            Lambda=self.Lambda,
        )

    # -- float evaluation -------------------------------------------------

    def _terms(self, comp, X, tau, sl, deriv=None):
        beta = self.beta[sl]
        a, b = _mode_amplitudes(self.bcs, beta)
        Xe = X[..., None]
        taue = tau[..., None]
        Ep = np.exp(1j * beta * Xe)
        Em = np.exp(-1j * beta * Xe)
        u = a * Ep + b * Em
        if deriv in ("X", "XX"):
            ux = 1j * beta * (a * Ep - b * Em)
            u = ux + self.P / 2 * u if deriv == "X" else -(beta**2) * u + self.P * ux + self.P**2 / 4 * u
        with np.errstate(over="ignore", under="ignore"):
            grow = np.exp(self.P * Xe / 2 - self.mu[sl] * np.maximum(taue, 0.0))
        terms = (comp.coeffs[sl] * u).real * grow
        if deriv == "T":
            terms = -self.mu[sl] * terms
        return np.where(taue > 0, terms, 0.0)

    def _evaluate(self, X, T, deriv=None):
        X, T = np.broadcast_arrays(np.asarray(X, dtype=float), np.asarray(T, dtype=float))
        if np.any(T < 0):
            raise ValueError("series solution requires T >= 0")
        main = slice(0, self.n_main)
        tail = slice(self.n_main, None)
        value = np.zeros(X.shape)
        magnitude = np.zeros(X.shape)
        tail_mag = np.zeros(X.shape)
        rel = np.zeros(X.shape)
        order = {None: 0, "X": 1, "XX": 2, "T": None}[deriv]
        for comp in self.components:
            tau = T - comp.t_start
            active = tau > 0
            terms = self._terms(comp, X, tau, main, deriv)
            value += terms.sum(axis=-1)
            if order is not None:
                value += np.where(active, comp.steady(X, order), 0.0)
            abs_terms = np.abs(terms)
            magnitude += abs_terms.sum(axis=-1)
            beta_abs = np.abs(self.beta[main])
            sens = 1.0 + beta_abs * (1.0 + 2.0 * np.abs(tau[..., None]) / self.P)
            rel += (abs_terms * (16 * EPS + BETA_TOL * sens)).sum(axis=-1)
            tail_mag += np.abs(self._terms(comp, X, tau, tail, deriv)).sum(axis=-1)
        if deriv is None:
            # T == 0 exactly: the initial condition (series converges slowly there)
            value = np.where(T == 0, self.C0, value)
        return value, tail_mag, rel, magnitude

    def error_bounds(self, X, T):
        """Estimated truncation tail and round-off of the double-precision sum."""
        _, tail, roundoff, _ = self._evaluate(X, T)
        return tail, roundoff

    def derivative(self, X, T, which: str):
        """Analytic term-wise derivative ``which`` in {"X", "XX", "T"} (double precision)."""
        if which not in ("X", "XX", "T"):
            raise ValueError(f"unknown derivative {which!r}")
        out = self._evaluate(X, T, which)[0]
        return out if out.ndim else float(out)

    def evaluate(self, X, T, precision: str = "auto"):
        """Value, truncation-tail estimate and round-off estimate at (X, T).

        ``precision`` is ``"double"``, ``"extended"`` or ``"auto"`` (extended
        only where the double-precision round-off estimate exceeds
        ``roundoff_tol``).
        """
        value, tail, roundoff, magnitude = self._evaluate(X, T)
        if precision == "double":
            return value, tail, roundoff
        redo = (roundoff > self.roundoff_tol) & (np.asarray(T) > 0)
        if precision == "extended":
            redo = np.broadcast_to(np.asarray(T) > 0, value.shape)
        if np.any(redo):
            Xb, Tb = np.broadcast_arrays(np.asarray(X, dtype=float), np.asarray(T, dtype=float))
            shape = value.shape
            value, roundoff = np.array(value, ndmin=1).ravel(), np.array(roundoff, ndmin=1).ravel()
            mag = np.array(magnitude, ndmin=1).ravel()
            Xf, Tf = np.ravel(Xb), np.ravel(Tb)
            for i in np.flatnonzero(np.ravel(redo)):
                dps = 10 * math.ceil((25 + math.log10(max(1.0, mag[i]))) / 10)
                value[i] = self._value_mp(float(Xf[i]), float(Tf[i]), dps)
                roundoff[i] = 10.0 ** (-(dps - 8)) * max(1.0, mag[i])
            value, roundoff = value.reshape(shape), roundoff.reshape(shape)
        return value, tail, roundoff

    def __call__(self, X, T, precision: str = "auto"):
        out = self.evaluate(X, T, precision)[0]
        return out if out.ndim else float(out)

    # -- extended precision -----------------------------------------------

    def _mp_data(self, dps):
        for have in sorted(self._mp_cache):
            if have >= dps:
                return self._mp_cache[have]
        with mpmath.workdps(dps):
            P = mpmath.mpf(self.P)
            h0 = None if self.bcs.h0 is DIRICHLET else P / 2
            h1 = None if self.bcs.h1 is DIRICHLET else (P / 2 if self.bcs.h1 > 0 else -P / 2)

            def theta(b):
                a0 = mpmath.pi / 2 if h0 is None else mpmath.atan2(h0, b)
                a1 = mpmath.pi / 2 if h1 is None else mpmath.atan2(h1, b)
                return b - a0 - a1

            betas = []
            for k in self.ks:
                if h0 is not None:
                    betas.append(mpmath.mpc(0, P / 2))
                else:
                    betas.append(mpmath.mpc(0, mpmath.findroot(lambda q: q + h1 * mpmath.tanh(q), mpmath.mpf(k))))
            for b in self.betas_all[: self.n_terms]:
                m = int(np.rint(phase(b, self.bcs) / np.pi))
                betas.append(mpmath.mpc(mpmath.findroot(lambda q: theta(q) - m * mpmath.pi, mpmath.mpf(b))))
            comps = []
            for comp in self.components:
                coeffs = [self._coeff_mp(beta, comp, P, h0) for beta in betas]
                comps.append((comp.t_start, comp.steady.exact, coeffs))
            data = (betas, comps, h0)
        self._mp_cache[dps] = data
        return data

    @staticmethod
    def _I0_mp(a, q):
        return (mpmath.exp(a + q) - mpmath.exp(a)) / q

    @staticmethod
    def _I1_mp(q):
        return (mpmath.exp(q) * (q - 1) + 1) / q**2

    def _amps_mp(self, beta, h0):
        if h0 is None:
            return mpmath.mpc(0, -0.5), mpmath.mpc(0, 0.5)
        return (beta - 1j * h0) / 2, (beta + 1j * h0) / 2

    def _coeff_mp(self, beta, comp, P, h0):
        ex = comp.steady.exact
        a, b = self._amps_mp(beta, h0)
        K0 = mpmath.mpf(comp.C0) - ex["p_const"]
        num = 0
        for amp, s in ((a, 1), (b, -1)):
            q = -P / 2 + s * 1j * beta
            inner = K0 * self._I0_mp(0, q) - ex["p_slope"] * self._I1_mp(q)
            inner -= ex["A"] * self._I0_mp(-ex["m1"], q + ex["m1"])
            inner -= ex["B"] * self._I0_mp(0, q + ex["m2"])
            num += amp * inner
        norm = a**2 * self._I0_mp(0, 2j * beta) + 2 * a * b + b**2 * self._I0_mp(0, -2j * beta)
        return num / norm

    def _value_mp(self, X, T, dps):
        betas, comps, h0 = self._mp_data(dps)
        with mpmath.workdps(dps):
            P = mpmath.mpf(self.P)
            L = mpmath.mpf(self.Lambda)
            X_ = mpmath.mpf(X)
            total = mpmath.mpf(0)
            for t_start, ex, coeffs in comps:
                tau = mpmath.mpf(T) - mpmath.mpf(t_start)
                if tau <= 0:
                    continue
                total += (ex["p_const"] + ex["p_slope"] * X_ + ex["A"] * mpmath.exp(ex["m1"] * (X_ - 1))
                          + ex["B"] * mpmath.exp(ex["m2"] * X_))
                for beta, A in zip(betas, coeffs):
                    a, b = self._amps_mp(beta, h0)
                    mu = (beta**2).real / P + P / 4 + L
                    w = mpmath.exp(P * X_ / 2 - mu * tau)
                    # real modes decay monotonically in n: stop once negligible
                    if beta.imag == 0 and abs(A) * (abs(a) + abs(b)) * w < MP_TERM_FLOOR:
                        break
                    u = a * mpmath.exp(1j * beta * X_) + b * mpmath.exp(-1j * beta * X_)
                    total += (A * u).real * w
            return float(total)


def terms_needed(P: float, T_min: float, floor: float = 1e-16) -> int:
    """Real modes needed so the first omitted term is below ``floor`` at ``T >= T_min``.

    Terms scale like ``exp(P X / 2 - (beta**2 / P + P / 4) T)``; at X = 1 this
    fixes the smallest admissible ``beta``, and ``beta_n`` is close to ``n pi``.
    """
    if not T_min > 0:
        raise ValueError("T_min must be positive")
    need = P * (P / 2 - P * T_min / 4 - math.log(floor)) / T_min
    return int(math.ceil(math.sqrt(max(need, 0.0)) / math.pi)) + 2


def series_solution(bc_pair, P, Lambda, Gamma, inlet: InletSignal, n_terms=50, C0=0.0, G=None) -> SeriesSolution:
    """Build the dimensionless series evaluator for ``bc_pair``."""
    return SeriesSolution(bc_pair, P, Lambda, Gamma, inlet, n_terms=n_terms, C0=C0, G=G)


class SeriesAnalytic:
    """Dimensional ``c``/``c_x``/``c_t`` view of a :class:`SeriesSolution`.

    Derivatives are summed term-wise in double precision.
    """

    def __init__(self, problem: TransportProblem, n_terms: int = 50):
        dp = nondimensionalize(problem)
        closure = exit_closure(dp.bc_exit, dp.G)
        if closure == "outflow":
            raise ValueError("bc_exit: series solution of a third-type exit needs prescribed effluent data g_ell")
        self.problem = problem
        self.series = SeriesSolution(
            (dp.bc_entry.value, closure), dp.P, dp.Lambda, dp.Gamma, dp.inlet, n_terms, dp.C0, dp.G
        )
        self.ell, self.v, self.c_ref = dp.length_scale, dp.velocity_scale, dp.c_ref

    def _XT(self, x, t):
        return np.asarray(x, dtype=float) / self.ell, np.asarray(t, dtype=float) * self.v / self.ell

    def c(self, x, t):
        return self.c_ref * self.series(*self._XT(x, t))

    def c_x(self, x, t):
        return self.c_ref / self.ell * self.series.derivative(*self._XT(x, t), "X")

    def c_t(self, x, t):
        return self.c_ref * self.v / self.ell * self.series.derivative(*self._XT(x, t), "T")


def series_field(problem: TransportProblem, times, x=None, n_terms: int = 50) -> SolutionField:
    """Sample the series solution of ``problem`` on ``times`` x ``x`` (101 nodes by default)."""
    sol = SeriesAnalytic(problem, n_terms)
    times = np.asarray(times, dtype=float)
    x = np.linspace(0.0, problem.ell, 101) if x is None else np.asarray(x, dtype=float)
    X, T = sol._XT(x[None, :], times[:, None])
    value, tail, roundoff = sol.series.evaluate(X, T)
    return SolutionField(
        times=times,
        x=x,
        c=sol.c_ref * value,
        provenance="series",
        problem=problem,
        analytic=sol,
        scheme=f"eigen-series, {n_terms} terms",
        meta={"truncation_tail": float(np.max(tail)) * sol.c_ref, "roundoff": float(np.max(roundoff)) * sol.c_ref},
    )
