"""
Closed-form step responses on the semi-infinite domain x >= 0.

Both solutions assume a zero initial concentration, a step inlet of height
``c_in`` switched on at t = 0 and first-order decay ``lam`` (no production).

* :func:`semiinf_flux_concentration` -- first-type entry. The result is the
  flux concentration of the third-type problem as well.
* :func:`semiinf_resident_concentration` -- third-type entry, resident
  concentration.

Every term has the shape ``q(x, t) * exp(a(x, t)) * erfc(z(x, t))`` with
``z = (x + s t) / (2 sqrt(D t))``; the products are always evaluated through
:func:`exp_erfc` so that large ``v x / D`` cannot overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

from cdeaudit.analytic.special import SQRT_PI, exp_erfc
from cdeaudit.field import SolutionField

# Below this value of 4 lam D / v**2 the decaying resident formula loses more
# than ~6 digits to cancellation; those points are evaluated in extended precision.
SMALL_DECAY = 1e-6


@dataclass(frozen=True)
class _ErfcTerm:
    q0: float
    qx: float
    qt: float
    ax: float
    at: float
    s: float
    # a - z**2 == -((x - w t) / (2 sqrt(D t)))**2 + kappa t, known exactly
    w: float
    kappa: float


def _prep(x, t, D):
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ValueError("semi-infinite solutions require t > 0")
    if np.any(x < 0):
        raise ValueError("semi-infinite solutions require x >= 0")
    return x, t, np.sqrt(D * t)


def _eval_terms(terms, x, t, D, gauss_amp, c_in, what):
    x, t, sdt = _prep(x, t, D)
    out = np.zeros(x.shape)
    for term in terms:
        q = term.q0 + term.qx * x + term.qt * t
        a = term.ax * x + term.at * t
        z = (x + term.s * t) / (2 * sdt)
        # a - z**2 as a completed square: both parts are large near the front
        # and their difference would lose most of its digits
        shifted = -(((x - term.w * t) / (2 * sdt)) ** 2) + term.kappa * t
        E = exp_erfc(a, z, shifted)
        if what == "c":
            out += q * E
            continue
        G = 2.0 / SQRT_PI * np.exp(shifted)
        if what == "x":
            z_d = 1.0 / (2 * sdt)
            out += term.qx * E + q * (term.ax * E - G * z_d)
        else:
            z_d = (term.s * t - x) / (4 * t * sdt)
            out += term.qt * E + q * (term.at * E - G * z_d)
    if gauss_amp:
        v = gauss_amp
        z0 = (x - v * t) / (2 * sdt)
        g = np.exp(-(z0**2))
        amp = v / np.sqrt(np.pi * D)
        if what == "c":
            out += amp * np.sqrt(t) * g
        elif what == "x":
            out += amp * np.sqrt(t) * g * (-2 * z0 / (2 * sdt))
        else:
            z0_t = (-v * t - x) / (4 * t * sdt)
            out += amp * (g / (2 * np.sqrt(t)) + np.sqrt(t) * g * (-2 * z0 * z0_t))
    out *= c_in
    return out if out.ndim else float(out)


def _flux_terms(v, D, lam):
    u = v * np.sqrt(1 + 4 * lam * D / v**2)
    return [
        _ErfcTerm(0.5, 0, 0, (v - u) / (2 * D), 0.0, -u, v, -lam),
        _ErfcTerm(0.5, 0, 0, (v + u) / (2 * D), 0.0, u, v, -lam),
    ]


def _resident_terms(v, D, lam):
    if lam == 0:
        return [
            _ErfcTerm(0.5, 0, 0, 0.0, 0.0, -v, v, 0.0),
            _ErfcTerm(-0.5, -0.5 * v / D, -0.5 * v**2 / D, v / D, 0.0, v, v, 0.0),
        ], v
    u = v * np.sqrt(1 + 4 * lam * D / v**2)
    return [
        _ErfcTerm(v / (v + u), 0, 0, (v - u) / (2 * D), 0.0, -u, v, -lam),
        _ErfcTerm(v / (v - u), 0, 0, (v + u) / (2 * D), 0.0, u, v, -lam),
        _ErfcTerm(v**2 / (2 * lam * D), 0, 0, v / D, -lam, v, v, -lam),
    ], 0.0


def semiinf_flux_concentration(x, t, v, D, lam=0.0, c_in=1.0, derivative=None):
    """First-type-entry step response on the semi-infinite domain.

    For ``lam == 0``::

        c / c_in = 1/2 [erfc((x - v t) / (2 sqrt(D t)))
                        + exp(v x / D) erfc((x + v t) / (2 sqrt(D t)))]

    Decay replaces ``v`` in the erfc arguments by ``u = v sqrt(1 + 4 lam D / v**2)``
    and splits the exponential prefactor into ``exp((v -/+ u) x / (2 D))``.

    Parameters
    ----------
    x, t : array_like
        Position (>= 0) and time (> 0); broadcast against each other.
    v, D, lam : float
        Velocity, dispersion coefficient and first-order decay rate.
    c_in : float
        Step height.
    derivative : {None, "x", "t"}
        Return the analytic partial derivative instead of the value.
    """
    what = "c" if derivative is None else derivative
    return _eval_terms(_flux_terms(v, D, lam), x, t, D, 0.0, c_in, what)


def _resident_mp(x, t, v, D, lam, what):
    with mpmath.workdps(50):
        v, D, lam = mpmath.mpf(v), mpmath.mpf(D), mpmath.mpf(lam)
        u = v * mpmath.sqrt(1 + 4 * lam * D / v**2)

        def f(xx, tt):
            s = 2 * mpmath.sqrt(D * tt)
            return (
                v / (v + u) * mpmath.exp((v - u) * xx / (2 * D)) * mpmath.erfc((xx - u * tt) / s)
                + v / (v - u) * mpmath.exp((v + u) * xx / (2 * D)) * mpmath.erfc((xx + u * tt) / s)
                + v**2 / (2 * lam * D) * mpmath.exp(v * xx / D - lam * tt) * mpmath.erfc((xx + v * tt) / s)
            )

        xx, tt = mpmath.mpf(x), mpmath.mpf(t)
        if what == "c":
            return float(f(xx, tt))
        if what == "x":
            return float(mpmath.diff(lambda q: f(q, tt), xx))
        return float(mpmath.diff(lambda q: f(xx, q), tt))


def semiinf_resident_concentration(x, t, v, D, lam=0.0, c_in=1.0, derivative=None):
    """Third-type-entry resident step response on the semi-infinite domain.

    For ``lam == 0``::

        c / c_in = 1/2 erfc(z-) + sqrt(v**2 t / (pi D)) exp(-z-**2)
                   - 1/2 (1 + v x / D + v**2 t / D) exp(v x / D) erfc(z+)

    with ``z-/+ = (x -/+ v t) / (2 sqrt(D t))``. For ``lam > 0`` the
    three-term decaying form with ``u = v sqrt(1 + 4 lam D / v**2)`` is used;
    when ``4 lam D / v**2`` is tiny the cancellation between its last two
    terms is avoided by evaluating in 50-digit arithmetic.
    """
    what = "c" if derivative is None else derivative
    if lam > 0 and 4 * lam * D / v**2 < SMALL_DECAY:
        x, t, _ = _prep(x, t, D)
        out = np.vectorize(lambda a, b: _resident_mp(a, b, v, D, lam, what))(x, t) * c_in
        return out if out.ndim else float(out)
    terms, gauss = _resident_terms(v, D, lam)
    return _eval_terms(terms, x, t, D, gauss, c_in, what)


class SemiInfiniteSolution:
    """Adapter exposing a closed form through the ``c``/``c_x``/``c_t`` protocol."""

    def __init__(self, v, D, lam=0.0, c_in=1.0, kind="resident"):
        if kind not in ("resident", "flux"):
            raise ValueError(f"kind must be 'resident' or 'flux', got {kind!r}")
        self.v, self.D, self.lam, self.c_in, self.kind = v, D, lam, c_in, kind
        self._f = semiinf_resident_concentration if kind == "resident" else semiinf_flux_concentration

    def c(self, x, t):
        return self._f(x, t, self.v, self.D, self.lam, self.c_in)

    def c_x(self, x, t):
        return self._f(x, t, self.v, self.D, self.lam, self.c_in, derivative="x")

    def c_t(self, x, t):
        return self._f(x, t, self.v, self.D, self.lam, self.c_in, derivative="t")


class _Superposed:
    """Piecewise-constant inlet as a sum of shifted step responses."""

    def __init__(self, sol: SemiInfiniteSolution, pieces):
        self.sol = sol
        self.steps = []
        level = 0.0
        for start, val in pieces:
            if val != level:
                self.steps.append((start, val - level))
            level = val

    def _sum(self, method, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        out = np.zeros(x.shape)
        for start, amp in self.steps:
            live = t > start
            if np.any(live):
                out[live] += amp * np.asarray(method(x[live], t[live] - start))
        return out if out.ndim else float(out)

    def c(self, x, t):
        return self._sum(self.sol.c, x, t)

    def c_x(self, x, t):
        return self._sum(self.sol.c_x, x, t)

    def c_t(self, x, t):
        return self._sum(self.sol.c_t, x, t)


def semiinf_field(problem, times, x, kind: str = "resident") -> SolutionField:
    """Sample a semi-infinite step response on ``times`` x ``x``.

    ``kind`` defaults to the resident solution (third-type entry); ``flux``
    gives the first-type-entry solution. ``t = 0`` rows hold the zero
    initial state. The field carries the superposed closed form as its
    analytic view.
    """
    if problem.ell is not None:
        raise ValueError("length: semi-infinite solution requested for a finite problem")
    if problem.gamma != 0 or problem.c0_init != 0:
        raise ValueError("semi-infinite closed forms need gamma = 0 and a zero initial state")
    sup = _Superposed(SemiInfiniteSolution(problem.v, problem.D, problem.lam, 1.0, kind), problem.c_in.pieces())
    times = np.asarray(times, dtype=float)
    x = np.asarray(x, dtype=float)
    c = sup.c(x[None, :], times[:, None])
    return SolutionField(times=times, x=x, c=c, provenance="semiinf", problem=problem, analytic=sup, scheme=kind)
