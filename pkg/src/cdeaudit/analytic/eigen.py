"""
Eigenvalues of the transformed finite-domain problem.

Writing the homogeneous deviation from steady state as
``w = u(X) exp(P X / 2 - (P / 4 + Lambda) T - beta**2 T / P)`` turns the
dimensionless equation into ``u'' + beta**2 u = 0`` with

    left  (X = 0):  u = 0                 (first-type entry)
                    u' = h0 u,  h0 = P/2   (third-type entry)
    right (X = 1):  u' + h1 u = 0,  h1 = +P/2 (zero-gradient exit)
                                    h1 = -P/2 (third-type exit, prescribed effluent)

With ``u = sqrt(beta**2 + h0**2) cos(beta X - alpha0)``,
``alpha = arctan(h / beta)`` (``alpha0 = pi/2`` for a first-type entry), the
right-hand condition becomes

    Theta(beta) = beta - alpha0(beta) - alpha1(beta) = m pi,   m integer,

and the normalised eigencondition is ``f(beta) = -sin(Theta(beta))``. The
classical form ``(h0 + h1) beta cos(beta) + (h0 h1 - beta**2) sin(beta)`` is
``f`` times ``sqrt((beta**2 + h0**2)(beta**2 + h1**2))``; it is kept as
:func:`raw_eigencondition` for brute-force checks.

A third-type exit (``h1 < 0``) also admits modes with ``beta**2 < 0``; these
are returned separately as ``k`` with ``beta = i k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from cdeaudit.model import EntryBC

DIRICHLET = None


class RootCountError(RuntimeError):
    """The root scan did not produce exactly one root per phase interval."""


@dataclass(frozen=True)
class TransformedBCs:
    h0: float | None  # None: Dirichlet at X = 0
    h1: float | None  # None: Dirichlet at X = 1


def transformed_bcs(bc_pair, P: float) -> TransformedBCs:
    """Map an (entry, exit-closure) pair, or a degenerate check mode, to (h0, h1).

    Degenerate modes ``"dirichlet"`` and ``"neumann"`` apply the named
    condition directly to ``u`` at both ends.
    """
    if bc_pair == "dirichlet":
        return TransformedBCs(DIRICHLET, DIRICHLET)
    if bc_pair == "neumann":
        return TransformedBCs(0.0, 0.0)
    entry, closure = bc_pair
    h0 = DIRICHLET if EntryBC(entry) is EntryBC.FIRST else P / 2
    if closure == "zero-gradient":
        h1 = P / 2
    elif closure in ("robin", "third"):
        h1 = -P / 2
    else:
        raise ValueError(f"no Sturm-Liouville form for exit closure {closure!r}")
    return TransformedBCs(h0, h1)


def phase(beta, bcs: TransformedBCs):
    beta = np.asarray(beta, dtype=float)
    a0 = np.pi / 2 if bcs.h0 is DIRICHLET else np.arctan2(bcs.h0, beta)
    a1 = np.pi / 2 if bcs.h1 is DIRICHLET else np.arctan2(bcs.h1, beta)
    return beta - a0 - a1


def eigencondition(beta, bcs: TransformedBCs):
    """Normalised eigencondition; bounded slope, zero exactly at eigenvalues."""
    return -np.sin(phase(beta, bcs))


def raw_eigencondition(beta, bcs: TransformedBCs):
    """Un-normalised transcendental form, used only by independent checks."""
    b = np.asarray(beta, dtype=float)
    h0, h1 = bcs.h0, bcs.h1
    if h0 is DIRICHLET and h1 is DIRICHLET:
        return np.sin(b)
    if h0 is DIRICHLET:
        return b * np.cos(b) + h1 * np.sin(b)
    if h1 is DIRICHLET:
        return b * np.cos(b) + h0 * np.sin(b)
    return (h0 + h1) * b * np.cos(b) + (h0 * h1 - b**2) * np.sin(b)


def _reject_zero_mode(bcs: TransformedBCs, tol: float = 1e-6):
    # beta = 0 is an eigenvalue (u linear in X) only at isolated parameter values;
    # neither scan can resolve modes that close to it.
    h0, h1 = bcs.h0, bcs.h1
    if h1 is DIRICHLET:
        return
    if h0 is DIRICHLET:
        gap = abs(1 + h1)
    else:
        gap = abs(h0 + h1 + h0 * h1) / (1 + abs(h0 * h1))
    if gap < tol and not (h0 == 0 and h1 == 0):
        raise RootCountError("a near-zero eigenvalue occurs at these parameters and cannot be resolved")


def eigenvalues(bc_pair, P: float, n_max: int, per_pi: int = 10_000, tol: float = 1e-13) -> np.ndarray:
    """First ``n_max`` positive eigenvalues ``beta_n``.

    Roots are bracketed by a sign-change scan with ``per_pi`` subdivisions
    per pi-interval and refined by bisection to ``tol * max(1, beta)``.

    Raises
    ------
    RootCountError
        If fewer than ``n_max`` roots are found or the phase indices of
        consecutive roots are not consecutive integers (a skipped or doubled
        root).
    """
    if not P > 0:
        raise ValueError("P must be positive")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    bcs = transformed_bcs(bc_pair, P)
    _reject_zero_mode(bcs)
    step = np.pi / per_pi
    grid = step * np.arange(1, (n_max + 2) * per_pi + 1)
    f = eigencondition(grid, bcs)

    exact = np.flatnonzero(f == 0.0)
    sgn = np.sign(f)
    brackets = np.flatnonzero(sgn[:-1] * sgn[1:] < 0)
    lo, hi = grid[brackets].copy(), grid[brackets + 1].copy()
    flo = f[brackets].copy()
    # relative tolerance: above beta ~ 500 the float spacing exceeds 1e-13
    for _ in range(200):
        if not np.any(hi - lo > tol * np.maximum(1.0, lo)):
            break
        mid = 0.5 * (lo + hi)
        fm = eigencondition(mid, bcs)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    roots = np.sort(np.concatenate([0.5 * (lo + hi), grid[exact]]))

    if len(roots) < n_max:
        raise RootCountError(f"scan found {len(roots)} roots, {n_max} requested")
    m = np.rint(phase(roots, bcs) / np.pi).astype(int)
    if np.any(np.diff(m) != 1):
        bad = int(np.flatnonzero(np.diff(m) != 1)[0])
        raise RootCountError(
            f"root pattern broken between beta={roots[bad]:.15g} and beta={roots[bad + 1]:.15g} "
            f"(phase indices {m[bad]}, {m[bad + 1]})"
        )
    return roots[:n_max]


def hyperbolic_modes(bc_pair, P: float) -> np.ndarray:
    """Values ``k > 0`` with ``beta = i k`` (modes decaying slower than P/4 + Lambda)."""
    bcs = transformed_bcs(bc_pair, P)
    h0, h1 = bcs.h0, bcs.h1
    if h1 is DIRICHLET or h1 >= 0:
        return np.array([])
    if h0 is DIRICHLET:
        # k cosh k + h1 sinh k = 0  <=>  k + h1 tanh k = 0
        def g(k):
            return k + h1 * np.tanh(k)
    else:
        # (k**2 + h0 h1) sinh k + (h0 + h1) k cosh k = 0
        def g(k):
            return (k**2 + h0 * h1) * np.tanh(k) + (h0 + h1) * k

    kmax = 2 * max(abs(h1), abs(h0 or 0.0)) + 2
    ks = np.linspace(kmax * 1e-6, kmax, 20_001)
    gs = g(ks)
    found = []
    for i in np.flatnonzero(np.sign(gs[:-1]) * np.sign(gs[1:]) <= 0):
        if gs[i] == 0.0:
            found.append(ks[i])
        elif gs[i + 1] != 0.0:
            found.append(brentq(g, ks[i], ks[i + 1], xtol=1e-15, rtol=1e-15))
    return np.array(sorted(set(found)))


@dataclass(frozen=True)
class EigenSeries:
    """Eigen-data and expansion coefficients for one initial deviation."""

    betas: np.ndarray
    hyperbolic: np.ndarray
    coefficients: np.ndarray  # complex; hyperbolic modes first, then betas
    bc_pair: tuple
    P: float
    Lambda: float

    @property
    def n_terms(self) -> int:
        return len(self.betas)
