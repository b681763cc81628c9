"""
Peclet-number estimation from effluent breakthrough curves.

Every model returns the effluent *flux* concentration at ``x = ell``, the
quantity a column experiment measures:

``fv``
    finite-volume solution of the problem's own BC pair; effluent is the
    exit face flux divided by ``v``.
``series``
    eigen-series solution (zero-gradient or prescribed third-type exit);
    the exit condition itself gives the flux concentration there.
``semiinf-first``
    semi-infinite first-type-entry closed form observed at ``x = ell``.
``semiinf-third``
    semi-infinite resident solution, flux-transformed with its analytic
    gradient and observed at ``x = ell``.

The semi-infinite models ignore the problem's BC pair and need ``gamma = 0``
and a zero initial state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from cdeaudit.analytic.semiinf import SemiInfiniteSolution
from cdeaudit.analytic.series import SeriesAnalytic, terms_needed
from cdeaudit.audit import flux_transform
from cdeaudit.field import BreakthroughCurve
from cdeaudit.fv import solve
from cdeaudit.model import TransportProblem, require_valid

MODELS = ("fv", "series", "semiinf-first", "semiinf-third")
N_PROBES = 33
GOLDEN = (math.sqrt(5) - 1) / 2
LOG_TOL = 1e-10
BISECTIONS = 3
SERIES_TAIL_TOL = 1e-8
MAX_SERIES_TERMS = 600


def _superpose(problem: TransportProblem, times: np.ndarray, step_response) -> np.ndarray:
    out = np.zeros_like(times)
    level = 0.0
    for start, val in problem.c_in.pieces():
        live = times > start
        if np.any(live) and val != level:
            out[live] += (val - level) * step_response(times[live] - start)
        level = val
    return out


def _effluent(problem: TransportProblem, model: str, times: np.ndarray, n_cells: int, n_terms: int) -> np.ndarray:
    ell, v, D = problem.ell, problem.v, problem.D
    if model == "fv":
        f = solve(problem, n_cells, times)
        return f.exit_flux[-len(times):] / v
    if model == "series":
        T_min = times[0] * v / ell
        sol = SeriesAnalytic(problem, min(max(n_terms, terms_needed(problem.peclet, T_min)), MAX_SERIES_TERMS))
        X, T = sol._XT(1.0, times)
        value, tail, _ = sol.series.evaluate(X, T)
        if np.max(tail) > SERIES_TAIL_TOL:
            t_bad = times[int(np.argmax(tail))]
            raise ValueError(f"series truncation tail {np.max(tail):.3g} at t={t_bad:.6g}; raise n_terms")
        # at the exit plane the closure fixes the flux concentration exactly:
        # c for a zero-gradient exit, g_ell for a prescribed third-type exit
        if sol.series.bc_pair[1] == "zero-gradient":
            return sol.c_ref * value
        return np.where(times > 0, problem.g_ell, problem.c0_init) + 0.0 * value
    if problem.gamma != 0 or problem.c0_init != 0:
        raise ValueError(f"model {model!r}: semi-infinite closed forms need gamma = 0 and a zero initial state")
    if model == "semiinf-first":
        sol = SemiInfiniteSolution(v, D, problem.lam, 1.0, "flux")
        return _superpose(problem, times, lambda tau: sol.c(ell, tau))
    sol = flux_transform(SemiInfiniteSolution(v, D, problem.lam, 1.0, "resident"), v, D)
    return _superpose(problem, times, lambda tau: sol.c(ell, tau))


def simulate_breakthrough(problem: TransportProblem, model: str, times, n_cells: int = 200,
                          n_terms: int = 100) -> BreakthroughCurve:
    """Effluent flux-concentration curve of ``problem`` under ``model``.

    Semi-infinite models observe the solution at ``x = ell`` so that the
    curves of all four models are comparable for the same problem.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    require_valid(problem)
    if problem.ell is None:
        raise ValueError(f"model {model!r}: needs a finite length (the observation plane for semi-infinite models)")
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("breakthrough times must be positive and strictly increasing")
    values = _effluent(problem, model, times, n_cells, n_terms)
    meta = {
        "model": model,
        "bc_entry": problem.bc_entry.value if hasattr(problem.bc_entry, "value") else problem.bc_entry,
        "bc_exit": None if problem.bc_exit is None else getattr(problem.bc_exit, "value", problem.bc_exit),
        "P_true": problem.peclet,
    }
    return BreakthroughCurve(times, values, meta)


@dataclass(frozen=True)
class FitResult:
    P_hat: float
    Lambda_hat: float | None
    objective: float
    iterations: int
    converged: bool
    model: str
    message: str = ""
    probes: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return {
            "P_hat": self.P_hat,
            "Lambda_hat": self.Lambda_hat,
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "model": self.model,
            "message": self.message,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"


class _Objective:
    def __init__(self, curve, model, problem, n_cells, n_terms):
        self.curve, self.model, self.problem = curve, model, problem
        self.n_cells, self.n_terms = n_cells, n_terms
        self.evaluations = 0

    def problem_at(self, P, Lambda=None):
        p = self.problem.with_peclet(P)
        if Lambda is not None:
            p = replace(p, lam=Lambda * p.v / p.ell)
        return p

    def __call__(self, P, Lambda=None) -> float:
        self.evaluations += 1
        try:
            pred = _effluent(self.problem_at(P, Lambda), self.model, self.curve.times, self.n_cells, self.n_terms)
        except (ValueError, RuntimeError, FloatingPointError) as exc:
            raise ValueError(f"objective failed at P={P:.17g}: {exc}") from exc
        val = float(np.sum((pred - self.curve.values) ** 2))
        if not math.isfinite(val):
            raise ValueError(f"objective is not finite at P={P:.17g}")
        return val


def _golden(f, a, b, fa=None):
    """Golden-section search for the minimum of ``f`` on ``[a, b]``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > LOG_TOL and it < 200:
        it += 1
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc, a, b, it) if fc <= fd else (d, fd, a, b, it)


def fit_peclet(curve: BreakthroughCurve, model: str, problem: TransportProblem,
               bounds: tuple[float, float] = (0.1, 1000.0), fit_lambda: bool = False,
               n_cells: int = 200, n_terms: int = 100) -> FitResult:
    """Least-squares estimate of P (and optionally Lambda) from an effluent curve.

    ``problem`` supplies everything except D (and lam when ``fit_lambda``):
    velocity, length, BC pair and inlet. The search runs on log P: 33
    log-uniform probes, golden-section search around the best probe, then
    three bisection refinements on the sign of the objective's slope. With
    ``fit_lambda`` the 1-D optimum seeds a Nelder-Mead search over
    ``(log P, sqrt(Lambda))``.

    An optimum on a bound is returned with ``converged = False``.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    if len(curve.times) < 8:
        raise ValueError("curve needs at least 8 points")
    lo, hi = map(float, bounds)
    if not 0 < lo < hi:
        raise ValueError("bounds must satisfy 0 < P_lo < P_hi")
    require_valid(problem)
    obj = _Objective(curve, model, problem, n_cells, n_terms)
    Lambda0 = problem.lam * problem.ell / problem.v

    def f(logP):
        return obj(math.exp(logP))

    grid = np.linspace(math.log(lo), math.log(hi), N_PROBES)
    probe_vals = np.array([f(x) for x in grid])
    k = int(np.argmin(probe_vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, N_PROBES - 1)]
    x, fx, a, b, iters = _golden(f, a, b)
    for _ in range(BISECTIONS):
        mid = 0.5 * (a + b)
        delta = 0.25 * (b - a)
        slope = f(mid + delta) - f(mid - delta)
        if slope > 0:
            b = mid
        else:
            a = mid
        iters += 1
    xm = 0.5 * (a + b)
    fm = f(xm)
    if fm <= fx:
        x, fx = xm, fm
    if probe_vals[k] < fx:
        x, fx = grid[k], probe_vals[k]

    Lambda_hat = None
    if fit_lambda:
        def f2(z):
            return obj(math.exp(z[0]), z[1] ** 2)

        start = np.array([x, math.sqrt(Lambda0)])
        res = minimize(f2, start, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14 * max(fx, 1e-300), "maxiter": 2000})
        if res.fun <= f2(start):
            x, Lambda_hat, fx = float(res.x[0]), float(res.x[1] ** 2), float(res.fun)
        else:
            Lambda_hat = Lambda0
        iters += int(res.nit)

    P_hat = math.exp(x)
    at_bound = abs(x - grid[0]) < 1e-6 or abs(x - grid[-1]) < 1e-6
    message = "optimum on a bound of the search interval" if at_bound else ""
    return FitResult(
        P_hat=P_hat,
        Lambda_hat=Lambda_hat,
        objective=fx,
        iterations=iters,
        converged=not at_bound,
        model=model,
        message=message,
        probes={"P": np.exp(grid).tolist(), "objective": probe_vals.tolist()},
    )


@dataclass(frozen=True)
class BiasTable:
    rows: list[tuple[float, float, float]]  # (P_true, P_hat, relative bias)
    generator: str
    fitter: str
    monotone_decreasing: bool
    converged: list[bool]

    def to_json(self) -> dict:
        return {
            "generator": self.generator,
            "fitter": self.fitter,
            "rows": [{"P_true": p, "P_hat": q, "relative_bias": r} for p, q, r in self.rows],
            "abs_bias_strictly_decreasing": self.monotone_decreasing,
            "converged": self.converged,
        }


def bias_study(P_true, generator: str, fitter: str, problem: TransportProblem, times,
               bounds: tuple[float, float] = (0.1, 1000.0), n_cells: int = 200,
               generator_problem: TransportProblem | None = None) -> BiasTable:
    """Fit curves made by ``generator`` with ``fitter`` for each true P.

    ``generator_problem`` (default ``problem``) fixes the generator's BC
    pair; ``problem`` is the fitter's template. The monotonicity flag is
    whether |bias| strictly decreases with increasing P_true.
    """
    P_true = list(P_true)
    if not P_true:
        raise ValueError("P_true list is empty")
    gen = problem if generator_problem is None else generator_problem
    rows, conv = [], []
    for P in P_true:
        curve = simulate_breakthrough(gen.with_peclet(P), generator, times, n_cells=n_cells)
        res = fit_peclet(curve, fitter, problem, bounds, n_cells=n_cells)
        rows.append((float(P), res.P_hat, (res.P_hat - P) / P))
        conv.append(res.converged)
    ordered = sorted(rows)
    mags = [abs(r[2]) for r in ordered]
    mono = all(b < a for a, b in zip(mags, mags[1:]))
    return BiasTable(rows, generator, fitter, mono, conv)
