"""
Conservative cell-centred finite-volume solver.

Each cell obeys

    h dc_j/dt = F_{j-1/2} - F_{j+1/2} + h (gamma + s_j(t) - lam c_j)

with interior face fluxes ``F = v c_face - D (c_{j+1} - c_j) / h`` (central or
upwind face value). Boundary faces follow the problem's BC pair:

    entry  first   F = v c_in - 2 D (c_0 - c_in) / h
           third   F = v c_in
    exit   zero-gradient   F = v c_{N-1}
           robin           F = v g_ell
           outflow         F = v c_b - D c_x,b with c linear through the last
                           two cells (zero second derivative at the outlet)

Time stepping is the theta scheme. The solver records the theta-averaged
boundary fluxes and source of every step, so the discrete balance telescopes
to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from cdeaudit.analytic.steady import NoSteadyStateError
from cdeaudit.field import BoundaryState, FluxRecord, SolutionField
from cdeaudit.model import EntryBC, TransportProblem, exit_closure, require_valid

THETA = {"implicit-euler": 1.0, "crank-nicolson": 0.5}
RANNACHER_HALF_STEPS = 4


@dataclass(frozen=True)
class Grid:
    n_cells: int
    ell: float

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ValueError("n_cells must be an integer >= 8")
        if not (self.ell > 0 and math.isfinite(self.ell)):
            raise ValueError("ell must be positive")

    @property
    def h(self) -> float:
        return self.ell / self.n_cells

    @property
    def faces(self) -> np.ndarray:
        return np.linspace(0.0, self.ell, self.n_cells + 1)

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.h


@dataclass(frozen=True)
class Operator:
    """Semi-discrete system ``h dc/dt = M c + r(t)`` in banded storage.

    Boundary face fluxes are affine in the state:
    ``F_entry = a_in c_in + a0 c_0`` and
    ``F_exit = b_g g + b1 c_{N-1} + b2 c_{N-2}``.
    """

    grid: Grid
    lower: np.ndarray  # coefficient of c_{j-1} in row j (lower[0] unused)
    diag: np.ndarray
    upper: np.ndarray  # coefficient of c_{j+1} in row j (upper[-1] unused)
    a_in: float
    a0: float
    b_g: float
    b1: float
    b2: float
    lam: float
    gamma: float
    g: float
    convection: str
    closure: str

    def apply(self, c: np.ndarray) -> np.ndarray:
        out = self.diag * c
        out[1:] += self.lower[1:] * c[:-1]
        out[:-1] += self.upper[:-1] * c[1:]
        return out

    def rhs(self, c_in: float, extra: np.ndarray | None) -> np.ndarray:
        h = self.grid.h
        r = np.full(self.grid.n_cells, h * self.gamma)
        if extra is not None:
            r += h * extra
        r[0] += self.a_in * c_in
        r[-1] -= self.b_g * self.g
        return r

    def entry_flux(self, c, c_in):
        return self.a_in * c_in + self.a0 * c[0]

    def exit_flux(self, c):
        return self.b_g * self.g + self.b1 * c[-1] + self.b2 * c[-2]

    def banded(self, scale: float) -> np.ndarray:
        """Banded storage of ``h I - scale M``."""
        n = self.grid.n_cells
        ab = np.zeros((3, n))
        ab[0, 1:] = -scale * self.upper[:-1]
        ab[1, :] = self.grid.h - scale * self.diag
        ab[2, :-1] = -scale * self.lower[1:]
        return ab


def choose_scheme(problem: TransportProblem, grid: Grid, scheme: str = "auto", convection: str | None = None):
    """Resolve ``(time scheme, convection)``; central convection needs cell Peclet <= 2."""
    cell_pe = problem.v * grid.h / problem.D
    if scheme == "auto":
        scheme = "crank-nicolson" if cell_pe <= 2 else "implicit-euler"
    if scheme not in THETA:
        raise ValueError(f"scheme must be one of {sorted(THETA)} or 'auto', got {scheme!r}")
    if convection is None:
        convection = "central" if cell_pe <= 2 else "upwind"
    if convection not in ("central", "upwind"):
        raise ValueError(f"convection must be 'central' or 'upwind', got {convection!r}")
    if convection == "central" and cell_pe > 2:
        raise ValueError(f"central convection needs cell Peclet v*h/D <= 2, got {cell_pe:.6g}")
    return scheme, convection


def assemble(problem: TransportProblem, grid: Grid, convection: str) -> Operator:
    v, D, h, n = problem.v, problem.D, grid.h, grid.n_cells
    closure = exit_closure(problem.bc_exit, problem.g_ell)
    if convection == "central":
        wL, wR = v / 2 + D / h, v / 2 - D / h
    else:
        wL, wR = v + D / h, -D / h
    lower = np.zeros(n)
    diag = np.full(n, -problem.lam * h)
    upper = np.zeros(n)
    # interior face k between cells k-1 and k: F = wL c_{k-1} + wR c_k
    # enters cell k with + and cell k-1 with -
    lower[1:] += wL
    diag[1:] += wR
    diag[:-1] -= wL
    upper[:-1] -= wR

    if EntryBC(problem.bc_entry) is EntryBC.FIRST:
        a_in, a0 = v + 2 * D / h, -2 * D / h
    else:
        a_in, a0 = v, 0.0
    diag[0] += a0

    b_g = b1 = b2 = 0.0
    if closure == "zero-gradient":
        b1 = v
    elif closure == "robin":
        b_g = v
    else:
        b1, b2 = 1.5 * v - D / h, -0.5 * v + D / h
    diag[-1] -= b1
    lower[-1] -= b2
    g = 0.0 if problem.g_ell is None else float(problem.g_ell)
    return Operator(grid, lower, diag, upper, a_in, a0, b_g, b1, b2, problem.lam, problem.gamma, g, convection, closure)


@dataclass(frozen=True)
class StepFluxes:
    J_entry: float
    J_exit: float
    source: float


def step(op: Operator, c: np.ndarray, dt: float, scheme: str, c_in: float,
         extra: np.ndarray | None = None) -> tuple[np.ndarray, StepFluxes]:
    """Advance the cell averages by ``dt``.

    ``c_in`` and ``extra`` (additional source per unit length) are the values
    at the step midpoint. Returns the new state and the theta-averaged face
    fluxes and source actually used, so that
    ``h * sum(c_new - c) == dt * (J_entry - J_exit + source)`` to round-off.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    theta = THETA[scheme]
    h = op.grid.h
    r = op.rhs(c_in, extra)
    rhs = h * c + (1 - theta) * dt * op.apply(c) + dt * r
    try:
        c_new = solve_banded((1, 1), op.banded(theta * dt), rhs, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RuntimeError(f"tridiagonal solve failed: {exc}") from exc
    c_th = theta * c_new + (1 - theta) * c
    src = h * (op.gamma * op.grid.n_cells - op.lam * c_th.sum())
    if extra is not None:
        src += h * extra.sum()
    return c_new, StepFluxes(op.entry_flux(c_th, c_in), op.exit_flux(c_th), src)


def _exit_state(op: Operator, c: np.ndarray, rate: np.ndarray, D: float, v: float):
    h = op.grid.h
    if op.closure == "zero-gradient":
        return c[-1], 0.0, rate[-1]
    value = 1.5 * c[-1] - 0.5 * c[-2]
    dcdt = 1.5 * rate[-1] - 0.5 * rate[-2]
    if op.closure == "outflow":
        return value, (c[-1] - c[-2]) / h, dcdt
    return value, v * (value - op.g) / D, dcdt


def _breakpoints(times: np.ndarray, jumps: list[float]) -> tuple[np.ndarray, set[float]]:
    t_end = times[-1]
    tol = 1e-12 * max(1.0, t_end)
    starts = {0.0}
    for t in jumps:
        if not 0.0 < t < t_end:
            continue
        # a jump within round-off of an output time starts at that output time
        near = times[np.abs(times - t) <= tol]
        starts.add(float(near[0]) if len(near) else t)
    bp = np.unique(np.concatenate([times, np.fromiter(starts, float)]))
    return bp, starts


def solve(
    problem: TransportProblem,
    grid: Grid | int,
    times,
    dt: float | None = None,
    scheme: str = "auto",
    convection: str | None = None,
    source: Callable[[np.ndarray, float], np.ndarray] | None = None,
    inlet: Callable[[float], float] | None = None,
    initial: np.ndarray | None = None,
) -> SolutionField:
    """March the finite-volume scheme over the requested output times.

    Parameters
    ----------
    problem : TransportProblem
        Validated, finite-domain problem.
    grid : Grid or int
        Grid, or a cell count on ``[0, ell]``.
    times : array_like
        Increasing output times >= 0; ``t = 0`` is always stored.
    dt : float, optional
        Upper bound on the time step (default ``0.5 h / v``). Steps are
        shortened so that every output time and inlet jump is hit exactly.
    scheme, convection : str
        See :func:`choose_scheme`.
    source : callable, optional
        Extra volumetric source ``s(x, t)`` evaluated at cell centres.
    inlet : callable, optional
        Replaces ``problem.c_in`` as the entry datum (used for manufactured
        solutions). Evaluated at step midpoints.
    initial : ndarray, optional
        Initial cell averages (default ``c0_init`` everywhere).
    """
    require_valid(problem)
    if problem.ell is None:
        raise ValueError("length: finite-volume solver needs a finite domain")
    if isinstance(grid, int):
        grid = Grid(grid, problem.ell)
    if not math.isclose(grid.ell, problem.ell, rel_tol=1e-14):
        raise ValueError("grid length does not match the problem domain")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0 or np.any(~np.isfinite(times)) or np.any(times < 0):
        raise ValueError("times must be a nonempty list of finite, nonnegative values")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if times[0] > 0:
        times = np.concatenate([[0.0], times])
    h = grid.h
    dt_max = 0.5 * h / problem.v if dt is None else float(dt)
    if not (dt_max > 0 and math.isfinite(dt_max)):
        raise ValueError("dt must be positive and finite")

    scheme, convection = choose_scheme(problem, grid, scheme, convection)
    op = assemble(problem, grid, convection)
    xc = grid.centers
    c_in_fn = problem.c_in if inlet is None else inlet
    extra_at = (lambda t: None) if source is None else (lambda t: np.asarray(source(xc, t), dtype=float))

    c = np.full(grid.n_cells, float(problem.c0_init)) if initial is None else np.array(initial, dtype=float)
    if c.shape != (grid.n_cells,):
        raise ValueError("initial state does not match the grid")

    out = np.empty((len(times), grid.n_cells))
    ex_val, ex_grad, ex_rate = (np.empty(len(times)) for _ in range(3))
    j_exit_out = np.empty(len(times))
    j_entry_out = np.empty(len(times))

    def record(k, t):
        out[k] = c
        cin_t = float(c_in_fn(t))
        rate = (op.apply(c) + op.rhs(cin_t, extra_at(t))) / h
        ex_val[k], ex_grad[k], ex_rate[k] = _exit_state(op, c, rate, problem.D, problem.v)
        j_exit_out[k] = op.exit_flux(c)
        j_entry_out[k] = op.entry_flux(c, cin_t)

    jumps = [t for t, _ in problem.c_in.jumps()] if inlet is None else []
    bp, starts = _breakpoints(times, jumps)
    t0s, t1s, fin, fout, fsrc = [], [], [], [], []
    startup = 0
    k_out = 0
    record(0, 0.0)
    k_out = 1
    for a, b in zip(bp[:-1], bp[1:]):
        if a in starts and scheme == "crank-nicolson":
            startup = RANNACHER_HALF_STEPS
        n_sub = max(1, math.ceil((b - a) / dt_max * (1 - 1e-12)))
        ds = (b - a) / n_sub
        t = a
        for i in range(n_sub):
            t_next = b if i == n_sub - 1 else a + (i + 1) * ds
            if startup > 0:
                sub = [(t, 0.5 * (t + t_next)), (0.5 * (t + t_next), t_next)]
                sch = "implicit-euler"
                startup -= 2
            else:
                sub = [(t, t_next)]
                sch = scheme
            for s0, s1 in sub:
                tm = 0.5 * (s0 + s1)
                c, fl = step(op, c, s1 - s0, sch, float(c_in_fn(tm)), extra_at(tm))
                t0s.append(s0)
                t1s.append(s1)
                fin.append(fl.J_entry)
                fout.append(fl.J_exit)
                fsrc.append(fl.source)
            t = t_next
        if not np.all(np.isfinite(c)):
            raise RuntimeError(f"non-finite concentration at t={b:.6g}")
        if k_out < len(times) and b == times[k_out]:
            record(k_out, b)
            k_out += 1

    fluxes = FluxRecord(np.array(t0s), np.array(t1s), np.array(fin), np.array(fout), np.array(fsrc))
    return SolutionField(
        times=times,
        x=xc,
        c=out,
        provenance="fv",
        problem=problem,
        cell_width=h,
        fluxes=fluxes,
        exit_state=BoundaryState(ex_val, ex_grad, ex_rate),
        exit_flux=j_exit_out,
        entry_flux=j_entry_out,
        scheme=f"{scheme}/{convection}",
        meta={"n_cells": grid.n_cells, "dt_max": dt_max, "closure": op.closure},
    )


def solve_steady(problem: TransportProblem, grid: Grid | int, convection: str | None = None,
                 inlet_value: float | None = None) -> SolutionField:
    """Solve ``M c + r = 0`` directly: the limit of the time march.

    The returned field holds one snapshot (at ``t = 0`` by convention) and
    ``meta["steady"] = True``.
    """
    require_valid(problem)
    if problem.ell is None:
        raise ValueError("length: finite-volume solver needs a finite domain")
    if isinstance(grid, int):
        grid = Grid(grid, problem.ell)
    _, convection = choose_scheme(problem, grid, "auto", convection)
    op = assemble(problem, grid, convection)
    cin = problem.c_in.pieces()[-1][1] if inlet_value is None else inlet_value
    ab = op.banded(1.0)
    ab[1, :] -= grid.h  # banded() stores h I - M; keep -M only
    try:
        c = solve_banded((1, 1), ab, op.rhs(cin, None))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NoSteadyStateError(f"steady finite-volume system is singular: {exc}") from exc
    if not np.all(np.isfinite(c)) or np.max(np.abs(c)) > 1e12 * max(1.0, abs(cin)):
        raise NoSteadyStateError("steady finite-volume system is numerically singular")
    value, grad, _ = _exit_state(op, c, np.zeros_like(c), problem.D, problem.v)
    return SolutionField(
        times=np.array([0.0]),
        x=grid.centers,
        c=c[None, :],
        provenance="fv",
        problem=problem,
        cell_width=grid.h,
        exit_state=BoundaryState(np.array([value]), np.array([grad]), np.array([0.0])),
        exit_flux=np.array([op.exit_flux(c)]),
        entry_flux=np.array([op.entry_flux(c, cin)]),
        scheme=f"steady/{convection}",
        meta={"n_cells": grid.n_cells, "closure": op.closure, "steady": True},
    )
