"""Sampled solution fields and boundary-flux evaluation."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from cdeaudit.model import TransportProblem


class AnalyticSolution(Protocol):
    """Anything that can evaluate c and its derivatives in physical units."""

    def c(self, x, t): ...

    def c_x(self, x, t): ...

    def c_t(self, x, t): ...


@dataclass(frozen=True)
class FluxRecord:
    """Per-step bookkeeping written by the finite-volume solver.

    Each entry covers ``[t0[k], t1[k]]``. Fluxes are the time-averaged face
    fluxes actually used in the update, so the discrete balance telescopes.
    ``source`` is the domain integral of ``gamma - lambda c`` averaged the
    same way.
    """

    t0: np.ndarray
    t1: np.ndarray
    J_entry: np.ndarray
    J_exit: np.ndarray
    source: np.ndarray

    @property
    def dt(self) -> np.ndarray:
        return self.t1 - self.t0

    def cumulative(self) -> dict[str, float]:
        dt = self.dt
        return {
            "in": float(np.sum(self.J_entry * dt)),
            "out": float(np.sum(self.J_exit * dt)),
            "source": float(np.sum(self.source * dt)),
        }


@dataclass(frozen=True)
class BoundaryState:
    """Exit value, gradient and rate of change as asserted by a discrete closure."""

    value: np.ndarray
    gradient: np.ndarray
    dcdt: np.ndarray


@dataclass(frozen=True)
class SolutionField:
    times: np.ndarray
    x: np.ndarray
    c: np.ndarray
    provenance: str
    problem: TransportProblem
    cell_width: float | None = None
    fluxes: FluxRecord | None = None
    exit_state: BoundaryState | None = None
    exit_flux: np.ndarray | None = None
    entry_flux: np.ndarray | None = None
    analytic: AnalyticSolution | None = None
    scheme: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.c.shape != (len(self.times), len(self.x)):
            raise ValueError(f"concentration matrix {self.c.shape} does not match times x cells")
        if not np.all(np.isfinite(self.c)):
            raise ValueError("solution contains non-finite concentrations")
        if not self.provenance:
            raise ValueError("provenance must be set")

    def mass(self) -> np.ndarray:
        """Stored mass per unit cross-section at each output time."""
        if self.cell_width is not None:
            return self.c.sum(axis=1) * self.cell_width
        return np.trapezoid(self.c, self.x, axis=1)

    def _check_time(self, t: float):
        lo, hi = self.times[0], self.times[-1]
        if not (lo - 1e-12 * max(1.0, abs(hi)) <= t <= hi + 1e-12 * max(1.0, abs(hi))):
            raise ValueError(f"t={t} outside the field's time range [{lo}, {hi}]")

    def profile(self, t: float) -> np.ndarray:
        """Concentration profile at ``t``, linear in time between stored outputs."""
        self._check_time(t)
        k = int(np.searchsorted(self.times, t))
        if k < len(self.times) and np.isclose(self.times[k], t, rtol=1e-13, atol=0):
            return self.c[k]
        if k == 0:
            return self.c[0]
        if k >= len(self.times):
            return self.c[-1]
        w = (t - self.times[k - 1]) / (self.times[k] - self.times[k - 1])
        return (1 - w) * self.c[k - 1] + w * self.c[k]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,x,c\n")
        for i, t in enumerate(self.times):
            for j, xj in enumerate(self.x):
                buf.write(f"{t:.17g},{xj:.17g},{self.c[i, j]:.17g}\n")
        return buf.getvalue()

    def flux_csv(self) -> str:
        if self.fluxes is None:
            raise ValueError("field carries no flux record")
        buf = io.StringIO()
        buf.write("t,J_entry,J_exit\n")
        f = self.fluxes
        for k in range(len(f.t1)):
            buf.write(f"{f.t1[k]:.17g},{f.J_entry[k]:.17g},{f.J_exit[k]:.17g}\n")
        return buf.getvalue()


def one_sided_weights(nodes: np.ndarray, x0: float) -> tuple[np.ndarray, np.ndarray]:
    """Lagrange weights for value and first derivative at ``x0`` from three nodes.

    Exact for quadratics, hence second-order for the derivative.
    """
    x = np.asarray(nodes, dtype=float)
    w0 = np.empty(3)
    w1 = np.empty(3)
    for i in range(3):
        others = [x[j] for j in range(3) if j != i]
        denom = (x[i] - others[0]) * (x[i] - others[1])
        w0[i] = (x0 - others[0]) * (x0 - others[1]) / denom
        w1[i] = ((x0 - others[0]) + (x0 - others[1])) / denom
    return w0, w1


def boundary_value_and_gradient(field_: SolutionField, side: str, t: float) -> tuple[float, float]:
    """Concentration and gradient at a boundary, exact for analytic fields."""
    problem = field_.problem
    if side not in ("entry", "exit"):
        raise ValueError(f"side must be 'entry' or 'exit', got {side!r}")
    field_._check_time(t)
    if side == "exit" and problem.ell is None:
        raise ValueError("semi-infinite field has no exit boundary")
    xb = 0.0 if side == "entry" else float(problem.ell)
    if field_.analytic is not None:
        return float(field_.analytic.c(xb, t)), float(field_.analytic.c_x(xb, t))
    if len(field_.x) < 3:
        raise ValueError("need at least 3 nodes near the boundary")
    idx = np.arange(3) if side == "entry" else np.arange(len(field_.x) - 3, len(field_.x))
    prof = field_.profile(t)
    w0, w1 = one_sided_weights(field_.x[idx], xb)
    return float(w0 @ prof[idx]), float(w1 @ prof[idx])


def boundary_flux(field_: SolutionField, side: str, t: float) -> float:
    """Total flux ``J = v c - D c_x`` at the entry or exit plane."""
    c_b, g_b = boundary_value_and_gradient(field_, side, t)
    p = field_.problem
    return p.v * c_b - p.D * g_b


@dataclass(frozen=True)
class BreakthroughCurve:
    """Effluent flux concentration at the exit (or observation plane) over time."""

    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)
        if t.ndim != 1 or t.shape != y.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValueError("values must be finite")

    def to_csv(self) -> str:
        rows = ["t,c_flux"] + [f"{t:.17g},{c:.17g}" for t, c in zip(self.times, self.values)]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_csv(cls, text: str, meta: dict | None = None) -> "BreakthroughCurve":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].replace(" ", "") != "t,c_flux":
            raise ValueError("breakthrough CSV must start with the header 't,c_flux'")
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1], dict(meta or {}))
