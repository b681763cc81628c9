"""
Transport problem definition for the 1-D convection-dispersion equation.

The governing equation on ``0 <= x <= ell`` (or ``x >= 0`` when the domain is
semi-infinite) is

    c_t = D c_xx - v c_x - lambda c + gamma

with a boundary-condition pair chosen from the catalogue below. The total
solute flux across a plane is ``J = v c - D c_x``.

Entry conditions
    ``first``  : c(0, t) = c_in(t)
    ``third``  : v c(0, t) - D c_x(0, t) = v c_in(t)

Exit conditions (finite domain only)
    ``zero-gradient`` : c_x(ell, t) = 0
    ``third``         : v c(ell, t) - D c_x(ell, t) = v g_ell(t) when ``g_ell``
                        is given; otherwise the numerical solver closes the
                        exit with a conservative outflow condition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

import numpy as np


class EntryBC(str, Enum):
    FIRST = "first"
    THIRD = "third"


class ExitBC(str, Enum):
    ZERO_GRADIENT = "zero-gradient"
    THIRD = "third"


class InvalidProblemError(ValueError):
    """Raised when a problem violates one or more invariants.

    All violations are collected, not only the first one found.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class InletSignal:
    """Piecewise-constant inlet concentration.

    ``kind`` is ``constant`` (value for all t >= 0), ``step`` (0 before
    ``t_on``, ``value`` after) or ``pulse`` (``value`` on ``[t_on, t_off)``).
    """

    kind: str = "constant"
    value: float = 1.0
    t_on: float = 0.0
    t_off: float | None = None

    def pieces(self) -> list[tuple[float, float]]:
        """Return ``(start_time, value)`` pairs; each value holds until the next start."""
        if self.kind == "constant":
            return [(0.0, float(self.value))]
        if self.kind == "step":
            if self.t_on <= 0.0:
                return [(0.0, float(self.value))]
            return [(0.0, 0.0), (float(self.t_on), float(self.value))]
        if self.kind == "pulse":
            out = [(0.0, 0.0)] if self.t_on > 0.0 else []
            out.append((float(self.t_on) if self.t_on > 0.0 else 0.0, float(self.value)))
            out.append((float(self.t_off), 0.0))
            return out
        raise ValueError(f"unknown inlet kind {self.kind!r}")

    def jumps(self) -> list[tuple[float, float]]:
        """Return ``(time, increment)`` for every discontinuity after t = 0."""
        pieces = self.pieces()
        return [(t, val - prev) for (t, val), (_, prev) in zip(pieces[1:], pieces[:-1])]

    def __call__(self, t):
        """Evaluate the signal (right-continuous)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for start, val in self.pieces():
            out = np.where(t >= start, val, out)
        return out if out.ndim else float(out)

    def integral(self, t0: float, t1: float) -> float:
        """Exact integral of the signal over ``[t0, t1]``."""
        pieces = self.pieces()
        total = 0.0
        for k, (start, val) in enumerate(pieces):
            end = pieces[k + 1][0] if k + 1 < len(pieces) else math.inf
            lo, hi = max(start, t0), min(end, t1)
            if hi > lo:
                total += val * (hi - lo)
        return total

    def left_limit(self, t: float) -> float:
        """Value just before ``t`` (the value at t = 0 for t <= 0)."""
        val = self.pieces()[0][1]
        for start, v in self.pieces():
            if start < t:
                val = v
        return float(val)

    @property
    def max_value(self) -> float:
        return max(abs(v) for _, v in self.pieces())

    def scaled(self, time_factor: float, value_factor: float) -> "InletSignal":
        """Return the signal with times multiplied and values divided by the given factors."""
        return InletSignal(
            kind=self.kind,
            value=self.value / value_factor,
            t_on=self.t_on * time_factor,
            t_off=None if self.t_off is None else self.t_off * time_factor,
        )

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"type": self.kind, "value": self.value}
        if self.kind in ("step", "pulse"):
            out["t_on"] = self.t_on
        if self.kind == "pulse":
            out["t_off"] = self.t_off
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "InletSignal":
        return cls(
            kind=obj.get("type", "constant"),
            value=float(obj.get("value", 1.0)),
            t_on=float(obj.get("t_on", 0.0)),
            t_off=None if obj.get("t_off") is None else float(obj["t_off"]),
        )


@dataclass(frozen=True)
class TransportProblem:
    """Physical parameters, boundary-condition pair, inlet signal and initial state.

    ``ell is None`` denotes a semi-infinite domain, which must have
    ``bc_exit is None``. Construction does not validate; call :func:`validate`.
    """

    v: float
    D: float
    ell: float | None = 1.0
    lam: float = 0.0
    gamma: float = 0.0
    c_in: InletSignal = field(default_factory=InletSignal)
    c0_init: float = 0.0
    bc_entry: EntryBC = EntryBC.THIRD
    bc_exit: ExitBC | None = ExitBC.ZERO_GRADIENT
    g_ell: float | None = None

    @property
    def finite(self) -> bool:
        return self.ell is not None

    @property
    def peclet(self) -> float:
        if self.ell is None:
            raise ValueError("semi-infinite domain has no Peclet number")
        return self.v * self.ell / self.D

    @property
    def c_ref(self) -> float:
        m = self.c_in.max_value
        return m if m > 0.0 else 1.0

    def with_peclet(self, P: float) -> "TransportProblem":
        """Same problem with D adjusted so that v*ell/D == P."""
        if self.ell is None:
            raise ValueError("semi-infinite domain has no Peclet number")
        return replace(self, D=self.v * self.ell / P)

    def to_json(self) -> dict[str, Any]:
        return {
            "v": self.v,
            "D": self.D,
            "length": self.ell,
            "lambda": self.lam,
            "gamma": self.gamma,
            "c_in": self.c_in.to_json(),
            "init": {"type": "constant", "value": self.c0_init},
            "bc_entry": EntryBC(self.bc_entry).value,
            "bc_exit": None if self.bc_exit is None else ExitBC(self.bc_exit).value,
            "g_ell": self.g_ell,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "TransportProblem":
        """Build a problem from its JSON object.

        Malformed enum values raise :class:`InvalidProblemError`; numeric
        range checks are left to :func:`validate`.
        """
        errors = []
        try:
            entry = EntryBC(obj.get("bc_entry", "third"))
        except ValueError:
            errors.append(f"bc_entry: unknown kind {obj.get('bc_entry')!r}")
            entry = EntryBC.THIRD
        raw_exit = obj.get("bc_exit", "zero-gradient")
        try:
            exit_ = None if raw_exit is None else ExitBC(raw_exit)
        except ValueError:
            errors.append(f"bc_exit: unknown kind {raw_exit!r}")
            exit_ = None
        init = obj.get("init", {"type": "constant", "value": 0.0})
        if init.get("type", "constant") != "constant":
            errors.append(f"init: only constant initial profiles are supported, got {init.get('type')!r}")
        for key in ("v", "D"):
            if key not in obj:
                errors.append(f"{key}: missing")
        if errors:
            raise InvalidProblemError(errors)
        return cls(
            v=float(obj["v"]),
            D=float(obj["D"]),
            ell=None if obj.get("length") is None else float(obj["length"]),
            lam=float(obj.get("lambda", 0.0)),
            gamma=float(obj.get("gamma", 0.0)),
            c_in=InletSignal.from_json(obj.get("c_in", {"type": "constant", "value": 1.0})),
            c0_init=float(init.get("value", 0.0)),
            bc_entry=entry,
            bc_exit=exit_,
            g_ell=None if obj.get("g_ell") is None else float(obj["g_ell"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _positive(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x) and x > 0


def validate(problem: TransportProblem) -> list[str]:
    """Return every invariant violation of ``problem`` (empty list when valid).

    Never raises for malformed numeric content.
    """
    errors: list[str] = []
    if not _positive(problem.v):
        errors.append("v: velocity must be positive")
    if not _positive(problem.D):
        errors.append("D: dispersion coefficient must be positive")
    if problem.ell is not None and not _positive(problem.ell):
        errors.append("length: domain length must be positive")
    if not (math.isfinite(problem.lam) and problem.lam >= 0):
        errors.append("lambda: decay rate must be nonnegative")
    if not (math.isfinite(problem.gamma) and problem.gamma >= 0):
        errors.append("gamma: production rate must be nonnegative")
    if not math.isfinite(problem.c0_init):
        errors.append("init: initial concentration must be finite")

    if problem.ell is None and problem.bc_exit is not None:
        errors.append(
            f"bc_exit: semi-infinite domain cannot carry an exit condition "
            f"({ExitBC(problem.bc_exit).value!r})"
        )
    if problem.ell is not None and problem.bc_exit is None:
        errors.append("bc_exit: finite domain requires an exit condition")
    if problem.g_ell is not None and not math.isfinite(problem.g_ell):
        errors.append("g_ell: effluent coupling must be finite")

    sig = problem.c_in
    if sig.kind not in ("constant", "step", "pulse"):
        errors.append(f"c_in: unknown inlet type {sig.kind!r}")
    else:
        if not math.isfinite(sig.value):
            errors.append("c_in: inlet value must be finite")
        if sig.kind in ("step", "pulse") and not (math.isfinite(sig.t_on) and sig.t_on >= 0):
            errors.append("c_in: inlet undefined at t=0 (t_on must be >= 0)")
        if sig.kind == "pulse":
            if sig.t_off is None or not math.isfinite(sig.t_off):
                errors.append("c_in: pulse requires a finite t_off")
            elif sig.t_off <= max(sig.t_on, 0.0):
                errors.append("c_in: pulse t_off must exceed t_on")
    return errors


def require_valid(problem: TransportProblem) -> TransportProblem:
    errors = validate(problem)
    if errors:
        raise InvalidProblemError(errors)
    return problem


@dataclass(frozen=True)
class DimensionlessProblem:
    """Problem in X = x/ell, T = v t/ell, C = c/c_ref.

    The scales are kept so that :func:`redimensionalize` is an exact inverse.
    """

    P: float
    Lambda: float
    Gamma: float
    inlet: InletSignal
    C0: float
    bc_entry: EntryBC
    bc_exit: ExitBC
    G: float | None
    length_scale: float
    velocity_scale: float
    c_ref: float


def nondimensionalize(problem: TransportProblem) -> DimensionlessProblem:
    require_valid(problem)
    if problem.ell is None:
        raise ValueError("cannot nondimensionalize a semi-infinite problem: no length scale")
    ell, v, cref = problem.ell, problem.v, problem.c_ref
    return DimensionlessProblem(
        P=v * ell / problem.D,
        Lambda=problem.lam * ell / v,
        Gamma=problem.gamma * ell / (v * cref),
        inlet=problem.c_in.scaled(v / ell, cref),
        C0=problem.c0_init / cref,
        bc_entry=EntryBC(problem.bc_entry),
        bc_exit=ExitBC(problem.bc_exit),
        G=None if problem.g_ell is None else problem.g_ell / cref,
        length_scale=ell,
        velocity_scale=v,
        c_ref=cref,
    )


def redimensionalize(dp: DimensionlessProblem) -> TransportProblem:
    ell, v, cref = dp.length_scale, dp.velocity_scale, dp.c_ref
    return TransportProblem(
        v=v,
        D=v * ell / dp.P,
        ell=ell,
        lam=dp.Lambda * v / ell,
        gamma=dp.Gamma * v * cref / ell,
        c_in=dp.inlet.scaled(ell / v, 1.0 / cref),
        c0_init=dp.C0 * cref,
        bc_entry=dp.bc_entry,
        bc_exit=dp.bc_exit,
        g_ell=None if dp.G is None else dp.G * cref,
    )


def exit_closure(bc_exit, g_ell) -> str:
    """Map the exit condition onto a concrete closure.

    ``robin`` is a third-type exit with prescribed effluent ``g_ell``;
    ``outflow`` is a third-type exit with no prescribed data, closed by the
    conservative outflow condition (zero second derivative at the outlet).
    """
    if bc_exit is None:
        raise ValueError("semi-infinite domain has no exit closure")
    if ExitBC(bc_exit) is ExitBC.ZERO_GRADIENT:
        return "zero-gradient"
    return "outflow" if g_ell is None else "robin"
