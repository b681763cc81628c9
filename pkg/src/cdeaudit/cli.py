"""
Batch command-line front end.

    cdeaudit {run,solve,audit,compare,fit,sweep} --config CONFIG [--out-dir DIR] [--fail-on-violation]

Every mode reads the same JSON config. Exit codes: 0 success, 1 invalid
config (all problems listed), 2 numerical failure, 3 an audit verdict was
``violated`` and failing on violations was requested.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cdeaudit.analytic.semiinf import semiinf_field
from cdeaudit.analytic.series import series_field
from cdeaudit.audit import audit_claims, compare_curves, NORMS
from cdeaudit.field import BreakthroughCurve
from cdeaudit.fit import MODELS, fit_peclet, simulate_breakthrough
from cdeaudit.fv import solve
from cdeaudit.model import InvalidProblemError, TransportProblem, validate

MODES = ("solve", "audit", "compare", "fit", "sweep")
OUTPUT_KINDS = ("solution", "flux", "breakthrough", "audit", "comparison", "fit")
CURVE_KINDS = ("breakthrough", "flux")
PROBLEM_KEYS = ("v", "D", "length", "lambda", "gamma", "c_in", "init", "bc_entry", "bc_exit", "g_ell")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VIOLATION = 0, 1, 2, 3


class ConfigError(Exception):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass
class RunConfig:
    mode: str
    problem_json: dict
    problem: TransportProblem | None
    solver: dict
    times: np.ndarray | None
    outputs: list[dict]
    fail_on_violation: bool
    section: dict = field(default_factory=dict)
    sweep: list[dict] = field(default_factory=list)
    base_dir: Path = Path(".")


# -- config -----------------------------------------------------------------


def _times(tcfg, errors) -> np.ndarray | None:
    if tcfg is None:
        return None
    if "times" in tcfg:
        t = np.asarray(tcfg["times"], dtype=float)
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0) or np.any(t < 0):
            errors.append("time.times: need >= 2 strictly increasing nonnegative values")
            return None
        return t
    try:
        t_end, n_out = float(tcfg["t_end"]), int(tcfg.get("n_out", 21))
    except (KeyError, TypeError, ValueError):
        errors.append("time: give either 'times' or 't_end' (and optional 'n_out')")
        return None
    if not t_end > 0 or n_out < 2:
        errors.append("time: t_end must be positive and n_out >= 2")
        return None
    return np.linspace(0.0, t_end, n_out)


def _problem(obj, where, errors) -> TransportProblem | None:
    if not isinstance(obj, dict):
        errors.append(f"{where}: missing or not an object")
        return None
    unknown = sorted(set(obj) - set(PROBLEM_KEYS))
    if unknown:
        errors.append(f"{where}: unknown keys {unknown}")
    try:
        p = TransportProblem.from_json(obj)
    except InvalidProblemError as exc:
        errors.extend(f"{where}.{e}" for e in exc.violations)
        # still report range violations of the remaining fields
        bad = {e.split(":")[0] for e in exc.violations}
        rest = {k: val for k, val in obj.items() if k not in bad}
        if "v" in rest and "D" in rest:
            try:
                errors.extend(f"{where}.{e}" for e in validate(TransportProblem.from_json(rest)))
            except (InvalidProblemError, TypeError, ValueError):
                pass
        return None
    except (TypeError, ValueError) as exc:
        errors.append(f"{where}: {exc}")
        return None
    errors.extend(f"{where}.{e}" for e in validate(p))
    return p


def parse_config(raw: dict, mode: str | None, base_dir: Path, fail_flag: bool = False) -> RunConfig:
    """Validate a config object, collecting every problem before failing."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config: top level must be a JSON object"])
    cfg_mode = raw.get("mode")
    if mode is None:
        mode = cfg_mode
    elif cfg_mode is not None and cfg_mode != mode:
        errors.append(f"mode: config says {cfg_mode!r} but the '{mode}' subcommand was used")
    if mode not in MODES:
        raise ConfigError(errors + [f"mode: must be one of {MODES}, got {mode!r}"])

    problem_json = raw.get("problem")
    problem = _problem(problem_json, "problem", errors)
    solver = raw.get("solver", {}) or {}
    if not isinstance(solver, dict):
        errors.append("solver: must be an object")
        solver = {}
    kind = solver.get("kind", "fv")
    if kind not in ("fv", "series", "semiinf"):
        errors.append(f"solver.kind: must be 'fv', 'series' or 'semiinf', got {kind!r}")
    n_cells = solver.get("n_cells", 200)
    if not isinstance(n_cells, int) or n_cells < 8:
        errors.append("solver.n_cells: must be an integer >= 8")
    times = _times(raw.get("time"), errors)

    outputs = raw.get("outputs", [])
    if not isinstance(outputs, list):
        errors.append("outputs: must be a list")
        outputs = []
    paths = []
    for i, out in enumerate(outputs):
        if not isinstance(out, dict) or out.get("kind") not in OUTPUT_KINDS or not isinstance(out.get("path"), str):
            errors.append(f"outputs[{i}]: need kind in {OUTPUT_KINDS} and a string path")
            continue
        paths.append(out["path"])
    if len(set(paths)) != len(paths):
        errors.append("outputs: paths must be distinct")

    section = raw.get(mode, {}) if mode in ("audit", "compare", "fit") else {}
    if mode == "compare":
        for key in ("a", "b"):
            _check_curve_source(section.get(key), f"compare.{key}", base_dir, errors)
        if section.get("norm", "Linf") not in NORMS:
            errors.append(f"compare.norm: must be one of {NORMS}")
    if mode == "fit":
        _check_curve_source(section.get("curve"), "fit.curve", base_dir, errors)
        if section.get("model") not in MODELS:
            errors.append(f"fit.model: must be one of {MODELS}")
        b = section.get("bounds", [0.1, 1000.0])
        if not (isinstance(b, list) and len(b) == 2 and 0 < b[0] < b[1]):
            errors.append("fit.bounds: need [P_lo, P_hi] with 0 < P_lo < P_hi")
    if mode in ("solve", "audit") or (mode == "sweep" and raw.get("sweep", {}).get("mode") in ("solve", "audit")):
        if raw.get("time") is None and not (mode == "audit" and section.get("steady")):
            errors.append("time: required for this mode")
    if kind == "semiinf" and mode == "solve" and not solver.get("x"):
        errors.append("solver.x: semi-infinite solutions need explicit sample positions")

    sweep = []
    if mode == "sweep":
        sweep_cfg = raw.get("sweep")
        if not isinstance(sweep_cfg, dict) or sweep_cfg.get("mode") not in ("solve", "audit", "fit"):
            errors.append("sweep.mode: must be 'solve', 'audit' or 'fit'")
        else:
            sweep = sweep_cfg.get("overrides", [])
            if not isinstance(sweep, list) or not sweep:
                errors.append("sweep.overrides: need a nonempty list of objects")
                sweep = []
            for i, ov in enumerate(sweep):
                if not isinstance(ov, dict):
                    errors.append(f"sweep.overrides[{i}]: must be an object")
                    continue
                bad = sorted(set(ov) - set(PROBLEM_KEYS))
                if bad:
                    errors.append(f"sweep.overrides[{i}]: unknown problem fields {bad}")
                elif problem_json is not None:
                    _problem({**problem_json, **ov}, f"sweep.overrides[{i}]", errors)
            sub = {k: v for k, v in raw.items() if k not in ("sweep", "mode")}
            sub_errors = []
            try:
                parse_config({**sub, "mode": sweep_cfg["mode"]}, sweep_cfg["mode"], base_dir)
            except ConfigError as exc:
                sub_errors = exc.errors
            errors.extend(f"sweep: {e}" for e in sub_errors if e not in errors)

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        mode=mode,
        problem_json=problem_json,
        problem=problem,
        solver={"kind": kind, "n_cells": n_cells, **{k: v for k, v in solver.items() if k not in ("kind", "n_cells")}},
        times=times,
        outputs=outputs,
        fail_on_violation=bool(raw.get("fail_on_violation", False)) or fail_flag,
        section=section if isinstance(section, dict) else {},
        sweep=sweep,
        base_dir=base_dir,
    )


def _check_curve_source(src, where, base_dir, errors):
    if isinstance(src, str):
        if not (base_dir / src).is_file():
            errors.append(f"{where}: file {src!r} not found")
    elif isinstance(src, dict):
        if src.get("model") not in MODELS:
            errors.append(f"{where}.model: must be one of {MODELS}")
        if "problem" in src:
            bad = sorted(set(src["problem"]) - set(PROBLEM_KEYS))
            if bad:
                errors.append(f"{where}.problem: unknown problem fields {bad}")
    else:
        errors.append(f"{where}: give a breakthrough CSV path or a {{model, problem?}} object")


# -- execution --------------------------------------------------------------


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _curve_times(cfg: RunConfig) -> np.ndarray:
    t = cfg.times if cfg.times is not None else np.linspace(0.0, 3.0, 61)
    return t[t > 0]


def _field(cfg: RunConfig):
    p, s = cfg.problem, cfg.solver
    if s["kind"] == "fv":
        return solve(p, s["n_cells"], cfg.times, dt=s.get("dt"), scheme=s.get("scheme", "auto"))
    if s["kind"] == "series":
        return series_field(p, cfg.times, s.get("x"), n_terms=s.get("n_terms", 50))
    return semiinf_field(p, cfg.times, s["x"], kind=s.get("semiinf_kind", "resident"))


def _breakthrough_from_field(f, problem) -> BreakthroughCurve:
    keep = f.times > 0
    if f.exit_flux is not None:
        vals = f.exit_flux[keep] / problem.v
    elif f.analytic is not None:
        ell = problem.ell
        vals = np.array([f.analytic.c(ell, t) - problem.D / problem.v * f.analytic.c_x(ell, t) for t in f.times[keep]])
    else:
        vals = f.c[keep, -1]
    return BreakthroughCurve(f.times[keep], vals, {"provenance": f.provenance})


def _curve_from_source(src, cfg: RunConfig) -> BreakthroughCurve:
    if isinstance(src, str):
        return BreakthroughCurve.from_csv((cfg.base_dir / src).read_text(encoding="utf-8"))
    pj = {**cfg.problem_json, **src.get("problem", {})}
    errors: list[str] = []
    p = _problem(pj, "curve problem", errors)
    if errors:
        raise ConfigError(errors)
    if "P_true" in src:
        p = p.with_peclet(float(src["P_true"]))
    return simulate_breakthrough(p, src["model"], _curve_times(cfg), n_cells=cfg.solver["n_cells"])


def _pair_label(p: TransportProblem) -> str:
    exit_ = "semi-infinite" if p.bc_exit is None else getattr(p.bc_exit, "value", p.bc_exit)
    return f"{getattr(p.bc_entry, 'value', p.bc_entry)}/{exit_}"


def _curve_label(src, curve: BreakthroughCurve) -> str:
    if isinstance(src, str):
        return src
    m = curve.meta
    return f"{m.get('model')} {m.get('bc_entry')}/{m.get('bc_exit')}, P={m.get('P_true'):.6g}"


@dataclass
class Outcome:
    written: list[tuple[str, Path, str]] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)
    violated: list[str] = field(default_factory=list)


def _emit(cfg: RunConfig, out_dir: Path, products: dict, labels: dict, outcome: Outcome):
    for out in cfg.outputs:
        kind, path = out["kind"], out_dir / out["path"]
        src = out.get("source")
        key = f"{kind}:{src}" if src else kind
        if key not in products:
            raise ConfigError([f"outputs: mode '{cfg.mode}' does not produce {key!r}"])
        text, summary = products[key]
        _write(path, text)
        outcome.written.append((kind, path, labels.get(key, path.stem)))
        outcome.lines.append(f"wrote {kind} -> {path} ({summary})")
        if kind == "audit":
            side = path.with_name(path.stem + "_deficit.csv")
            _write(side, products["audit:deficit"][0])
            outcome.written.append(("deficit", side, "entry flux deficit"))


def execute(cfg: RunConfig, out_dir: Path) -> Outcome:
    outcome = Outcome()
    products: dict[str, tuple[str, str]] = {}
    labels: dict[str, str] = {}
    p = cfg.problem
    if cfg.mode == "solve":
        f = _field(cfg)
        products["solution"] = (f.to_csv(), f"{len(f.times)} times x {len(f.x)} nodes, {f.provenance}")
        if f.fluxes is not None:
            flux = f.flux_csv()
            products["flux"] = (flux, f"{len(f.fluxes.t1)} steps")
        if p.ell is not None:
            curve = _breakthrough_from_field(f, p)
            products["breakthrough"] = (curve.to_csv(), f"{len(curve.times)} points")
            labels["breakthrough"] = f"{f.provenance} {_pair_label(p)}"
    elif cfg.mode == "audit":
        sec = cfg.section
        rep = audit_claims(p, cfg.times, n_cells=sec.get("n_cells", cfg.solver["n_cells"]),
                           levels=sec.get("levels", 3), steady=bool(sec.get("steady", False)))
        js = rep.to_json()
        products["audit"] = (_dump_json(js), "verdicts " + ", ".join(
            f"{k}={v.status}" for k, v in sorted(rep.verdicts.items())))
        t, d = rep.entry_flux_deficit
        products["audit:deficit"] = (
            "t,entry_flux_deficit\n" + "".join(f"{a:.17g},{b:.17g}\n" for a, b in zip(t, d)), "")
        for k, v in sorted(rep.verdicts.items()):
            outcome.lines.append(f"claim ({k}): {v.status}, margin {v.margin:.6g}, threshold {v.threshold:.6g}")
            if v.status == "violated":
                outcome.violated.append(k)
    elif cfg.mode == "compare":
        a = _curve_from_source(cfg.section["a"], cfg)
        b = _curve_from_source(cfg.section["b"], cfg)
        rep = compare_curves(a, b, cfg.section.get("norm", "Linf"))
        products["comparison"] = (_dump_json(rep.to_json()), f"{rep.norm} = {rep.value:.6g} at t = {rep.t_max:.6g}")
        products["breakthrough:a"] = (a.to_csv(), f"{len(a.times)} points")
        products["breakthrough:b"] = (b.to_csv(), f"{len(b.times)} points")
        labels["breakthrough:a"] = "a: " + _curve_label(cfg.section["a"], a)
        labels["breakthrough:b"] = "b: " + _curve_label(cfg.section["b"], b)
        outcome.lines.append(f"comparison: {rep.norm} = {rep.value:.6g}, max discrepancy at t = {rep.t_max:.6g}")
    elif cfg.mode == "fit":
        sec = cfg.section
        curve = _curve_from_source(sec["curve"], cfg)
        res = fit_peclet(curve, sec["model"], p, tuple(sec.get("bounds", (0.1, 1000.0))),
                         fit_lambda=bool(sec.get("fit_lambda", False)), n_cells=cfg.solver["n_cells"])
        products["fit"] = (res.dumps(), f"P_hat = {res.P_hat:.10g}, converged = {res.converged}")
        products["breakthrough"] = (curve.to_csv(), f"{len(curve.times)} points")
        labels["breakthrough"] = "data: " + _curve_label(sec["curve"], curve)
        outcome.lines.append(f"fit: P_hat = {res.P_hat:.10g} ({res.model}), converged = {res.converged}")
    _emit(cfg, out_dir, products, labels, outcome)
    return outcome


def _suffix(path: str, i: int) -> str:
    pth = Path(path)
    return str(pth.with_name(f"{pth.stem}_{i:03d}{pth.suffix}"))


def run_sweep(raw: dict, cfg: RunConfig, out_dir: Path, parallelism: int) -> Outcome:
    sub_mode = raw["sweep"]["mode"]
    base = {k: v for k, v in raw.items() if k not in ("sweep", "mode")}
    jobs = []
    for i, ov in enumerate(cfg.sweep):
        sub = dict(base)
        sub["problem"] = {**cfg.problem_json, **ov}
        sub["outputs"] = [{**o, "path": _suffix(o["path"], i)} for o in cfg.outputs]
        jobs.append(parse_config(sub, sub_mode, cfg.base_dir, cfg.fail_on_violation))
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        results = list(pool.map(lambda c: execute(c, out_dir), jobs))
    total = Outcome()
    for i, res in enumerate(results):
        total.written += res.written
        total.lines += [f"[{i:03d}] {ln}" for ln in res.lines]
        total.violated += [f"{i:03d}:{v}" for v in res.violated]
    return total


def emit_plotscript(outputs: list[tuple[str, Path]], out_dir: Path) -> Path | None:
    """Write ``plot.gp`` overlaying the emitted curves; never computes numbers."""
    curves = [(k, p, lab) for k, p, lab in outputs if k in ("breakthrough", "deficit")]
    if not curves:
        print("warning: no curve outputs; plot script not written", file=sys.stderr)
        return None
    lines = ["# gnuplot script; plots the CSV files written by this run",
             "set datafile separator ','", "set key autotitle columnhead", "set xlabel 't'"]
    if all(k == "deficit" for k, _, _ in curves):
        lines.append("set ylabel 'v c_in - J(0,t)'")
    else:
        lines.append("set ylabel 'effluent flux concentration'")
    parts = [f"'{os.path.relpath(p, out_dir)}' using 1:2 with lines title '{lab}'" for _, p, lab in curves]
    lines.append("plot " + ", \\\n     ".join(parts))
    path = out_dir / "plot.gp"
    _write(path, "\n".join(lines) + "\n")
    return path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="cdeaudit", description=__doc__.strip().splitlines()[0])
    parser.add_argument("mode", choices=("run",) + MODES, help="run uses the config's own 'mode' key")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out-dir", default=".", help="directory for emitted files (default: .)")
    parser.add_argument("--fail-on-violation", action="store_true", help="exit 3 when any verdict is violated")
    args = parser.parse_args(argv)

    cfg_path = Path(args.config)
    try:
        raw = json.loads(cfg_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {cfg_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    env = os.environ.get("CDE_PARALLELISM", "1")
    try:
        parallelism = int(env)
        if parallelism < 1:
            raise ValueError
    except ValueError:
        print(f"config error: CDE_PARALLELISM must be a positive integer, got {env!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(raw, None if args.mode == "run" else args.mode, cfg_path.parent, args.fail_on_violation)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out_dir)
    stage = cfg.mode
    try:
        if cfg.mode == "sweep":
            outcome = run_sweep(raw, cfg, out_dir, parallelism)
        else:
            outcome = execute(cfg, out_dir)
        stage = "plot script"
        script = emit_plotscript(outcome.written, out_dir)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # numerical failures of any kind end the run
        print(f"numerical failure during {stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for line in outcome.lines:
        print(line)
    if script is not None:
        print(f"wrote plot script -> {script}")
    sys.stdout.flush()
    if outcome.violated and cfg.fail_on_violation:
        print(f"violated: {', '.join(outcome.violated)}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
