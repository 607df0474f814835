"""Command-line experiments.

Every subcommand reads an optional TOML file (``--config``), applies
``--set section.key=value`` overrides, writes ``summary.json`` plus CSV
series into the output directory, and exits 0 only when all assertions of
the run pass.  Exit codes: 1 failed assertion, 2 invalid configuration,
3 numerical abort.
"""
from __future__ import annotations

import argparse
import copy
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import io
from .comparison import PreconditionError, compare_solutions
from .exponents import (GrushinDims, ProblemParams, admissible_q_window, classify_regime,
                        critical_exponents, p1_star, p2_star, p2_star_star, p2_tilde)
from .kernel import kernel_property_report
from .memory import TimeGrid
from .nonlinearity import NonlinearitySpec
from .semigroup import (GridSpec, apply_semigroup, decay_slope_fit, get_operator,
                        profile_from_dict, sample_function)
from .solver import (BLOWUP, COMPLETED, DIMS, NAN_ABORT, SolveConfig, blowup_time_study,
                     contraction_window, picard_iterate, solve)

KINDS = ("exponents", "kernel-check", "decay-fit", "solve", "picard", "compare", "phase-scan")
STATUS_CODES = {COMPLETED: 0, BLOWUP: 1, NAN_ABORT: 2, "inconclusive": 3}
THREADS_ENV = "GRUSHINLAB_THREADS"

DEFAULTS: Dict[str, dict] = {
    "experiment": {"out": "grushinlab-out", "seed": 0},
    "dims": {"spatial_n": 1, "degenerate_k": 1},
    "params": {"gamma": 0.5, "p1": 3, "p2": 2, "coeff1": 1, "coeff2": 1},
    "grid": {"x_half_width": 8.0, "y_half_width": 8.0, "nx": 129, "ny": 128},
    "time": {"dt": 1.0 / 256, "steps": 512},
    "profile": {"kind": "gaussian", "amplitude": 0.1, "center": [0.0, 0.0], "widths": [1.0, 1.0]},
    "solver": {"scheme": "expEuler", "blowup_threshold": 1e6, "checkpoint_stride": 8,
               "q": "auto", "method": "generator", "y_symbol": "fd"},
    "kernel": {"t": [0.1, 0.5, 1.0], "box": [8.0, 8.0], "resolution": "auto",
               "n_samples": 100, "scale_factors": [0.5, 2.0, 4.0]},
    "decay": {"pairs": [[1, "inf"], [1, 2]], "t_min": 0.2, "t_max": 1.0, "n_times": 9,
              "profile": {"kind": "bump", "amplitude": 1.0, "center": [0.0, 0.0], "radii": [0.1, 0.1]}},
    "picard": {"T": "search", "t_start": 1.0, "iterations": 6, "bound": 0.5},
    "compare": {"lower_scale": 0.5, "T": "full", "state_max": "auto",
                "f": "default", "g": "default", "f_tilde": "default", "g_tilde": "default"},
    "scan": {"p1": [2.0, 3.0, 4.0], "p2": [1.5, 2.0, 3.0], "refine": True,
             "grid_factor": 1.5, "rel_tol": 0.1},
    "assert": {"normalization_tol": 1e-3, "symmetry_tol": 1e-8, "scaling_tol": 1e-6,
               "slope_tol": 0.08, "linear_tol": 1e-10, "contraction_bound": 0.5},
}


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config --

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "profile":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {p} is not a table")
    node[parts[-1]] = _parse_value(text.strip())


def resolve_config(path: Optional[str], overrides: List[str]) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path, "rb") as fh:
                cfg = _merge(cfg, tomllib.load(fh))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for s in overrides:
        apply_override(cfg, s)
    return cfg


def _number(v):
    """TOML numbers, or strings like ``"7/3"`` kept exact."""
    if isinstance(v, str):
        try:
            return Fraction(v)
        except ValueError as exc:
            raise ConfigError(f"not a number: {v!r}") from exc
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"not a number: {v!r}")
    return v


def _float(v) -> float:
    if isinstance(v, str) and v.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(_number(v))


def build_dims(cfg) -> GrushinDims:
    return GrushinDims(**cfg["dims"])


def build_params(cfg) -> ProblemParams:
    return ProblemParams(**{k: _number(v) for k, v in cfg["params"].items()})


def build_solve_config(cfg) -> SolveConfig:
    if build_dims(cfg) != DIMS:
        raise ConfigError("grid experiments support N = k = 1 only")
    s = cfg["solver"]
    q = s.get("q", "auto")
    return SolveConfig(
        grid=GridSpec(**cfg["grid"]),
        time=TimeGrid(float(cfg["time"]["dt"]), int(cfg["time"]["steps"])),
        params=build_params(cfg),
        blowup_threshold=float(s["blowup_threshold"]),
        checkpoint_stride=int(s["checkpoint_stride"]),
        scheme=s["scheme"],
        q=None if q == "auto" else _float(q),
        method=s["method"],
        y_symbol=s["y_symbol"],
    )


def _nonlinearity(desc, default: NonlinearitySpec) -> NonlinearitySpec:
    if desc == "default":
        return default
    if isinstance(desc, (int, float)):
        return NonlinearitySpec.power(desc)
    return NonlinearitySpec.from_dict(desc)


# ----------------------------------------------------------------- results --

class Run:
    """Collects results, assertion outcomes and artifact names for one run."""

    def __init__(self, kind: str, cfg: dict, out: Path):
        self.kind, self.cfg, self.out = kind, cfg, out
        self.results: dict = {}
        self.assertions: Dict[str, dict] = {}
        self.artifacts: List[str] = []
        self.aborted = False

    def check(self, name: str, passed: bool, value=None, threshold=None):
        self.assertions[name] = {"passed": bool(passed), "value": value, "threshold": threshold}

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions.values())

    def summary(self) -> dict:
        return {"kind": self.kind, "passed": self.passed, "aborted": self.aborted,
                "assertions": self.assertions, "results": self.results,
                "artifacts": sorted(self.artifacts), "config": self.cfg}


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}")


# ------------------------------------------------------------- experiments --

def run_exponents(run: Run):
    dims, params = build_dims(run.cfg), build_params(run.cfg)
    q = run.cfg["solver"].get("q", "auto")
    rep = critical_exponents(dims, params, q=None if q == "auto" else _number(q))
    prof = run.cfg["profile"]
    nonneg = bool(prof.get("amplitude", 1.0) >= 0)
    verdict = classify_regime(dims, params, nonneg)
    win = admissible_q_window(dims, params.p1, params.gamma)
    run.results = {"exponents": rep.as_dict(), "verdict": verdict.as_dict(),
                   "q_window": {"lo": win.lo, "hi": win.hi, "lo_closed": win.lo_closed,
                                "empty": win.empty}}
    if "expect_case" in run.cfg["assert"]:
        want = run.cfg["assert"]["expect_case"]
        run.check("case_tag", verdict.case_tag.value == want, verdict.case_tag.value, want)


def _kernel_resolution(setting, t: float):
    if setting == "auto":
        # the y-profile narrows like t, the x-profile like sqrt(t)
        return (257, 257) if t >= 0.25 else (257, 1025)
    return tuple(int(v) for v in setting)


def run_kernel_check(run: Run):
    kc, tol = run.cfg["kernel"], run.cfg["assert"]
    times = kc["t"] if isinstance(kc["t"], list) else [kc["t"]]
    rows, reports = [], []
    for t in times:
        t = float(t)
        rep = kernel_property_report(
            t, box=tuple(kc["box"]), resolution=_kernel_resolution(kc["resolution"], t),
            n_samples=int(kc["n_samples"]), seed=int(run.cfg["experiment"]["seed"]),
            scale_factors=tuple(float(r) for r in kc["scale_factors"]))
        reports.append(rep.as_dict())
        rows.append([t, rep.normalization, rep.min_value, rep.symmetry_defect, rep.scaling_defect])
        key = f"t={t:g}"
        run.check(f"normalization[{key}]", abs(rep.normalization - 1) <= tol["normalization_tol"],
                  rep.normalization, tol["normalization_tol"])
        run.check(f"positivity[{key}]", rep.min_value > 0, rep.min_value, 0.0)
        run.check(f"symmetry[{key}]", rep.symmetry_defect < tol["symmetry_tol"],
                  rep.symmetry_defect, tol["symmetry_tol"])
        run.check(f"scaling[{key}]", rep.scaling_defect < tol["scaling_tol"],
                  rep.scaling_defect, tol["scaling_tol"])
    run.results = {"reports": reports}
    io.write_csv(run.path("kernel_check.csv"),
                 ["t", "normalization", "sample_min", "symmetry_defect", "scaling_defect"], rows)


def run_decay_fit(run: Run):
    d = run.cfg["decay"]
    grid = GridSpec(**run.cfg["grid"])
    u0 = sample_function(grid, d["profile"])
    times = np.linspace(float(d["t_min"]), float(d["t_max"]), int(d["n_times"]))
    op = get_operator(grid, run.cfg["solver"]["method"], run.cfg["solver"]["y_symbol"])
    Q = DIMS.homogeneous_dim
    fits = []
    for p, q in d["pairs"]:
        p, q = _float(p), _float(q)
        fit = decay_slope_fit(u0, p, q, times, op)
        expected = -0.5 * Q * (1 / p - 1 / q)
        tag = f"{io.fmt(p)}_{io.fmt(q)}"
        fits.append({"p": p, "q": q, "slope": fit.slope, "expected": expected,
                     "residual": fit.residual, "c_emp": fit.c_emp})
        run.check(f"slope[{tag}]", abs(fit.slope - expected) <= run.cfg["assert"]["slope_tol"],
                  fit.slope, expected)
        io.write_csv(run.path(f"decay_{tag}.csv"), ["t", "norm"], zip(fit.times, fit.norms))
    run.results = {"fits": fits, "boundary_ratio": u0.boundary_ratio()}


def run_solve(run: Run):
    cfg = build_solve_config(run.cfg)
    u0 = sample_function(cfg.grid, run.cfg["profile"])
    final, trace = solve(u0, cfg)
    io.write_trace_csv(run.path("trace.csv"), trace)
    io.write_grid_function(run.path("final_state.bin"), final)
    run.results = {"status": trace.status, "t_max_estimate": trace.t_max_estimate,
                   "final_time": trace.times[-1], "max_sup_norm": max(trace.sup_norms),
                   "final_sup_norm": trace.sup_norms[-1], "ball_ratio": trace.ball_ratio,
                   "q": trace.q}
    run.aborted = trace.status == NAN_ABORT
    run.check("no_nan_abort", not run.aborted, trace.status, NAN_ABORT)
    p = cfg.params
    if p.coeff1 == 0 and p.coeff2 == 0 and trace.status == COMPLETED:
        free = apply_semigroup(u0, trace.times[-1], cfg.method, cfg.y_symbol)
        err = float(np.abs(final.values - free.values).max())
        run.results["linear_defect"] = err
        run.check("linear_matches_semigroup", err < run.cfg["assert"]["linear_tol"],
                  err, run.cfg["assert"]["linear_tol"])


def run_picard(run: Run):
    cfg = build_solve_config(run.cfg)
    pc = run.cfg["picard"]
    u0 = sample_function(cfg.grid, run.cfg["profile"])
    bound = float(run.cfg["assert"]["contraction_bound"])
    if pc["T"] == "search":
        T, res = contraction_window(u0, cfg, float(pc["t_start"]), int(pc["iterations"]), bound)
        if T is None:
            run.results = {"window": None, "picard": res.as_dict() if res else None}
            run.check("contraction_window_found", False, None, bound)
            return
    else:
        res = picard_iterate(u0, float(pc["T"]), int(pc["iterations"]), cfg)
    run.check("contraction", res.contraction_ok(bound), max(res.ratios or [0.0]), bound)
    steps = int(round(res.T / cfg.time.dt))
    final, trace = solve(u0, cfg.with_time(cfg.time.dt, steps))
    gap = float(np.abs(final.values - res.iterate[-1]).max()) if trace.status == COMPLETED else math.nan
    # a contraction with factor <= 1/2 is within one increment of its limit
    tol = res.last_increment + 1e-12 * max(trace.sup_norms)
    run.check("picard_matches_solve", gap <= tol, gap, tol)
    run.results = {"window": res.T, "picard": res.as_dict(), "solve_gap": gap}
    io.write_csv(run.path("picard.csv"), ["k", "distance"],
                 [[k + 1, d] for k, d in enumerate(res.distances)])


def run_compare(run: Run):
    cfg = build_solve_config(run.cfg)
    c = run.cfg["compare"]
    v0 = sample_function(cfg.grid, run.cfg["profile"])
    u0 = v0 * float(c["lower_scale"])
    f_def, g_def = cfg.memory_term, cfg.source_term
    f, g = _nonlinearity(c["f"], f_def), _nonlinearity(c["g"], g_def)
    ft, gt = _nonlinearity(c["f_tilde"], f_def), _nonlinearity(c["g_tilde"], g_def)
    T = None if c["T"] == "full" else float(c["T"])
    smax = None if c["state_max"] == "auto" else float(c["state_max"])
    rep = compare_solutions(u0, v0, f, g, ft, gt, T, cfg, state_max=smax)
    run.results = {"ordering": rep.as_dict()}
    (run.path("ordering.json")).write_text(io.dumps(rep.as_dict()))
    run.check("ordered", rep.passed, rep.min_defect, -rep.tolerance)


def overlay_curves(gamma, p1_range, p2_range, q_dim: int = 3, samples: int = 41):
    """Rows ``(curve, p1, p2)`` of the regime boundaries inside the scan box."""
    lo1, hi1 = p1_range
    lo2, hi2 = p2_range
    rows = []
    s1 = float(p1_star(q_dim, gamma))
    if math.isfinite(s1):
        rows += [("p1_star", s1, lo2), ("p1_star", s1, hi2)]
    for name, val in (("p2_star", p2_star(q_dim)), ("p2_star_star", p2_star_star(q_dim, gamma))):
        rows += [(name, lo1, float(val)), (name, hi1, float(val))]
    for p1 in np.linspace(lo1, hi1, samples):
        rows.append(("p2_tilde", float(p1), float(p2_tilde(float(p1), gamma))))
    return rows


def _scan_cell(run_cfg: dict, base: SolveConfig, p1: float, p2: float, dims: GrushinDims):
    s = run_cfg["scan"]
    params = replace(base.params, p1=p1, p2=p2)
    cfg = replace(base, params=params)
    prof = run_cfg["profile"]
    nonneg = bool(np.all(sample_function(cfg.grid, prof).values >= 0))
    verdict = classify_regime(dims, params, nonneg)
    try:
        _, tr = solve(sample_function(cfg.grid, prof), cfg)
        status, tmax, smax = tr.status, tr.t_max_estimate, max(tr.sup_norms)
        study = None
        if status == BLOWUP and s["refine"]:
            study = blowup_time_study(profile_from_dict(prof), cfg, float(s["grid_factor"]),
                                      float(s["rel_tol"]))
            status = study["label"]
        elif status == BLOWUP:
            status = "inconclusive"
        err = None
    except (ValueError, FloatingPointError) as exc:
        status, tmax, smax, study, err = NAN_ABORT, math.nan, math.nan, None, str(exc)
    return {"p1": p1, "p2": p2, "status": status, "status_code": STATUS_CODES[status],
            "t_max_estimate": tmax, "max_sup_norm": smax, "case_tag": verdict.case_tag.value,
            "refinement": study, "error": err}


def run_phase_scan(run: Run):
    base = build_solve_config(run.cfg)
    dims = build_dims(run.cfg)
    s = run.cfg["scan"]
    p1s = [float(_number(v)) for v in s["p1"]]
    p2s = [float(_number(v)) for v in s["p2"]]
    if min(p1s + p2s) <= 1:
        raise ConfigError("scan exponents must exceed 1")
    cells = [(a, b) for a in p1s for b in p2s]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        out = list(pool.map(lambda c: _scan_cell(run.cfg, base, c[0], c[1], dims), cells))
    io.write_csv(run.path("phase_scan.csv"),
                 ["p1", "p2", "status", "status_code", "t_max_estimate", "max_sup_norm", "case_tag"],
                 [[c["p1"], c["p2"], c["status"], c["status_code"], c["t_max_estimate"],
                   c["max_sup_norm"], c["case_tag"]] for c in out])
    gamma = float(base.params.gamma)
    io.write_csv(run.path("phase_overlay.csv"), ["curve", "p1", "p2"],
                 overlay_curves(gamma, (min(p1s), max(p1s)), (min(p2s), max(p2s))))
    run.results = {"cells": out}
    run.check("one_status_per_cell", all(c["status"] in STATUS_CODES for c in out), len(out), None)
    unstable = [c for c in out if c["status"] == BLOWUP and not (c["refinement"] or {}).get("stable")]
    run.check("blowup_labels_refinement_stable", not unstable, len(unstable), 0)
    p = base.params
    if p.coeff1 <= 0 and p.coeff2 <= 0:
        done = sum(c["status"] == COMPLETED for c in out)
        run.check("nonpositive_coefficients_global", done == len(out), done, len(out))


RUNNERS = {
    "exponents": run_exponents,
    "kernel-check": run_kernel_check,
    "decay-fit": run_decay_fit,
    "solve": run_solve,
    "picard": run_picard,
    "compare": run_compare,
    "phase-scan": run_phase_scan,
}


# ------------------------------------------------------------------ export --

def _detect_series(header: List[str]) -> str:
    h = set(header)
    if {"curve", "p1", "p2"} <= h:
        return "overlay"
    if {"p1", "p2", "status_code"} <= h:
        return "phase"
    if {"t", "sup_norm"} <= h:
        return "trace"
    if {"t", "norm"} <= h:
        return "decay"
    raise ConfigError(f"unrecognised series columns {sorted(h)}")


def export_plotdata(inputs: List[str], out_dir: Path) -> List[Path]:
    """Two- or three-column whitespace files with a commented header."""
    written = []
    out_dir.mkdir(parents=True, exist_ok=True)
    for src in inputs:
        path = Path(src)
        if not path.is_file():
            raise FileNotFoundError(f"series {src} not found")
        rows = io.read_csv(path)
        if not rows:
            raise ConfigError(f"series {src} is empty")
        kind = _detect_series(list(rows[0].keys()))
        groups: Dict[str, list] = {}
        if kind == "decay":
            header = "# log t [dimensionless]  log norm [dimensionless]"
            groups[path.stem] = [(math.log(float(r["t"])), math.log(float(r["norm"]))) for r in rows]
        elif kind == "trace":
            header = "# t [time]  sup norm [state units]"
            groups[path.stem] = [(float(r["t"]), float(r["sup_norm"])) for r in rows]
        elif kind == "phase":
            header = "# p1 [exponent]  p2 [exponent]  status code (0 completed, 1 blow-up, 2 abort, 3 inconclusive)"
            groups[path.stem] = [(float(r["p1"]), float(r["p2"]), int(r["status_code"])) for r in rows]
        else:
            header = "# p1 [exponent]  p2 [exponent]"
            for r in rows:
                groups.setdefault(f"{path.stem}_{r['curve']}", []).append((float(r["p1"]), float(r["p2"])))
        for name, data in groups.items():
            target = out_dir / f"{name}.dat"
            with open(target, "w") as fh:
                fh.write(header + "\n")
                for row in data:
                    fh.write(" ".join(io.fmt(v) for v in row) + "\n")
            written.append(target)
    return written


# -------------------------------------------------------------------- main --

def _error(kind: str, exc: Exception, out: Optional[Path]) -> int:
    record = {"error": {"type": type(exc).__name__, "message": str(exc), "kind": kind}}
    text = io.dumps(record)
    sys.stdout.write(text)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text)
        except OSError:
            pass
    return 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="grushinlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", help="TOML experiment file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. params.p1=3")
        sp.add_argument("--out", help="output directory (overrides experiment.out)")
    ex = sub.add_parser("export", help="convert CSV series to gnuplot data files")
    ex.add_argument("inputs", nargs="+")
    ex.add_argument("--out", default="plotdata")
    return ap


def run_experiment(kind: str, cfg: dict, out: Path) -> Run:
    out.mkdir(parents=True, exist_ok=True)
    run = Run(kind, cfg, out)
    RUNNERS[kind](run)
    run.artifacts.append("summary.json")
    (out / "summary.json").write_text(io.dumps(run.summary()))
    return run


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "export":
        try:
            files = export_plotdata(args.inputs, Path(args.out))
        except (OSError, ConfigError, KeyError, ValueError) as exc:
            return _error("export", exc, None)
        sys.stdout.write(io.dumps({"written": [str(f) for f in files]}))
        return 0
    out = None
    try:
        cfg = resolve_config(args.config, args.set)
        if args.out:
            cfg["experiment"]["out"] = args.out
        out = Path(cfg["experiment"]["out"])
        run = run_experiment(args.command, cfg, out)
    except (ConfigError, PreconditionError, TypeError, ValueError, KeyError) as exc:
        return _error(args.command, exc, out)
    sys.stdout.write(io.dumps({"kind": run.kind, "passed": run.passed,
                               "assertions": {k: v["passed"] for k, v in run.assertions.items()}}))
    if run.aborted:
        return 3
    return 0 if run.passed else 1


if __name__ == "__main__":
    sys.exit(main())
