"""Numerical witnesses for ordering of solutions.

Each check runs the solver with one fixed discretization and reduces the
pointwise differences over all checkpoints.  Tolerances scale with the
largest sup norm seen, because FFT roundoff is proportional to magnitude.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .exponents import ProblemParams
from .nonlinearity import NonlinearitySpec, dominated_on_range
from .semigroup import GridFunction, get_operator
from .solver import COMPLETED, SolveConfig, mild_operator, solve

ORDER_RTOL = 1e-8


class PreconditionError(ValueError):
    """Input data violate the hypotheses of an ordering check."""


@dataclass
class OrderingReport:
    min_defect: float
    argmin: Tuple[float, int, int]
    violation_count: int
    tolerance: float
    statuses: Tuple[str, str] = (COMPLETED, COMPLETED)
    max_abs_diff: float = 0.0
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.min_defect >= -self.tolerance

    def as_dict(self) -> dict:
        t, ix, iy = self.argmin
        return {"min_defect": self.min_defect,
                "argmin": {"t": t, "x_index": ix, "y_index": iy},
                "violation_count": self.violation_count,
                "tolerance": self.tolerance,
                "passed": self.passed,
                "statuses": list(self.statuses),
                "max_abs_diff": self.max_abs_diff,
                "notes": self.notes}


def ordering_report(lower: np.ndarray, upper: np.ndarray, times, tolerance: float) -> OrderingReport:
    """Reduce ``upper - lower`` over a stack of checkpoint fields."""
    diff = np.asarray(upper) - np.asarray(lower)
    flat = int(np.argmin(diff))
    n, ix, iy = np.unravel_index(flat, diff.shape)
    return OrderingReport(
        min_defect=float(diff.reshape(-1)[flat]),
        argmin=(float(times[n]), int(ix), int(iy)),
        violation_count=int(np.count_nonzero(diff < -tolerance)),
        tolerance=tolerance,
        max_abs_diff=float(np.abs(diff).max()),
    )


def _horizon(config: SolveConfig, T: Optional[float]) -> SolveConfig:
    if T is None:
        return config
    steps = max(1, int(round(T / config.time.dt)))
    return config.with_time(config.time.dt, steps)


def compare_solutions(u0: GridFunction, v0: GridFunction,
                      f: NonlinearitySpec, g: NonlinearitySpec,
                      f_tilde: NonlinearitySpec, g_tilde: NonlinearitySpec,
                      T: Optional[float], config: SolveConfig,
                      state_max: Optional[float] = None) -> OrderingReport:
    """Solve the ``(u0, f, g)`` and ``(v0, f~, g~)`` problems and measure
    ``min(v - u)`` over grid and checkpoints.

    The nonlinearity ordering is checked on ``[0, state_max]`` (default: twice
    the larger initial sup norm); a note is added if the states leave it.
    """
    p = config.params
    if p.coeff1 < 0 or p.coeff2 < 0:
        raise PreconditionError("ordering of solutions needs k1, k2 >= 0")
    if np.any(u0.values < 0):
        raise PreconditionError("u0 must be nonnegative")
    if np.any(u0.values > v0.values):
        raise PreconditionError("u0 <= v0 fails on the grid")
    if state_max is None:
        state_max = 2.0 * float(max(np.abs(u0.values).max(), np.abs(v0.values).max()))
    for lo, hi, name in ((f, f_tilde, "memory"), (g, g_tilde, "source")):
        ok, margin = dominated_on_range(lo, hi, state_max)
        if not ok:
            raise PreconditionError(f"{name} nonlinearities are not ordered on "
                                    f"[0, {state_max:g}] (worst margin {margin:.3g})")
    cfg = _horizon(config, T)
    _, tu = solve(u0, replace(cfg, f=f, g=g), keep_states=True)
    _, tv = solve(v0, replace(cfg, f=f_tilde, g=g_tilde), keep_states=True)
    n = min(len(tu.states), len(tv.states))
    us, vs = np.asarray(tu.states[:n]), np.asarray(tv.states[:n])
    scale = max(max(tu.sup_norms), max(tv.sup_norms))
    rep = ordering_report(us, vs, tu.times[:n], ORDER_RTOL * scale)
    rep.statuses = (tu.status, tv.status)
    if max(us.max(), vs.max()) > state_max:
        rep.notes.append(f"states exceeded the checked range [0, {state_max:g}]")
    neg = float(us.min())
    if neg < -rep.tolerance:
        rep.notes.append(f"u dipped to {neg:.3g} below zero")
    return rep


@dataclass
class SupersolutionReport:
    is_supersolution: bool
    defect: float
    worst_location: Tuple[float, int, int]
    tolerance: float
    descent_distances: List[float]
    descent_monotone: bool
    max_increase: float
    above_solution: bool
    min_gap_to_solution: float
    final_distance_to_solution: float
    order_preserving: bool
    notes: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["worst_location"] = {"t": self.worst_location[0], "x_index": self.worst_location[1],
                               "y_index": self.worst_location[2]}
        return d


def supersolution_check(v: np.ndarray, u0: GridFunction, config: SolveConfig,
                        descent_steps: int = 5) -> SupersolutionReport:
    """Test ``v >= Lambda(v)`` on a trajectory stored at every step.

    ``v`` has shape ``(steps+1, nx, ny)`` on the step grid of ``config``.
    The descent ``w_1 = v``, ``w_k = Lambda(w_{k-1})`` is then run and
    compared with the solver output ``u``.  Monotone descent is guaranteed
    only when the map preserves order (``k1, k2 >= 0``); otherwise the report
    records the observed behaviour and convergence to ``u``.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v < -ORDER_RTOL * np.abs(v).max()):
        raise PreconditionError("trajectory must be nonnegative")
    steps = v.shape[0] - 1
    cfg = config.with_time(config.time.dt, steps)
    times = cfg.time.times
    tol = ORDER_RTOL * float(np.abs(v).max())
    lam_v = mild_operator(u0.values, v, cfg)
    rep = ordering_report(lam_v, v, times, tol)
    _, tu = solve(u0, replace(cfg, checkpoint_stride=1), keep_states=True)
    u = np.asarray(tu.states)
    p = cfg.params
    order_preserving = p.coeff1 >= 0 and p.coeff2 >= 0
    notes = []
    if not rep.passed:
        notes.append(f"not a supersolution: v - Lambda(v) = {rep.min_defect:.3g} at t={rep.argmin[0]:g}, "
                     f"index ({rep.argmin[1]}, {rep.argmin[2]})")
    w_prev, w = v, lam_v
    dists, max_inc, min_gap = [], 0.0, float((v - u).min()) if u.shape == v.shape else np.nan
    for k in range(descent_steps):
        if k > 0:
            w_prev, w = w, mild_operator(u0.values, w, cfg)
        max_inc = max(max_inc, float((w - w_prev).max()))
        if u.shape == w.shape:
            min_gap = min(min_gap, float((w - u).min()))
        dists.append(float(np.abs(w - w_prev).max()))
    final = float(np.abs(w - u).max()) if u.shape == w.shape else np.nan
    if u.shape != v.shape:
        notes.append(f"solver stopped with {tu.status}; solution comparison skipped")
    if not order_preserving:
        notes.append("k1 or k2 negative: Lambda reverses order, monotone descent not expected")
    return SupersolutionReport(
        is_supersolution=rep.passed, defect=rep.min_defect, worst_location=rep.argmin,
        tolerance=tol, descent_distances=dists, descent_monotone=max_inc <= tol,
        max_increase=max_inc, above_solution=bool(min_gap >= -tol), min_gap_to_solution=min_gap,
        final_distance_to_solution=final, order_preserving=order_preserving, notes=notes)


@dataclass
class DominationReport:
    defect: float
    argmin: Tuple[float, int, int]
    min_value: float
    status: str
    passed: bool
    times: List[float]

    def as_dict(self) -> dict:
        return {"defect": self.defect,
                "argmin": {"t": self.argmin[0], "x_index": self.argmin[1], "y_index": self.argmin[2]},
                "min_value": self.min_value, "status": self.status, "passed": self.passed}


def free_domination_check(u0: GridFunction, params: ProblemParams, T: Optional[float],
                          config: SolveConfig, defect_tol: float = 1e-8,
                          negativity_tol: float = 1e-10) -> DominationReport:
    """Worst value of ``S(t) u0 - u(t)`` and of ``u`` over the checkpoints,
    for nonnegative data and nonpositive coefficients."""
    if params.coeff1 > 0 or params.coeff2 > 0:
        raise PreconditionError("free-solution domination needs k1, k2 <= 0")
    if np.any(u0.values < 0):
        raise PreconditionError("u0 must be nonnegative")
    cfg = replace(_horizon(config, T), params=params)
    _, tr = solve(u0, cfg, keep_states=True)
    op = get_operator(cfg.grid, cfg.method, cfg.y_symbol)
    states = np.asarray(tr.states)
    free = np.stack([u0.values if t == 0 else op.apply_array(u0.values, t) for t in tr.times])
    rep = ordering_report(states, free, tr.times, defect_tol)
    min_u = float(states.min())
    passed = rep.min_defect >= -defect_tol and min_u >= -negativity_tol and tr.status == COMPLETED
    return DominationReport(rep.min_defect, rep.argmin, min_u, tr.status, passed, list(tr.times))
