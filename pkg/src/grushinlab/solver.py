"""Duhamel time stepping for the Grushin heat equation with a memory source.

The discrete trajectory ``u^n ~ u(n dt)`` solves

    u^{n+1} = S(dt) [u^n + dt F^n],
    F^n = k1 sum_j w(n, j) f(u^j) + k2 g(u^n)

(exponential Euler), where ``w`` are the product-integration weights of
:mod:`grushinlab.memory` and ``S`` the grid semigroup.  Unrolling gives the
left-rectangle Duhamel sum, so the same recursion evaluated on a *given*
trajectory defines the discrete fixed-point map used by Picard iteration;
the exponential-Euler output is an exact fixed point of it.

The predictor-corrector scheme replaces the rectangle by the trapezoid,
``u^{n+1} = S(dt)[u^n + dt/2 F^n] + dt/2 F~^{n+1}``, with ``F~`` evaluated at
the exponential-Euler prediction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from .exponents import GrushinDims, ProblemParams, alpha, critical_exponents
from .memory import MemoryWeights, TimeGrid, build_weights
from .nonlinearity import NonlinearitySpec
from .semigroup import GridFunction, GridSpec, get_operator, lp_norm

DIMS = GrushinDims(1, 1)
SCHEMES = ("expEuler", "predictorCorrector")
COMPLETED, BLOWUP, NAN_ABORT = "completed", "blowup_detected", "nan_abort"


@dataclass(frozen=True)
class SolveConfig:
    """Discretization and problem data for one run.

    ``q`` selects the Lebesgue exponent of the reported norms; ``None`` picks
    the smallest integer above both ``max(p1, p2)`` and the local-existence
    threshold ``Q max(p_i - 1) / 2``.  ``f``/``g`` default to the odd power
    laws with exponents ``p1``/``p2``.
    """

    grid: GridSpec = GridSpec()
    time: TimeGrid = TimeGrid(1.0 / 256, 512)
    params: ProblemParams = ProblemParams()
    blowup_threshold: float = 1e6
    checkpoint_stride: int = 1
    scheme: str = "expEuler"
    q: Optional[float] = None
    method: str = "generator"
    y_symbol: str = "fd"
    f: Optional[NonlinearitySpec] = None
    g: Optional[NonlinearitySpec] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.checkpoint_stride < 1:
            raise ValueError("checkpoint_stride must be >= 1")
        if not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")
        if self.q is not None and not self.q >= 1:
            raise ValueError("q must be >= 1")

    @property
    def memory_term(self) -> NonlinearitySpec:
        return self.f or NonlinearitySpec.power(float(self.params.p1))

    @property
    def source_term(self) -> NonlinearitySpec:
        return self.g or NonlinearitySpec.power(float(self.params.p2))

    @property
    def norm_exponent(self) -> float:
        if self.q is not None:
            return float(self.q)
        p1, p2 = float(self.params.p1), float(self.params.p2)
        thr = 0.5 * DIMS.homogeneous_dim * (max(p1, p2) - 1)
        return float(max(math.floor(thr) + 1, math.ceil(max(p1, p2))))

    def with_time(self, dt: float, steps: int) -> "SolveConfig":
        return replace(self, time=TimeGrid(dt, steps))

    def as_dict(self) -> dict:
        p = self.params
        return {
            "grid": self.grid.as_dict(),
            "time": {"dt": self.time.dt, "steps": self.time.steps},
            "params": {"gamma": float(p.gamma), "p1": float(p.p1), "p2": float(p.p2),
                       "coeff1": float(p.coeff1), "coeff2": float(p.coeff2)},
            "blowup_threshold": self.blowup_threshold,
            "checkpoint_stride": self.checkpoint_stride,
            "scheme": self.scheme,
            "q": self.norm_exponent,
            "method": self.method,
            "y_symbol": self.y_symbol,
            "f": self.memory_term.as_dict(),
            "g": self.source_term.as_dict(),
        }


@dataclass
class SolveTrace:
    times: List[float] = field(default_factory=list)
    sup_norms: List[float] = field(default_factory=list)
    lq_norms: List[float] = field(default_factory=list)
    weighted_norms: List[List[float]] = field(default_factory=list)
    status: str = COMPLETED
    t_max_estimate: float = math.inf
    q: float = 2.0
    ball_ratio: float = 1.0
    states: Optional[List[np.ndarray]] = None

    def as_dict(self) -> dict:
        return {"times": self.times, "sup_norms": self.sup_norms, "lq_norms": self.lq_norms,
                "weighted_norms": self.weighted_norms, "status": self.status,
                "t_max_estimate": self.t_max_estimate, "q": self.q,
                "ball_ratio": self.ball_ratio}


def nonlinear_term(u, p: float):
    """``|u|^{p-1} u`` pointwise; accepts a GridFunction or an array."""
    h = NonlinearitySpec.power(p)
    if isinstance(u, GridFunction):
        return u.with_values(h(u.values))
    return h(u)


class _Forcing:
    """Evaluates ``F^n`` from a growing history of memory-nonlinearity fields."""

    def __init__(self, config: SolveConfig, dt: float, steps: int):
        p = config.params
        self.k1, self.k2 = float(p.coeff1), float(p.coeff2)
        self.f, self.g = config.memory_term, config.source_term
        shape = (config.grid.nx, config.grid.ny)
        self.weights: Optional[MemoryWeights] = None
        self.hist = None
        if self.k1 != 0:
            self.weights = build_weights(float(p.gamma), dt, steps)
            self.hist = np.empty((steps + 1,) + shape)
        self.shape = shape

    def __call__(self, n: int, u: np.ndarray) -> np.ndarray:
        """``F^n`` with ``u`` placed at history slot ``n`` (overwriting it)."""
        out = np.zeros(self.shape)
        if self.k2 != 0:
            out += self.k2 * self.g(u)
        if self.k1 != 0:
            self.hist[n] = self.f(u)
            if n > 0:
                w = self.weights.row(n)
                out += self.k1 * np.tensordot(w, self.hist[: n + 1], axes=(0, 0))
        return out


def _norm_row(u: np.ndarray, t: float, grid: GridSpec, q: float, a1: float, a2: float,
              r1: float, r2: float):
    g = GridFunction(grid, u)
    return (float(np.abs(u).max()), lp_norm(g, q),
            [t ** a1 * lp_norm(g, r1) if t > 0 else 0.0,
             t ** a2 * lp_norm(g, r2) if t > 0 else 0.0])


def _weighted_setup(config: SolveConfig):
    q = config.norm_exponent
    Q = DIMS.homogeneous_dim
    p1, p2 = float(config.params.p1), float(config.params.p2)
    return q, float(alpha(Q, p1, q)), float(alpha(Q, p2, q)), p1 * q, p2 * q


def solve(u0: GridFunction, config: SolveConfig, keep_states: bool = False):
    """March from ``u0`` over ``config.time``; returns ``(final_state, trace)``.

    With ``keep_states`` the trace also holds every checkpoint array.  On a
    non-finite step the run stops with ``nan_abort`` and the last finite
    state; crossing ``blowup_threshold`` in sup norm stops it with
    ``blowup_detected`` and ``t_max_estimate`` set to the crossing time.
    """
    if u0.spec != config.grid:
        raise ValueError("initial data lives on a different grid than config.grid")
    sup0 = float(np.abs(u0.values).max())
    if not config.blowup_threshold > sup0:
        raise ValueError(f"blowup_threshold {config.blowup_threshold:g} must exceed "
                         f"initial sup norm {sup0:g}")
    dt, steps = config.time.dt, config.time.steps
    op = get_operator(config.grid, config.method, config.y_symbol)
    forcing = _Forcing(config, dt, steps)
    q, a1, a2, r1, r2 = _weighted_setup(config)
    trace = SolveTrace(q=q, states=[] if keep_states else None)
    lq0 = None

    def record(t, u):
        nonlocal lq0
        s, lq, wn = _norm_row(u, t, config.grid, q, a1, a2, r1, r2)
        trace.times.append(t)
        trace.sup_norms.append(s)
        trace.lq_norms.append(lq)
        trace.weighted_norms.append(wn)
        if lq0 is None:
            lq0 = lq
        elif lq0 > 0:
            trace.ball_ratio = max(trace.ball_ratio, lq / lq0)
        if keep_states:
            trace.states.append(u.copy())

    u = np.array(u0.values, dtype=float)
    record(0.0, u)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(steps):
            F = forcing(n, u)
            if config.scheme == "expEuler":
                new = op.apply_array(u + dt * F, dt)
            else:
                pred = op.apply_array(u + dt * F, dt)
                if not np.all(np.isfinite(pred)):
                    new = pred
                else:
                    new = op.apply_array(u + 0.5 * dt * F, dt) + 0.5 * dt * forcing(n + 1, pred)
            t = (n + 1) * dt
            if not np.all(np.isfinite(new)):
                trace.status = NAN_ABORT
                trace.t_max_estimate = t
                break
            u = new
            if float(np.abs(u).max()) >= config.blowup_threshold:
                record(t, u)
                trace.status = BLOWUP
                trace.t_max_estimate = t
                break
            if (n + 1) % config.checkpoint_stride == 0 or n + 1 == steps:
                record(t, u)
    return GridFunction(config.grid, u), trace


# ------------------------------------------------------- fixed-point map --

def mild_operator(u0: np.ndarray, trajectory: np.ndarray, config: SolveConfig,
                  dt: Optional[float] = None, rule: Optional[str] = None) -> np.ndarray:
    """Discrete Duhamel map applied to ``trajectory`` (shape ``(n+1, nx, ny)``
    on the uniform grid of step ``dt``).

    ``rule="rectangle"`` reproduces exponential Euler, ``"trapezoid"`` the
    predictor-corrector's quadrature.  Defaults follow ``config.scheme``.
    """
    dt = config.time.dt if dt is None else dt
    if rule is None:
        rule = "rectangle" if config.scheme == "expEuler" else "trapezoid"
    traj = np.asarray(trajectory, dtype=float)
    steps = traj.shape[0] - 1
    op = get_operator(config.grid, config.method, config.y_symbol)
    forcing = _Forcing(config, dt, max(steps, 1))
    out = np.empty_like(traj)
    out[0] = u0
    F = forcing(0, traj[0])
    for n in range(steps):
        if rule == "rectangle":
            out[n + 1] = op.apply_array(out[n] + dt * F, dt)
            F = forcing(n + 1, traj[n + 1]) if n + 1 < steps else None
        else:
            Fn1 = forcing(n + 1, traj[n + 1])
            out[n + 1] = op.apply_array(out[n] + 0.5 * dt * F, dt) + 0.5 * dt * Fn1
            F = Fn1
    return out


def _weighted_distance(diff: np.ndarray, times: np.ndarray, config: SolveConfig) -> float:
    _, a1, a2, r1, r2 = _weighted_setup(config)
    best = 0.0
    for t, d in zip(times[1:], diff[1:]):
        g = GridFunction(config.grid, d)
        best = max(best, t ** a1 * lp_norm(g, r1), t ** a2 * lp_norm(g, r2))
    return best


@dataclass
class PicardResult:
    """Distances ``d_k`` (``distances[k-1]``; ``d_1`` measures ``u_1`` against 0)."""

    T: float
    distances: List[float]
    ratios: List[float]
    diverged: bool
    times: np.ndarray
    iterate: np.ndarray
    last_increment: float = 0.0
    note: str = ""

    def contraction_ok(self, bound: float = 0.5, start: int = 2) -> bool:
        """``d_{k+1}/d_k <= bound`` for every ``k >= start`` with ``d_k`` above roundoff."""
        scale = max(self.distances[:1] or [0.0])
        ok = True
        for k in range(start, len(self.distances)):
            dk, dk1 = self.distances[k - 1], self.distances[k]
            if dk <= 1e-13 * scale:
                break
            ok &= dk1 <= bound * dk
        return ok and not self.diverged

    def as_dict(self) -> dict:
        return {"T": self.T, "distances": self.distances, "ratios": self.ratios,
                "diverged": self.diverged, "last_increment": self.last_increment,
                "note": self.note}


def picard_iterate(u0: GridFunction, T: float, iterations: int, config: SolveConfig) -> PicardResult:
    """Picard sequence ``u_1 = S(t) u0``, ``u_k = Lambda(u_{k-1})`` on ``[0, T]``.

    ``Lambda`` is :func:`mild_operator` with the quadratures of ``solve``.
    Three consecutive increases of ``d_k`` end the run with ``diverged``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    dt = config.time.dt
    steps = max(1, int(round(T / dt)))
    op = get_operator(config.grid, config.method, config.y_symbol)
    times = dt * np.arange(steps + 1)
    cur = np.empty((steps + 1, config.grid.nx, config.grid.ny))
    cur[0] = u0.values
    for n in range(steps):
        cur[n + 1] = op.apply_array(cur[n], dt)
    distances = [_weighted_distance(cur, times, config)]
    ratios: List[float] = []
    rising, diverged, note = 0, False, ""
    last_inc = float(np.abs(cur).max())
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(iterations - 1):
            nxt = mild_operator(u0.values, cur, config)
            if not np.all(np.isfinite(nxt)):
                diverged, note = True, "non-finite iterate"
                break
            d = _weighted_distance(nxt - cur, times, config)
            prev = distances[-1]
            if len(distances) >= 2:
                ratios.append(d / prev if prev > 0 else 0.0)
                rising = rising + 1 if d > prev else 0
            distances.append(d)
            last_inc = float(np.abs(nxt - cur).max())
            cur = nxt
            if rising >= 3:
                diverged = True
                note = "distances increased three times in a row: T outside the contraction window"
                break
    stride = config.checkpoint_stride
    idx = np.unique(np.r_[np.arange(0, steps + 1, stride), steps])
    return PicardResult(steps * dt, distances, ratios, diverged, times[idx], cur[idx],
                        last_inc, note)


def contraction_window(u0: GridFunction, config: SolveConfig, t_start: float = 1.0,
                       iterations: int = 6, bound: float = 0.5, max_halvings: int = 8):
    """Largest ``T = t_start / 2^m`` whose Picard ratios stay below ``bound``.

    Returns ``(T, PicardResult)``; ``T`` is ``None`` when no tried value works.
    """
    T = t_start
    last = None
    for _ in range(max_halvings + 1):
        if T < config.time.dt:
            break
        last = picard_iterate(u0, T, iterations, config)
        if last.contraction_ok(bound):
            return T, last
        T /= 2
    return None, last


def residual_check(trace: SolveTrace, config: SolveConfig, u0: Optional[GridFunction] = None) -> float:
    """Worst ``sup |u(t_n) - Lambda(u)(t_n)|`` with the map re-evaluated at
    step ``dt/2`` by the trapezoid rule on the linearly interpolated trajectory.

    Needs a trace from ``solve(..., keep_states=True)`` with stride 1.
    """
    if trace.states is None or config.checkpoint_stride != 1:
        raise ValueError("residual check needs every step stored (stride 1, keep_states=True)")
    states = np.asarray(trace.states)
    if states.shape[0] < 2:
        raise ValueError("residual check needs at least two stored steps")
    expected = np.arange(states.shape[0]) * config.time.dt
    if not np.allclose(trace.times, expected, rtol=0, atol=1e-12 * max(1.0, expected[-1])):
        raise ValueError("stored states are not on the uniform step grid")
    u_init = states[0] if u0 is None else u0.values
    fine = np.empty((2 * states.shape[0] - 1,) + states.shape[1:])
    fine[0::2] = states
    fine[1::2] = 0.5 * (states[:-1] + states[1:])
    image = mild_operator(u_init, fine, config, dt=0.5 * config.time.dt, rule="trapezoid")
    return float(np.abs(image[0::2] - states).max())


def continuous_dependence(u0: GridFunction, v0: GridFunction, config: SolveConfig) -> Dict[str, float]:
    """Empirical Lipschitz constant of the data-to-trajectory map in sup norm."""
    _, tu = solve(u0, config, keep_states=True)
    _, tv = solve(v0, config, keep_states=True)
    n = min(len(tu.states), len(tv.states))
    eps = float(np.abs(u0.values - v0.values).max())
    dist = max(float(np.abs(a - b).max()) for a, b in zip(tu.states[:n], tv.states[:n]))
    return {"data_distance": eps, "trajectory_distance": dist,
            "c_emp": dist / eps if eps > 0 else math.nan}


def blowup_time_study(u0_profile, config: SolveConfig, grid_factor: float = 1.5,
                      rel_tol: float = 0.10) -> Dict[str, object]:
    """Re-run under ``dt/2`` and a ``grid_factor`` finer grid; a blow-up label
    survives only if every estimate agrees with the base one within ``rel_tol``.
    """
    from .semigroup import sample_function

    runs = {}
    variants = {
        "base": config,
        "dt_half": config.with_time(config.time.dt / 2, config.time.steps * 2),
        "grid_fine": replace(config, grid=config.grid.refined(grid_factor)),
    }
    for name, cfg in variants.items():
        _, tr = solve(sample_function(cfg.grid, u0_profile), cfg)
        runs[name] = {"status": tr.status, "t_max_estimate": tr.t_max_estimate,
                      "max_sup": max(tr.sup_norms)}
    base = runs["base"]
    stable = all(r["status"] == BLOWUP for r in runs.values())
    if stable:
        t0 = base["t_max_estimate"]
        stable = all(abs(r["t_max_estimate"] - t0) <= rel_tol * t0 for r in runs.values())
    return {"runs": runs, "stable": stable,
            "label": BLOWUP if stable else ("inconclusive" if base["status"] == BLOWUP else base["status"])}


def exponent_context(config: SolveConfig) -> dict:
    """Critical exponents for the configured problem at the reported ``q``."""
    return critical_exponents(DIMS, config.params, q=config.norm_exponent).as_dict()
