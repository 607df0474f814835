"""Acceptance criteria 1-12, one test each.

Every test prints ``criterion N: PASS|FAIL <measurements>``; the lines are
also repeated in the pytest terminal summary.  Run alone with

    python3 -m pytest tests/test_acceptance.py -v
"""
import json
import math
import time
from fractions import Fraction as F

import numpy as np
import pytest

from grushinlab.cli import main as cli_main
from grushinlab.comparison import compare_solutions, free_domination_check
from grushinlab.exponents import GrushinDims, ProblemParams, critical_exponents, q_sc1, q_sc2, p2_tilde
from grushinlab.kernel import (
    chapman_kolmogorov, grushin_kernel, kernel_property_report, mehler_hermite_oracle, mehler_kernel,
)
from grushinlab.memory import TimeGrid, build_weights, fractional_integral
from grushinlab.nonlinearity import NonlinearitySpec
from grushinlab.semigroup import Bump, Gaussian, GridSpec, apply_semigroup, decay_slope_fit, sample_function
from grushinlab.solver import (
    BLOWUP, SolveConfig, contraction_window, residual_check, solve,
)

DESK = GridSpec(8.0, 8.0, 129, 128)
SMALL = GridSpec(8.0, 8.0, 65, 64)


def _report(log, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    log.append(line)
    assert ok, line


def test_criterion_01_kernel_identities(acceptance_log):
    start = time.perf_counter()
    parts, ok = [], True
    for t, res in ((0.1, (257, 1025)), (0.5, (257, 257)), (1.0, (257, 257))):
        rep = kernel_property_report(t, box=(8, 8), resolution=res, n_samples=1000, seed=1,
                                     scale_factors=(0.5, 2.0, 4.0))
        ok &= abs(rep.normalization - 1) <= 1e-3
        ok &= rep.min_value > 0
        ok &= rep.symmetry_defect < 1e-8
        ok &= rep.scaling_defect < 1e-6
        parts.append(f"t={t:g}: |norm-1|={abs(rep.normalization - 1):.1e} min={rep.min_value:.2e} "
                     f"sym={rep.symmetry_defect:.1e} scale={rep.scaling_defect:.1e}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    _report(acceptance_log, 1, ok, "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_02_mehler_cross_validation(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_scaled, worst_rel = 0.0, 0.0
    for _ in range(200):
        lam = rng.uniform(0.2, 5.0)
        t = rng.uniform(0.2, 5.0) / lam
        x, x0 = rng.uniform(-2, 2, 2)
        o = mehler_hermite_oracle(lam, x, x0, t, terms=200)
        m = mehler_kernel(lam, x, x0, t)
        # Cauchy-Schwarz scale: the series cancels to roundoff of this size
        scale = math.sqrt(mehler_kernel(lam, x, x, t) * mehler_kernel(lam, x0, x0, t))
        worst_scaled = max(worst_scaled, abs(o.value - m) / scale)
        if m >= 1e-3 * scale:
            worst_rel = max(worst_rel, abs(o.value - m) / m)
    x, x0, t = 0.7, -0.4, 0.8
    m0 = mehler_kernel(0.0, x, x0, t)
    errs = [abs(mehler_kernel(lam, x, x0, t) - m0) for lam in (1e-3, 5e-4, 2.5e-4)]
    orders = [math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2])]
    elapsed = time.perf_counter() - start
    ok = worst_scaled < 1e-10 and worst_rel < 1e-10 and min(orders) > 1.9 and elapsed < 60
    _report(acceptance_log, 2, ok, f"scaled={worst_scaled:.1e} rel={worst_rel:.1e} "
            f"lambda->0 orders={orders[0]:.3f},{orders[1]:.3f} {elapsed:.1f}s")


def test_criterion_03_chapman_kolmogorov(acceptance_log):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        x, x0 = rng.uniform(-1, 1, 2)
        y = rng.uniform(-0.5, 0.5)
        s, t = rng.uniform(0.3, 0.7, 2)
        composed = chapman_kolmogorov(x, x0, y, s, t)
        direct = grushin_kernel(x, x0, y, s + t)
        worst = max(worst, abs(composed - direct) / direct)
    _report(acceptance_log, 3, worst < 1e-4, f"worst relative={worst:.1e} on 10 points")


def test_criterion_04_smoothing_slopes(acceptance_log):
    start = time.perf_counter()
    u0 = sample_function(DESK, Bump(1.0, (0.0, 0.0), (0.1, 0.1)))
    times = np.linspace(0.2, 1.0, 9)
    inf_fit = decay_slope_fit(u0, 1, math.inf, times)
    two_fit = decay_slope_fit(u0, 1, 2, times)
    elapsed = time.perf_counter() - start
    ok = abs(inf_fit.slope + 1.5) <= 0.08 and abs(two_fit.slope + 0.75) <= 0.08 and elapsed < 180
    _report(acceptance_log, 4, ok, f"(1,inf) slope={inf_fit.slope:.4f} (1,2) slope={two_fit.slope:.4f} "
            f"{elapsed:.1f}s")


def _memory_integral(f, gamma, n, T=1.0):
    w = build_weights(gamma, T / n, n)
    return float(fractional_integral(f(np.linspace(0, T, n + 1)), w, n))


def test_criterion_05_memory_quadrature(acceptance_log):
    # int_0^1 (1 - tau)^{-1/2} (a + b tau) dtau = 2a + 4b/3
    affine = max(abs(_memory_integral(lambda s: 2 - 3 * s, 0.5, n) - (4 - 4)) for n in (3, 16, 64))
    affine = max(affine, abs(_memory_integral(lambda s: 1 + s, 0.5, 16) - 10 / 3))
    ns = np.array([16, 32, 64, 128, 256])
    exact = F(16, 15)               # B(3, 1/2)
    vals = np.array([_memory_integral(lambda s: s * s, 0.5, n) for n in ns])
    errs = np.abs(vals - float(exact))
    orders = np.log2(errs[:-1] / errs[1:])
    # error model C dt^r fitted on the coarse levels predicts the finest one
    r, logc = np.polyfit(np.log(1.0 / ns[:-1]), np.log(errs[:-1]), 1)
    predicted = math.exp(logc) * (1.0 / ns[-1]) ** r
    ok = affine < 1e-14 and orders.min() >= 1.4 and errs[-1] <= 2 * predicted
    _report(acceptance_log, 5, ok, f"affine err={affine:.1e} orders={np.round(orders, 3).tolist()} "
            f"B(3,1/2) err={errs[-1]:.2e} predicted={predicted:.2e}")


def test_criterion_06_linear_consistency(acceptance_log):
    u0 = sample_function(DESK, Gaussian(1.0, (0.3, -0.2), (1.0, 1.0)))
    cfg = SolveConfig(grid=DESK, time=TimeGrid(1 / 256, 64), params=ProblemParams(0.5, 3, 2, 0, 0))
    final, trace = solve(u0, cfg, keep_states=True)
    sup = float(np.abs(final.values - apply_semigroup(u0, cfg.time.final_time).values).max())
    res = residual_check(trace, cfg)
    _report(acceptance_log, 6, sup < 1e-10 and res < 1e-10, f"sup defect={sup:.1e} residual={res:.1e}")


def test_criterion_07_picard_contraction(acceptance_log):
    cfg = SolveConfig(grid=DESK, time=TimeGrid(1 / 256, 256), params=ProblemParams(0.5, 3, 2, 1, 1))
    u0 = sample_function(DESK, Gaussian(0.2, (0, 0), (1, 1)))
    T, res = contraction_window(u0, cfg, t_start=0.5, iterations=6, bound=0.6)
    if T is None:
        _report(acceptance_log, 7, False, "no contraction window found")
    d = res.distances
    ratios = [d[k] / d[k - 1] for k in range(2, len(d)) if d[k - 1] > 1e-13 * d[0]]
    final, _ = solve(u0, cfg.with_time(cfg.time.dt, int(round(T / cfg.time.dt))))
    gap = float(np.abs(final.values - res.iterate[-1]).max())
    # factor <= 0.6 puts the limit within 1.5 increments of the last iterate
    tol = 1.5 * res.last_increment + 1e-14
    ok = max(ratios) <= 0.6 and gap <= tol
    _report(acceptance_log, 7, ok, f"T={T:g} ratios={[f'{r:.3g}' for r in ratios]} "
            f"|picard-solve|={gap:.1e} tol={tol:.1e}")


def test_criterion_08_comparison(acceptance_log):
    cfg = SolveConfig(grid=DESK, time=TimeGrid(1 / 256, 256), params=ProblemParams(0.5, 3, 2, 1, 1))
    g = sample_function(DESK, Gaussian(0.4, (0, 0), (1, 1)))
    p3, p2 = NonlinearitySpec.power(3), NonlinearitySpec.power(2)
    equal = compare_solutions(g * 0.5, g, p3, p2, p3, p2, None, cfg)
    ordered = compare_solutions(g * 0.5, g, p3, p3, p2, p2, None, cfg, state_max=1.0)
    ok = equal.passed and ordered.passed and not ordered.notes
    _report(acceptance_log, 8, ok, f"equal: min(v-u)={equal.min_defect:.1e} tol={equal.tolerance:.1e}; "
            f"ordered below 1: min(v-u)={ordered.min_defect:.1e} tol={ordered.tolerance:.1e}")


def test_criterion_09_free_domination(acceptance_log):
    params = ProblemParams(0.5, 3, 2, -1, -1)
    cfg = SolveConfig(grid=DESK, time=TimeGrid(1 / 256, 256), params=params)
    u0 = sample_function(DESK, Gaussian(1.0, (0, 0), (1, 1)))
    rep = free_domination_check(u0, params, None, cfg)
    _report(acceptance_log, 9, rep.passed, f"defect={rep.defect:.1e} min u={rep.min_value:.1e} "
            f"status={rep.status}")


def test_criterion_10_nonnegativity(acceptance_log):
    cfg = SolveConfig(grid=DESK, time=TimeGrid(1 / 256, 256), params=ProblemParams(0.5, 3, 2, 1, 1))
    u0 = sample_function(DESK, Gaussian(0.3, (0.5, 0.0), (1.0, 0.7)))
    _, trace = solve(u0, cfg, keep_states=True)
    low = min(float(s.min()) for s in trace.states)
    _report(acceptance_log, 10, low >= -1e-10, f"min u={low:.1e} over {len(trace.states)} checkpoints")


def _scan(tmp_path, name, dt, steps):
    out = tmp_path / name
    code = cli_main(["phase-scan", "--out", str(out),
                     "--set", "grid.nx=65", "--set", "grid.ny=64",
                     "--set", f"time.dt={dt!r}", "--set", f"time.steps={steps}",
                     "--set", "params.coeff1=0",
                     "--set", "profile={kind='gaussian', amplitude=50.0, widths=[0.5, 0.5]}",
                     "--set", "scan.p1=[3.0]", "--set", "scan.p2=[1.5, 3.0]"])
    return code, json.loads((out / "summary.json").read_text())["results"]["cells"]


def _bookkeeping_ok(cells):
    statuses = {"completed", "blowup_detected", "nan_abort", "inconclusive"}
    for c in cells:
        if c["status"] not in statuses:
            return False
        if c["status"] == BLOWUP:
            runs = c["refinement"]["runs"]
            t0 = runs["base"]["t_max_estimate"]
            if not all(r["status"] == BLOWUP and abs(r["t_max_estimate"] - t0) <= 0.1 * t0
                       for r in runs.values()):
                return False
    return True


def test_criterion_11_blowup_bookkeeping(tmp_path, acceptance_log):
    fine_code, fine = _scan(tmp_path, "fine", 5e-6, 200)
    coarse_code, coarse = _scan(tmp_path, "coarse", 1 / 256, 8)
    fine_status = [c["status"] for c in fine]
    coarse_status = [c["status"] for c in coarse]
    ok = (fine_code == 0 and coarse_code == 0 and _bookkeeping_ok(fine) and _bookkeeping_ok(coarse)
          and BLOWUP in fine_status and "inconclusive" in coarse_status)
    _report(acceptance_log, 11, ok, f"dt=5e-6 statuses={fine_status}; dt=1/256 statuses={coarse_status}")


def test_criterion_12_exponent_golden(acceptance_log):
    d = GrushinDims(1, 1)
    rep = critical_exponents(d, ProblemParams(gamma=0.5, p1=3, p2=2))
    want = {"p_gamma": 2.5, "p1_star": 2.5, "p2_star": 5 / 3, "p2_star_star": 2.0, "q_sc1": 2.0}
    errs = {k: abs(float(getattr(rep, k)) - v) for k, v in want.items()}
    errs["p2_tilde"] = abs(float(p2_tilde(3, 0.5)) - 7 / 3)
    switch = critical_exponents(d, ProblemParams(gamma=0.2, p1=6, p2=2))
    errs["p1_star(gamma=0.2)"] = abs(float(switch.p1_star) - 5.0)
    branch = switch.p1_star == switch.inv_gamma and switch.p_gamma < switch.inv_gamma
    cont = max(abs(float(q_sc1(3, p1, g)) - float(q_sc2(3, p2_tilde(p1, g))))
               for p1 in (2.0, 3.0, 4.5, 7.0) for g in (0.2, 0.5, 0.8))
    exact = q_sc1(3, 3, F(1, 2)) == q_sc2(3, p2_tilde(3, F(1, 2)))
    ok = max(errs.values()) <= 1e-12 and branch and cont <= 1e-12 and exact
    _report(acceptance_log, 12, ok, f"max golden err={max(errs.values()):.1e} 1/gamma branch={branch} "
            f"q_sc1-q_sc2={cont:.1e}")
