"""Pointwise evaluation of the Grushin heat kernel and its checks.

For ``k = 1`` the kernel is a cosine transform in the degenerate frequency of
the harmonic-oscillator (Mehler) kernel::

    K(x, x0, y; t) = (1/pi) * int_0^inf cos(xi*y) * M_xi(x, x0; t) dxi

with ``M_lam`` the kernel of ``exp(t/2 (Delta_x - lam^2 |x|^2))``.  The Mehler
factor is always computed in log space, so ``lam*t`` far beyond the overflow
point of ``sinh`` is harmless.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import erfc

from . import _backend


class KernelAccuracyWarning(UserWarning):
    """A quadrature tail or truncation estimate exceeds the requested tolerance."""


def _split_points(x, x0, n):
    """Return ``(|x|^2 + |x0|^2, x.x0)`` for points with ``n`` components."""
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if n == 1:
        return x * x + x0 * x0, x * x0
    if n == 2:
        if x.shape[-1:] != (2,) or x0.shape[-1:] != (2,):
            raise ValueError("points in R^2 need a trailing axis of length 2")
        return (x * x).sum(-1) + (x0 * x0).sum(-1), (x * x0).sum(-1)
    raise ValueError(f"kernel numerics support N in {{1, 2}}, got N={n}")


def log_mehler_kernel(lam, x, x0, t, n: int = 1):
    lam = np.asarray(lam, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    if np.any(lam < 0):
        raise ValueError("lambda must be nonnegative")
    a, b = _split_points(x, x0, n)
    return _backend.log_mehler(lam, a, b, t, n)


def mehler_kernel(lam, x, x0, t, n: int = 1):
    """Mehler kernel ``M_lam(x, x0; t)``; ``lam = 0`` gives the Gaussian limit.

    Broadcasts over all arguments. For ``n == 2`` the points carry a
    trailing axis of length 2.
    """
    out = np.exp(log_mehler_kernel(lam, x, x0, t, n))
    return out if out.ndim else float(out)


def hermite_functions(n_terms: int, x) -> np.ndarray:
    """Orthonormal Hermite functions ``psi_0 .. psi_{n_terms-1}`` at ``x``.

    Uses the three-term recurrence, which is stable for all orders.
    """
    x = np.asarray(x, dtype=float)
    psi = np.empty((n_terms,) + x.shape)
    psi[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_terms > 1:
        psi[1] = math.sqrt(2.0) * x * psi[0]
    for k in range(1, n_terms - 1):
        psi[k + 1] = (math.sqrt(2.0 / (k + 1)) * x * psi[k]
                      - math.sqrt(k / (k + 1)) * psi[k - 1])
    return psi


class HermiteSum(NamedTuple):
    value: float
    tail_bound: float
    converged: bool


def _hermite_1d(lam, x, x0, t, terms):
    s = math.sqrt(lam)
    psi = hermite_functions(terms, np.array([s * x, s * x0]))
    weights = np.exp(-lam * (np.arange(terms) + 0.5) * t)
    value = s * float(np.sum(weights * psi[:, 0] * psi[:, 1]))
    # Cramer's bound |psi_n| <= pi^{-1/4} makes the neglected tail geometric
    tail = s / math.sqrt(math.pi) * math.exp(-lam * (terms + 0.5) * t) / -math.expm1(-lam * t)
    return value, tail


def mehler_hermite_oracle(lam: float, x, x0, t: float, terms: int = 60,
                          n: int = 1, tol: float = 1e-12) -> HermiteSum:
    """Spectral series ``sum_n exp(-lam (n+1/2) t) phi_n(x) phi_n(x0)``.

    Independent of :func:`mehler_kernel`; used to cross-validate it. For
    ``n == 2`` the one-dimensional sum is taken per coordinate and multiplied.
    ``converged`` is False when the tail bound exceeds ``tol`` times the
    natural scale ``sqrt(M(x, x) M(x0, x0))`` of the terms.
    """
    if lam <= 0:
        raise ValueError("the Hermite series needs lambda > 0")
    if t <= 0 or terms < 1:
        raise ValueError("need t > 0 and terms >= 1")
    if n == 1:
        xs, x0s = [float(x)], [float(x0)]
    elif n == 2:
        xs, x0s = [float(v) for v in x], [float(v) for v in x0]
    else:
        raise ValueError("N must be 1 or 2")
    value, tail, scale = 1.0, 0.0, 1.0
    for xi, x0i in zip(xs, x0s):
        v, tb = _hermite_1d(lam, xi, x0i, t, terms)
        d1, _ = _hermite_1d(lam, xi, xi, t, terms)
        d2, _ = _hermite_1d(lam, x0i, x0i, t, terms)
        # product of series: |a b - A B| <= |a| tb + |B| ta, bounded crudely
        tail = tail * (abs(v) + tb) + abs(value) * tb
        value *= v
        scale *= math.sqrt(max(d1, 0.0) * max(d2, 0.0))
    return HermiteSum(value, tail, tail <= tol * max(scale, abs(value), 1e-300))


@dataclass(frozen=True)
class QuadratureSpec:
    """How the ``xi`` integral is discretized.

    ``xi_max`` and ``nodes`` may be left as ``None`` to be chosen per batch:
    the cutoff from the decay envelope at relative level ``tol``, and the
    node count from the oscillation and decay scales of the integrand.
    """

    xi_max: Optional[float] = None
    nodes: Optional[int] = None
    rule: str = "gauss"
    panel_nodes: int = 16
    tol: float = 1e-13
    refine: int = 1

    def __post_init__(self):
        if self.rule not in ("gauss", "trapezoid"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.xi_max is not None and not self.xi_max > 0:
            raise ValueError("xi_max must be positive")
        if self.nodes is not None and self.nodes < 16:
            raise ValueError("nodes must be >= 16")

    def refined(self, factor: int) -> "QuadratureSpec":
        """Same rule with ``factor`` times as many nodes (oracle runs)."""
        return replace(self, refine=self.refine * int(factor))


def _log_envelope(xi, t, n, a):
    from ._kernel_py import _hyperbolic_parts
    log_ratio, zcoth, _ = _hyperbolic_parts(xi * t)
    # a*coth - 2|b|csch >= a*tanh(z/2) >= 0, so drop it unless a > 0
    return 0.5 * n * log_ratio - 0.5 * a * xi * np.tanh(0.5 * xi * t)


def auto_xi_max(t_min: float, n: int = 1, a_min: float = 0.0, tol: float = 1e-13) -> float:
    """Smallest cutoff where the integrand envelope drops below ``tol``."""
    target = math.log(tol)
    hi = 1.0 / t_min
    while _log_envelope(hi, t_min, n, a_min) > target:
        hi *= 2.0
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _log_envelope(mid, t_min, n, a_min) > target:
            lo = mid
        else:
            hi = mid
    return hi


def quadrature_rule(spec: QuadratureSpec, t_min: float, y_max: float, n: int = 1,
                    a_min: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[0, xi_max]`` for a batch of queries."""
    xi_max = spec.xi_max or auto_xi_max(t_min, n, a_min, spec.tol)
    factor = spec.refine
    if spec.rule == "trapezoid":
        m = spec.nodes or max(64, int(math.ceil(xi_max * max(y_max, 1.0 / t_min) * 2.0)))
        m *= factor
        nodes = np.linspace(0.0, xi_max, m)
        w = np.full(m, nodes[1] - nodes[0])
        w[0] = w[-1] = 0.5 * w[1]
        return nodes, w
    p = spec.panel_nodes
    if spec.nodes is not None:
        n_panels = max(1, spec.nodes // p)
    else:
        width = min(1.0 / t_min, 6.0 / max(y_max, 1e-12), xi_max / 4.0)
        n_panels = int(math.ceil(xi_max / width))
    n_panels *= factor
    edges = np.linspace(0.0, xi_max, n_panels + 1)
    # grade the first panel towards xi = 0
    first = edges[1]
    edges = np.concatenate([[0.0, first / 8, first / 4, first / 2], edges[1:]])
    g, gw = np.polynomial.legendre.leggauss(p)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (hi - lo) * g + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * gw).ravel()
    return nodes, weights


class KernelValue(NamedTuple):
    value: np.ndarray
    tail_estimate: float
    flagged: bool


def grushin_kernel(x, x0, y, t, spec: Optional[QuadratureSpec] = None, n: int = 1,
                   return_info: bool = False):
    """Heat kernel ``K(x, x0, y; t)`` of the Grushin operator for ``k = 1``.

    Vectorized over broadcastable query arrays. The cosine form is exact
    because the integrand is even in ``xi``, so the output is real by
    construction. With ``return_info`` a :class:`KernelValue` carrying the
    quadrature-tail estimate is returned; a :class:`KernelAccuracyWarning` is
    issued whenever that estimate exceeds ``spec.tol`` relative to the batch
    maximum.
    """
    spec = spec or QuadratureSpec()
    a, b = _split_points(x, x0, n)
    a, b, y, t = np.broadcast_arrays(a, b, np.asarray(y, dtype=float), np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    t_min = float(t.min()) if t.size else 1.0
    y_max = float(np.abs(y).max()) if y.size else 0.0
    nodes, weights = quadrature_rule(spec, t_min, y_max, n)
    vals = _backend.grushin_sum(a, b, y, t, n, nodes, weights).reshape(a.shape)
    xi_end = nodes[-1] + (weights[-1] if spec.rule == "gauss" else 0.0)
    tail = _tail_estimate(xi_end, t_min, n)
    peak = float(np.max(np.abs(vals))) if vals.size else 0.0
    flagged = tail > spec.tol * max(peak, 1e-300) * 10
    if flagged:
        warnings.warn(f"xi-quadrature tail {tail:.2e} exceeds tolerance", KernelAccuracyWarning)
    out = vals if vals.ndim else float(vals)
    if return_info:
        return KernelValue(out, tail, flagged)
    return out


def _tail_estimate(xi_max, t, n):
    """Bound on ``(1/pi) int_{xi_max}^inf (xi/(2 pi sinh(xi t)))^{n/2} dxi``."""
    rate = 0.5 * n * t
    log_env = float(_log_envelope(xi_max, t, n, 0.0)) - 0.5 * n * math.log(2 * math.pi * t)
    return math.exp(log_env) / rate / math.pi


def grushin_kernel_tensor(x: np.ndarray, x0: float, y: np.ndarray, t: float,
                          spec: Optional[QuadratureSpec] = None) -> np.ndarray:
    """``K(x_i, x0, y_j; t)`` on a tensor grid (N = k = 1), shape ``(len(x), len(y))``.

    Separable in the quadrature sum, so it is a single matrix product.
    """
    spec = spec or QuadratureSpec()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nodes, weights = quadrature_rule(spec, t, float(np.abs(y).max()), 1)
    m = np.exp(_backend.log_mehler(nodes[None, :], (x * x + x0 * x0)[:, None],
                                   (x * x0)[:, None], t, 1))
    return (m * weights) @ np.cos(np.outer(nodes, y)) / np.pi


@dataclass
class KernelPropertyReport:
    t: float
    normalization: float
    tail_estimate: float
    box_too_small: bool
    min_value: float
    grid_min: float
    symmetry_defect: float
    evenness_defect: float
    scaling_defect: float
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def kernel_property_report(t: float, box: Sequence[float] = (8.0, 8.0),
                           resolution: Sequence[int] = (257, 257),
                           spec: Optional[QuadratureSpec] = None,
                           n_samples: int = 100, seed: int = 0,
                           tail_tol: float = 1e-4,
                           scale_factors: Sequence[float] = (2.0,)) -> KernelPropertyReport:
    """Normalization, positivity, symmetry and scaling checks at time ``t``.

    ``box = (Lx, Ly)`` is the integration box ``[-Lx, Lx] x [-Ly, Ly]``.
    Random samples are drawn in parabolic coordinates (``x ~ sqrt(t)``,
    ``y ~ t``) where the kernel is well above the cancellation floor of the
    oscillatory integral.  ``min_value`` is the sample minimum; ``grid_min``
    also sees the far field, where roundoff of size ``1e-14`` dominates.
    """
    spec = spec or QuadratureSpec()
    lx, ly = box
    nx, ny = resolution
    xs = np.linspace(-lx, lx, nx)
    ys = np.linspace(-ly, ly, ny)
    kgrid = grushin_kernel_tensor(xs, 0.0, ys, t, spec)
    norm = float(trapezoid(trapezoid(kgrid, ys, axis=1), xs))

    # x-marginal is the Gaussian M_0(x, 0; t); the y-profile decays like exp(-pi|y|/t)
    x_tail = float(erfc(lx / math.sqrt(2 * t)))
    edge = np.abs(kgrid[:, [0, -1]]).sum(axis=1)
    y_tail = float(trapezoid(edge, xs)) * t / math.pi
    tail = x_tail + y_tail
    notes = []
    if t < 1e-3:
        notes.append("small t: box/resolution requirements scale like sqrt(t)")
    if tail > tail_tol:
        notes.append("box too small")

    rng = np.random.default_rng(seed)
    st = math.sqrt(t)
    px = rng.uniform(-2, 2, n_samples) * st
    px0 = rng.uniform(-2, 2, n_samples) * st
    py = rng.uniform(-2, 2, n_samples) * t
    k = grushin_kernel(px, px0, py, t, spec)
    sym = np.abs(k - grushin_kernel(px0, px, py, t, spec)).max()
    even = np.abs(k - grushin_kernel(px, px0, -py, t, spec)).max()
    scale_def = 0.0
    for r in scale_factors:
        scaled = grushin_kernel(r * px, r * px0, r * r * py, r * r * t, spec)
        scale_def = max(scale_def, float(np.max(np.abs(scaled * r ** 3 - k) / np.abs(k))))
    return KernelPropertyReport(
        t=t, normalization=norm, tail_estimate=tail, box_too_small=tail > tail_tol,
        min_value=float(k.min()), grid_min=float(kgrid.min()), symmetry_defect=float(sym),
        evenness_defect=float(even), scaling_defect=float(scale_def), warnings=notes,
    )


def chapman_kolmogorov(x: float, x0: float, y: float, s: float, t: float,
                       box: Sequence[float] = (6.0, 6.0), resolution: Sequence[int] = (241, 481),
                       spec: Optional[QuadratureSpec] = None) -> float:
    """Brute-force ``int int K(x, w, y-z; s) K(w, x0, z; t) dw dz`` (N = k = 1).

    Both kernel factors are tabulated on the full ``(w, z)`` trapezoid grid.
    """
    spec = spec or QuadratureSpec()
    lw, lz = box
    w = np.linspace(-lw, lw, resolution[0])
    z = np.linspace(-lz, lz, resolution[1])
    y_max = abs(y) + lz
    nodes_s, wts_s = quadrature_rule(spec, s, y_max, 1)
    nodes_t, wts_t = quadrature_rule(spec, t, lz, 1)
    m1 = np.exp(_backend.log_mehler(nodes_s[None, :], (x * x + w * w)[:, None],
                                    (x * w)[:, None], s, 1))
    k1 = (m1 * wts_s) @ np.cos(np.outer(nodes_s, y - z)) / np.pi
    m2 = np.exp(_backend.log_mehler(nodes_t[None, :], (w * w + x0 * x0)[:, None],
                                    (w * x0)[:, None], t, 1))
    k2 = (m2 * wts_t) @ np.cos(np.outer(nodes_t, z)) / np.pi
    return float(trapezoid(trapezoid(k1 * k2, z, axis=1), w))
