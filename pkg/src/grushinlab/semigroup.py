"""The Grushin heat semigroup on a truncated ``(x, y)`` grid (N = k = 1).

``y`` is periodic on ``[-Ly, Ly)`` and handled by a real DFT; each discrete
frequency then evolves an ``x``-profile under the harmonic-oscillator operator
``(1/2)(d^2/dx^2 - lam^2 x^2)``.  Two per-mode propagators are available:

``"generator"`` (default)
    ``exp(t H_m)`` for a fixed finite-difference oscillator ``H_m`` with
    reflecting ends, applied through a cached symmetric eigendecomposition.
    The discrete family is an exact semigroup, conserves trapezoid mass and,
    with the finite-difference ``y``-symbol, is entrywise nonnegative.
``"mehler"``
    Matrices ``M_lam(x_i, x_j; t) w_j`` built from the closed-form Mehler
    kernel with trapezoid weights.  Accurate once ``sqrt(t)`` is resolved by
    the ``x`` grid, but not a semigroup at the discrete level.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .kernel import mehler_kernel


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid: ``nx`` nodes on ``[-Lx, Lx]``, ``ny`` periodic nodes on ``[-Ly, Ly)``."""

    x_half_width: float = 8.0
    y_half_width: float = 8.0
    nx: int = 129
    ny: int = 128

    def __post_init__(self):
        if self.nx < 32 or self.ny < 32:
            raise ValueError(f"grid needs nx, ny >= 32, got {self.nx}x{self.ny}")
        if self.ny % 2:
            raise ValueError("ny must be even")
        if not (self.x_half_width > 0 and self.y_half_width > 0):
            raise ValueError("half widths must be positive")

    @property
    def hx(self) -> float:
        return 2.0 * self.x_half_width / (self.nx - 1)

    @property
    def hy(self) -> float:
        return 2.0 * self.y_half_width / self.ny

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.x_half_width, self.x_half_width, self.nx)

    @property
    def y(self) -> np.ndarray:
        return -self.y_half_width + self.hy * np.arange(self.ny)

    @property
    def x_weights(self) -> np.ndarray:
        w = np.full(self.nx, self.hx)
        w[0] = w[-1] = 0.5 * self.hx
        return w

    @property
    def frequencies(self) -> np.ndarray:
        """Nonnegative ``y``-frequencies ``pi m / Ly`` of the real DFT."""
        return np.pi * np.arange(self.ny // 2 + 1) / self.y_half_width

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def refined(self, factor: float) -> "GridSpec":
        """Same box with spacings divided by ``factor`` (``ny`` kept even)."""
        nx = int(round((self.nx - 1) * factor)) + 1
        ny = 2 * int(round(self.ny * factor / 2))
        return GridSpec(self.x_half_width, self.y_half_width, nx, ny)

    def as_dict(self) -> dict:
        return dict(x_half_width=self.x_half_width, y_half_width=self.y_half_width,
                    nx=self.nx, ny=self.ny)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real samples of shape ``(nx, ny)``; the array is read-only."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.spec.nx, self.spec.ny):
            raise ValueError(f"values shape {v.shape} does not match grid "
                             f"{(self.spec.nx, self.spec.ny)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function has non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.spec, values)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def boundary_ratio(self) -> float:
        """Largest ``|u|`` on the box edge relative to the interior maximum."""
        v = np.abs(self.values)
        edge = max(v[0].max(), v[-1].max(), v[:, 0].max(), v[:, -1].max())
        peak = v.max()
        return float(edge / peak) if peak > 0 else 0.0


def _vals(u):
    return u.values if isinstance(u, GridFunction) else u


# ---------------------------------------------------------------- profiles --

def _smooth_step(s):
    """1 for ``s <= 1/2``, 0 for ``s >= 1``, C-infinity in between."""
    s = np.clip(2.0 * np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
        b = np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Gaussian:
    """``A exp(-((x-cx)/wx)^2 - ((y-cy)/wy)^2)``."""

    amplitude: float = 1.0
    center: Tuple[float, float] = (0.0, 0.0)
    widths: Tuple[float, float] = (1.0, 1.0)

    def __call__(self, x, y):
        (cx, cy), (wx, wy) = self.center, self.widths
        return self.amplitude * np.exp(-((x - cx) / wx) ** 2 - ((y - cy) / wy) ** 2)


@dataclass(frozen=True)
class GaussianX:
    """Gaussian in ``x``, constant in ``y``."""

    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0

    def __call__(self, x, y):
        return self.amplitude * np.exp(-((x - self.center) / self.width) ** 2) + 0.0 * y


@dataclass(frozen=True)
class Bump:
    """Compactly supported ``A exp(1 - 1/(1 - r^2))`` on an ellipse; peak ``A``."""

    amplitude: float = 1.0
    center: Tuple[float, float] = (0.0, 0.0)
    radii: Tuple[float, float] = (1.0, 1.0)

    def __call__(self, x, y):
        (cx, cy), (rx, ry) = self.center, self.radii
        r2 = ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2
        inside = r2 < 1.0
        with np.errstate(divide="ignore"):
            v = np.exp(1.0 - 1.0 / np.where(inside, 1.0 - r2, 1.0))
        return self.amplitude * np.where(inside, v, 0.0)


@dataclass(frozen=True)
class MollifiedIndicator:
    """Flat top of height ``A`` for ``r <= radius/2``, smooth decay to 0 at ``r = radius``."""

    amplitude: float = 1.0
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0

    def __call__(self, x, y):
        cx, cy = self.center
        r = np.hypot(x - cx, y - cy)
        return self.amplitude * _smooth_step(r / self.radius)


@dataclass(frozen=True)
class PowerSingular:
    """``A rho^{-a}`` with a smooth cutoff at ``rho = cutoff``.

    ``rho`` is the homogeneous gauge ``(x^4 + 4 y^2)^{1/4}`` by default, for
    which ``rho^{-a}`` is locally in ``L^q`` exactly when ``a q < 3``.
    """

    exponent: float = 1.0
    cutoff: float = 4.0
    amplitude: float = 1.0
    gauge: str = "grushin"

    def gauge_of(self, x, y):
        if self.gauge == "grushin":
            return (x ** 4 + 4.0 * y ** 2) ** 0.25
        if self.gauge == "euclid":
            return np.hypot(x, y)
        raise ValueError(f"unknown gauge {self.gauge!r}")

    def __call__(self, x, y):
        rho = self.gauge_of(x, y)
        with np.errstate(divide="ignore"):
            core = np.where(rho > 0, rho, 0.0) ** -self.exponent
        # rho = 0 yields inf here; sample_function replaces it
        return self.amplitude * core * _smooth_step(rho / self.cutoff)


PROFILES = {
    "gaussian": Gaussian,
    "gaussian_x": GaussianX,
    "bump": Bump,
    "mollified_indicator": MollifiedIndicator,
    "power_singular": PowerSingular,
}


def profile_from_dict(desc: dict):
    """Build a profile from ``{"kind": ..., **params}`` (lists become tuples)."""
    desc = dict(desc)
    kind = desc.pop("kind")
    if kind not in PROFILES:
        raise ValueError(f"unknown profile kind {kind!r}; expected one of {sorted(PROFILES)}")
    params = {k: tuple(v) if isinstance(v, list) else v for k, v in desc.items()}
    return PROFILES[kind](**params)


def sample_function(spec: GridSpec, profile) -> GridFunction:
    """Sample ``profile`` (an instance or a descriptor dict) on the grid.

    For the power-singular profile the node at the singularity, if present,
    takes the average of its four neighbours.
    """
    if isinstance(profile, dict):
        profile = profile_from_dict(profile)
    X, Y = spec.mesh()
    vals = np.array(profile(X, Y), dtype=float)
    if isinstance(profile, PowerSingular):
        bad = ~np.isfinite(vals)
        for i, j in zip(*np.nonzero(bad)):
            nb = [vals[i + di, (j + dj) % spec.ny] for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
                  if 0 <= i + di < spec.nx]
            vals[i, j] = np.mean(nb)
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"profile {profile!r} produced non-finite samples")
    return GridFunction(spec, vals)


# ------------------------------------------------------------------- norms --

def lp_norm(u: GridFunction, p: float) -> float:
    """Trapezoid ``L^p`` norm; ``p = inf`` is the grid maximum of ``|u|``."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    v = np.abs(u.values)
    if math.isinf(p):
        return float(v.max())
    w = u.spec.x_weights[:, None] * u.spec.hy
    if p == 1:
        return float((w * v).sum())
    m = v.max()
    if m == 0:
        return 0.0
    return float(m * ((w * (v / m) ** p).sum()) ** (1.0 / p))


def integral(u: GridFunction) -> float:
    return float((u.spec.x_weights[:, None] * u.values).sum() * u.spec.hy)


# --------------------------------------------------------------- operators --

def _fd_laplacian(spec: GridSpec) -> np.ndarray:
    """Three-point Laplacian with reflecting ends; ``diag(w) @ D`` is symmetric."""
    n, h = spec.nx, spec.hx
    d = np.zeros((n, n))
    i = np.arange(n)
    d[i, i] = -2.0 / h ** 2
    d[i[:-1], i[:-1] + 1] = 1.0 / h ** 2
    d[i[1:], i[1:] - 1] = 1.0 / h ** 2
    d[0, 1] = d[-1, -2] = 2.0 / h ** 2
    return d


@dataclass
class SemigroupOperatorCache:
    """Per-mode propagators at one time ``t``, stacked as ``(modes, nx, nx)``."""

    t: float
    matrices: np.ndarray


class SemigroupOperator:
    """Applies the discrete semigroup on one grid; caches matrices per ``t``.

    Parameters
    ----------
    spec : GridSpec
    method : {"generator", "mehler"}
    y_symbol : {"fd", "spectral"}
        Multiplier used for ``-d^2/dy^2`` on mode ``m``: the periodic
        three-point symbol ``(4/hy^2) sin^2(xi_m hy / 2)`` or ``xi_m^2``.
    """

    def __init__(self, spec: GridSpec, method: str = "generator", y_symbol: str = "fd",
                 max_cached: int = 8):
        if method not in ("generator", "mehler"):
            raise ValueError(f"unknown method {method!r}")
        if y_symbol not in ("fd", "spectral"):
            raise ValueError(f"unknown y_symbol {y_symbol!r}")
        self.spec = spec
        self.method = method
        self.y_symbol = y_symbol
        self.max_cached = max_cached
        self._cache: Dict[float, SemigroupOperatorCache] = {}
        self._lock = threading.RLock()
        self._eig = None
        xi = spec.frequencies
        if y_symbol == "fd":
            self.symbol = (4.0 / spec.hy ** 2) * np.sin(0.5 * xi * spec.hy) ** 2
        else:
            self.symbol = xi ** 2

    @property
    def lambdas(self) -> np.ndarray:
        """Oscillator frequency per mode, ``sqrt`` of the ``y``-symbol."""
        return np.sqrt(self.symbol)

    def _eigensystem(self):
        if self._eig is None:
            spec = self.spec
            x2 = spec.x ** 2
            sw = np.sqrt(spec.x_weights)
            d = _fd_laplacian(spec)
            dsym = sw[:, None] * d / sw[None, :]
            dsym = 0.5 * (dsym + dsym.T)
            lams, vecs = [], []
            for s in self.symbol:
                lam, v = np.linalg.eigh(0.5 * (dsym - np.diag(s * x2)))
                lams.append(lam)
                vecs.append(v)
            self._eig = (np.array(lams), np.array(vecs), sw)
        return self._eig

    def cache(self, t: float) -> SemigroupOperatorCache:
        t = float(t)
        if not t > 0:
            raise ValueError("t must be positive")
        with self._lock:
            return self._cache_locked(t)

    def _cache_locked(self, t: float) -> SemigroupOperatorCache:
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        if self.method == "generator":
            lams, vecs, sw = self._eigensystem()
            mats = np.matmul(vecs * np.exp(t * lams)[:, None, :], vecs.transpose(0, 2, 1))
            mats = mats * (sw[None, None, :] / sw[None, :, None])
        else:
            x = self.spec.x
            w = self.spec.x_weights
            mats = np.stack([mehler_kernel(lam, x[:, None], x[None, :], t) * w[None, :]
                             for lam in self.lambdas])
        np.maximum(mats, 0.0, out=mats)
        entry = SemigroupOperatorCache(t, mats)
        if len(self._cache) >= self.max_cached:
            self._cache.pop(next(iter(self._cache)))
        self._cache[t] = entry
        return entry

    def apply_array(self, values: np.ndarray, t: float) -> np.ndarray:
        """Semigroup on a raw ``(nx, ny)`` array, or a stack ``(..., nx, ny)``."""
        mats = self.cache(t).matrices
        spec = self.spec
        vals = np.asarray(values, dtype=float)
        lead = vals.shape[:-2]
        vals = vals.reshape((-1, spec.nx, spec.ny))
        coef = np.fft.rfft(vals, axis=-1)                           # (B, nx, M)
        ri = np.stack([coef.real, coef.imag], axis=-1)              # (B, nx, M, 2)
        ri = ri.transpose(2, 1, 0, 3).reshape(mats.shape[0], spec.nx, -1)
        out = np.matmul(mats, ri)                                   # (M, nx, B*2)
        out = out.reshape(mats.shape[0], spec.nx, -1, 2).transpose(2, 1, 0, 3)
        res = np.fft.irfft(out[..., 0] + 1j * out[..., 1], n=spec.ny, axis=-1)
        return res.reshape(lead + (spec.nx, spec.ny))

    def apply(self, u: GridFunction, t: float) -> GridFunction:
        if u.spec != self.spec:
            raise ValueError("grid function lives on a different grid")
        return GridFunction(self.spec, self.apply_array(u.values, t))

    def resolution_warning(self, t: float) -> Optional[str]:
        if t < self.spec.hx ** 2:
            return (f"t={t:g} below hx^2={self.spec.hx ** 2:g}: the x grid does not "
                    "resolve the kernel width")
        return None


_DEFAULT_OPERATORS: Dict[Tuple, SemigroupOperator] = {}


def get_operator(spec: GridSpec, method: str = "generator", y_symbol: str = "fd") -> SemigroupOperator:
    key = (spec, method, y_symbol)
    op = _DEFAULT_OPERATORS.get(key)
    if op is None:
        op = _DEFAULT_OPERATORS[key] = SemigroupOperator(spec, method, y_symbol)
    return op


def apply_semigroup(u: GridFunction, t: float, method: str = "generator",
                    y_symbol: str = "fd") -> GridFunction:
    """``S(t) u`` on the grid of ``u``."""
    return get_operator(u.spec, method, y_symbol).apply(u, t)


# -------------------------------------------------------- decay experiments --

class DecayFit(NamedTuple):
    slope: float
    intercept: float
    residual: float
    c_emp: float
    times: np.ndarray
    norms: np.ndarray


def decay_slope_fit(u0: GridFunction, p: float, q: float, t_list: Sequence[float],
                    operator: Optional[SemigroupOperator] = None) -> DecayFit:
    """Least-squares slope of ``log ||S(t) u0||_q`` against ``log t``.

    ``c_emp = exp(intercept) / ||u0||_p`` is the measured constant of the
    ``L^p -> L^q`` smoothing estimate.
    """
    t = np.asarray(t_list, dtype=float)
    if t.size < 3:
        raise ValueError("need at least 3 times for a slope fit")
    if not (1 <= p <= q):
        raise ValueError("need 1 <= p <= q")
    op = operator or get_operator(u0.spec)
    norms = np.array([lp_norm(op.apply(u0, ti), q) for ti in t])
    A = np.vstack([np.log(t), np.ones_like(t)]).T
    coef, res, *_ = np.linalg.lstsq(A, np.log(norms), rcond=None)
    slope, intercept = coef
    resid = float(np.sqrt(res[0] / t.size)) if res.size else 0.0
    return DecayFit(float(slope), float(intercept), resid,
                    float(math.exp(intercept) / lp_norm(u0, p)), t, norms)


def smoothing_exponent(q: float, r: float, q_dim: int = 3) -> float:
    return 0.5 * q_dim * (1.0 / q - 1.0 / r)


class ProbeResult(NamedTuple):
    alpha: float
    times: np.ndarray
    values: np.ndarray
    eventually_decreasing: bool
    resolution_floor: float


def smoothing_decay_probe(phi: GridFunction, q: float, r: float, t_list: Sequence[float],
                          q_dim: int = 3, operator: Optional[SemigroupOperator] = None
                          ) -> ProbeResult:
    """``t^alpha ||S(t) phi||_r`` along ``t_list`` (listed towards 0).

    ``eventually_decreasing`` checks that the values shrink along the list
    for times above the grid floor ``hx^2``, where the grid can still tell the
    evolved profile apart from the sampled data.
    """
    if not r > q:
        raise ValueError("need r > q")
    op = operator or get_operator(phi.spec)
    t = np.asarray(t_list, dtype=float)
    a = smoothing_exponent(q, r, q_dim)
    vals = np.array([ti ** a * lp_norm(op.apply(phi, ti), r) for ti in t])
    floor = phi.spec.hx ** 2
    above = vals[t >= floor]
    ok = bool(np.all(np.diff(above) < 0)) if above.size > 1 else True
    return ProbeResult(a, t, vals, ok, floor)
