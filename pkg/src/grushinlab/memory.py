"""Product integration for the weakly singular memory integral.

Approximates ``int_0^{t_n} (t_n - tau)^{-gamma} f(tau) dtau`` by integrating
the kernel exactly against the piecewise-linear interpolant of ``f`` on the
uniform grid ``t_j = j dt``.  With ``a = 1 - gamma`` the weights are

    w(n, 0) = c * ((n-1)^{a+1} - (n-1-a) n^a)
    w(n, j) = c * ((n-j+1)^{a+1} - 2 (n-j)^{a+1} + (n-j-1)^{a+1}),  0 < j < n
    w(n, n) = c

with ``c = dt^a / (a (a+1))``.  Interior weights depend on ``n - j`` only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    @property
    def final_time(self) -> float:
        return self.dt * self.steps

    def halved(self) -> "TimeGrid":
        return TimeGrid(self.dt / 2, 2 * self.steps)


@dataclass(frozen=True, eq=False)
class MemoryWeights:
    """Weight table in compressed form.

    ``interior[k]`` is the weight at lag ``k = n - j`` for ``0 < j < n``,
    ``start[n]`` the weight of ``f(t_0)`` at step ``n``; the endpoint weight
    ``w(n, n)`` equals ``interior[0]``.
    """

    gamma: float
    dt: float
    steps: int
    interior: np.ndarray
    start: np.ndarray

    def row(self, n: int) -> np.ndarray:
        """Weights ``w(n, 0..n)``."""
        if not 0 <= n <= self.steps:
            raise ValueError(f"step {n} outside 0..{self.steps}")
        if n == 0:
            return np.zeros(1)
        w = self.interior[n::-1].copy()          # lag n .. 0 for j = 0 .. n
        w[0] = self.start[n]
        return w

    def table(self) -> np.ndarray:
        """Dense lower-triangular ``(steps+1, steps+1)`` table."""
        out = np.zeros((self.steps + 1, self.steps + 1))
        for n in range(1, self.steps + 1):
            out[n, : n + 1] = self.row(n)
        return out


def build_weights(gamma: float, dt: float, steps: int) -> MemoryWeights:
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    TimeGrid(dt, steps)
    a = 1.0 - gamma
    c = dt ** a / (a * (a + 1.0))
    k = np.arange(steps + 1, dtype=float)
    interior = c * ((k + 1) ** (a + 1) - 2 * k ** (a + 1) + np.abs(k - 1) ** (a + 1))
    interior[0] = c
    n = k[1:]
    start = np.zeros(steps + 1)
    start[1:] = c * ((n - 1) ** (a + 1) - (n - 1 - a) * n ** a)
    # roundoff guard: every exact weight is positive
    np.maximum(interior, 0.0, out=interior)
    np.maximum(start, 0.0, out=start)
    return MemoryWeights(gamma, dt, steps, interior, start)


def fractional_integral(history, weights: MemoryWeights, n: int):
    """``sum_j w(n, j) f(t_j)``; ``history`` has ``n + 1`` entries along axis 0.

    Entries may be scalars or whole fields, so the sum is taken pointwise.
    """
    h = np.asarray(history, dtype=float)
    if h.shape[0] != n + 1:
        raise ValueError(f"history has {h.shape[0]} entries, step {n} needs {n + 1}")
    w = weights.row(n)
    return np.tensordot(w, h, axes=(0, 0))
