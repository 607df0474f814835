"""Source nonlinearities: odd power laws and tabulated monotone functions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class NonlinearitySpec:
    """A nondecreasing odd function ``h`` used as ``f`` or ``g``.

    ``kind="power"``: ``h(u) = |u|^{p-1} u`` with ``p = growth_exponent``.
    ``kind="table"``: piecewise-linear through ``(nodes, values)`` on
    ``[0, inf)``, extended beyond the last node by the last slope and to
    ``u < 0`` by oddness.  ``nodes`` must start at 0 with ``values[0] = 0``.
    """

    kind: str = "power"
    growth_exponent: float = 2.0
    nodes: Optional[Tuple[float, ...]] = None
    values: Optional[Tuple[float, ...]] = None
    _slopes: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.growth_exponent > 1:
            raise ValueError(f"growth exponent must be > 1, got {self.growth_exponent}")
        if self.kind == "power":
            return
        if self.kind != "table":
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.nodes is None or self.values is None:
            raise ValueError("tabulated nonlinearity needs nodes and values")
        x = np.asarray(self.nodes, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("nodes and values must be 1-D of equal length >= 2")
        if x[0] != 0 or y[0] != 0:
            raise ValueError("table must start at (0, 0)")
        if np.any(np.diff(x) <= 0):
            raise ValueError("table nodes must be strictly increasing")
        if np.any(np.diff(y) < 0):
            raise ValueError("tabulated nonlinearity must be nondecreasing")
        object.__setattr__(self, "nodes", tuple(x))
        object.__setattr__(self, "values", tuple(y))
        object.__setattr__(self, "_slopes", np.diff(y) / np.diff(x))

    @classmethod
    def power(cls, p: float) -> "NonlinearitySpec":
        return cls("power", float(p))

    @classmethod
    def table(cls, nodes, values, growth_exponent: float) -> "NonlinearitySpec":
        return cls("table", float(growth_exponent), tuple(nodes), tuple(values))

    @classmethod
    def from_dict(cls, d: dict) -> "NonlinearitySpec":
        if d.get("kind", "power") == "power":
            return cls.power(d["p"] if "p" in d else d["growth_exponent"])
        return cls.table(d["nodes"], d["values"], d["growth_exponent"])

    def as_dict(self) -> dict:
        if self.kind == "power":
            return {"kind": "power", "p": self.growth_exponent}
        return {"kind": "table", "growth_exponent": self.growth_exponent,
                "nodes": list(self.nodes), "values": list(self.values)}

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "power":
            p = self.growth_exponent
            if p == 2:
                return np.abs(u) * u
            if p == 3:
                return u * u * u
            return np.abs(u) ** (p - 1) * u
        a = np.abs(u)
        x = np.asarray(self.nodes)
        y = np.asarray(self.values)
        out = np.interp(a, x, y)
        beyond = a > x[-1]
        if np.any(beyond):
            out = np.where(beyond, y[-1] + self._slopes[-1] * (a - x[-1]), out)
        return np.sign(u) * out

    def growth_constant(self, state_max: float, samples: int = 401) -> float:
        """Smallest ``c`` with ``|h(u)-h(v)| <= c|u-v|(|u|^{p-1}+|v|^{p-1})``
        over a sample of ``[-state_max, state_max]``.

        Tables whose first slope is nonzero give large values: the bound
        degenerates at the origin.
        """
        s = np.linspace(-state_max, state_max, samples)
        u, v = np.meshgrid(s, s, indexing="ij")
        p = self.growth_exponent
        den = np.abs(u - v) * (np.abs(u) ** (p - 1) + np.abs(v) ** (p - 1))
        num = np.abs(self(u) - self(v))
        mask = den > 0
        return float(np.max(num[mask] / den[mask])) if np.any(mask) else 0.0


def dominated_on_range(lower: NonlinearitySpec, upper: NonlinearitySpec,
                       state_max: float, samples: int = 2001) -> Tuple[bool, float]:
    """Check ``lower(mu) <= upper(nu)`` for all ``0 <= mu <= nu <= state_max``.

    Equivalent to ``cummax(lower) <= upper`` on the sample.  Returns the
    verdict and the worst margin ``min(upper - cummax(lower))``.
    """
    s = np.linspace(0.0, state_max, samples)
    margin = upper(s) - np.maximum.accumulate(lower(s))
    worst = float(margin.min())
    scale = max(float(np.abs(upper(s)).max()), 1e-300)
    return worst >= -1e-14 * scale, worst
