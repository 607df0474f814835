"""Critical exponents, thresholds and the global-existence regime classifier.

Everything here is plain arithmetic. Inputs given as ``int`` or
:class:`fractions.Fraction` are handled exactly, so boundary cases such as
``p2 == p2_tilde`` are decided without rounding; float inputs are compared
with a relative tolerance of ``1e-12``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Union

Number = Union[int, float, Fraction]

INF = math.inf
REL_TOL = 1e-12


@dataclass(frozen=True)
class GrushinDims:
    """Dimensions of ``z = (x, y)`` with ``x`` in R^N and ``y`` in R^k."""

    spatial_n: int = 1
    degenerate_k: int = 1

    def __post_init__(self):
        if int(self.spatial_n) != self.spatial_n or self.spatial_n < 1:
            raise ValueError(f"spatial_n must be a positive integer, got {self.spatial_n!r}")
        if int(self.degenerate_k) != self.degenerate_k or self.degenerate_k < 1:
            raise ValueError(f"degenerate_k must be a positive integer, got {self.degenerate_k!r}")

    @property
    def homogeneous_dim(self) -> int:
        return homogeneous_dimension(self)


@dataclass(frozen=True)
class ProblemParams:
    """Data ``(gamma, p1, p2, k1, k2)`` of the memory/power reaction problem."""

    gamma: Number = 0.5
    p1: Number = 3
    p2: Number = 2
    coeff1: Number = 1
    coeff2: Number = 1

    def __post_init__(self):
        if not (0 <= self.gamma < 1):
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma!r}")
        if not self.p1 > 1:
            raise ValueError(f"p1 must be > 1, got {self.p1!r}")
        if not self.p2 > 1:
            raise ValueError(f"p2 must be > 1, got {self.p2!r}")
        for name in ("coeff1", "coeff2"):
            v = getattr(self, name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"{name} must be finite")


def homogeneous_dimension(dims: GrushinDims) -> int:
    return dims.spatial_n + 2 * dims.degenerate_k


def _is_exact(*values) -> bool:
    return all(isinstance(v, (int, Fraction)) and not isinstance(v, bool) for v in values)


def compare(a: Number, b: Number) -> int:
    """Three-way comparison, exact for rationals and tolerant for floats."""
    if a == b:
        return 0
    if _is_exact(a, b):
        return -1 if a < b else 1
    if math.isinf(a) or math.isinf(b):
        return -1 if a < b else 1
    scale = max(1.0, abs(float(a)), abs(float(b)))
    if abs(float(a) - float(b)) <= REL_TOL * scale:
        return 0
    return -1 if a < b else 1


def _inv(x: Number) -> Number:
    if x == 0:
        return INF
    if isinstance(x, int):
        return Fraction(1, x)
    return 1 / x


def p_gamma(q_dim: int, gamma: Number) -> Number:
    return 1 + (4 - 2 * gamma) * _inv(q_dim - 2 + 2 * gamma)


def p1_star(q_dim: int, gamma: Number) -> Number:
    # at gamma = 0 the 1/gamma branch is +inf, and so is the max
    return max(_inv(gamma), p_gamma(q_dim, gamma))


def p2_star(q_dim: int) -> Number:
    return 1 + Fraction(2, q_dim)


def p2_star_star(q_dim: int, gamma: Number) -> Number:
    if gamma == 0:
        first = INF
    else:
        first = (gamma - gamma * gamma + 1) * _inv(gamma * (2 - gamma))
    return max(first, 1 + 2 * _inv(q_dim - 2 + 2 * gamma))


def p2_tilde(p1: Number, gamma: Number) -> Number:
    return (p1 + 1 - gamma) * _inv(2 - gamma)


def p1_tilde(p2: Number, gamma: Number) -> Number:
    return (p2 - 1) * (2 - gamma) + 1


def q_sc1(q_dim: int, p1: Number, gamma: Number) -> Number:
    return q_dim * (p1 - 1) * _inv(2 * (2 - gamma))


def q_sc2(q_dim: int, p2: Number) -> Number:
    return q_dim * (p2 - 1) * Fraction(1, 2)


def alpha(q_dim: int, p: Number, q: Number) -> Number:
    """Weight exponent of ``t**alpha * ||u(t)||_{L^{p q}}``."""
    return q_dim * (p - 1) * _inv(2 * p * q)


@dataclass(frozen=True)
class ExponentReport:
    p_gamma: Number
    inv_gamma: Number
    p1_star: Number
    p2_star: Number
    p2_star_star: Number
    p2_tilde: Number
    p1_tilde: Number
    q_sc: Number
    q_sc_branch: str
    q_sc1: Number
    q_sc2: Number
    local_q_threshold: Number
    q: Optional[Number] = None
    alpha1: Optional[Number] = None
    alpha2: Optional[Number] = None
    beta: Optional[Number] = None

    def as_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = float(v) if isinstance(v, Fraction) else v
        return out


def critical_exponents(dims: GrushinDims, params: ProblemParams,
                       q: Optional[Number] = None) -> ExponentReport:
    """All exponents and thresholds for ``dims``/``params``.

    ``alpha1``, ``alpha2`` and ``beta`` are filled only when ``q`` is given.
    """
    Q = homogeneous_dimension(dims)
    g, p1, p2 = params.gamma, params.p1, params.p2
    pt2 = p2_tilde(p1, g)
    sc1 = q_sc1(Q, p1, g)
    sc2 = q_sc2(Q, p2)
    c = compare(p2, pt2)
    if c > 0:
        q_sc, branch = sc1, "sc1"
    elif c < 0:
        q_sc, branch = sc2, "sc2"
    else:
        q_sc, branch = sc1, "sc1=sc2"
    report = dict(
        p_gamma=p_gamma(Q, g),
        inv_gamma=_inv(g),
        p1_star=p1_star(Q, g),
        p2_star=p2_star(Q),
        p2_star_star=p2_star_star(Q, g),
        p2_tilde=pt2,
        p1_tilde=p1_tilde(p2, g),
        q_sc=q_sc,
        q_sc_branch=branch,
        q_sc1=sc1,
        q_sc2=sc2,
        local_q_threshold=Fraction(Q, 2) * max(p1 - 1, p2 - 1),
    )
    if q is not None:
        if not q > 0:
            raise ValueError(f"q must be positive, got {q!r}")
        report.update(
            q=q,
            alpha1=alpha(Q, p1, q),
            alpha2=alpha(Q, p2, q),
            beta=Q * _inv(2 * q_sc) - Q * _inv(2 * q),
        )
    return ExponentReport(**report)


@dataclass(frozen=True)
class QWindow:
    """Interval of admissible Lebesgue exponents ``q`` (possibly empty)."""

    lo: Number
    hi: Number
    lo_closed: bool
    empty: bool

    def __contains__(self, q) -> bool:
        if self.empty:
            return False
        above = q >= self.lo if self.lo_closed else q > self.lo
        return above and q < self.hi


def admissible_q_window(dims: GrushinDims, p1: Number, gamma: Number) -> QWindow:
    """Exponents ``q >= p1`` with ``(2-g)/(p1-1) - 1/p1 < Q/(2q) < 1/(p1-1)``."""
    if not p1 > 1:
        raise ValueError("p1 must be > 1")
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    Q = homogeneous_dimension(dims)
    lower = (2 - gamma) * _inv(p1 - 1) - _inv(p1)     # bound on Q/(2q) from below
    upper = _inv(p1 - 1)
    q_lo = Q * (p1 - 1) * Fraction(1, 2)              # from Q/(2q) < upper
    q_hi = INF if lower <= 0 else Q * _inv(2 * lower)
    lo, lo_closed = q_lo, False
    if p1 > q_lo:
        lo, lo_closed = p1, True
    empty = compare(lo, q_hi) >= 0
    return QWindow(lo=lo, hi=q_hi, lo_closed=lo_closed, empty=empty)


class CaseTag(str, enum.Enum):
    GLOBAL_CASE_I = "GlobalCaseI"
    GLOBAL_CASE_II = "GlobalCaseII"
    GLOBAL_CASE_III = "GlobalCaseIII"
    GLOBAL_CASE_IV = "GlobalCaseIV"
    GLOBAL_CASE_V = "GlobalCaseV"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class RegimeVerdict:
    case_tag: CaseTag
    required_smallness: List[str] = field(default_factory=list)
    matched_conditions: List[str] = field(default_factory=list)
    matched_cases: List[CaseTag] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "case_tag": self.case_tag.value,
            "required_smallness": list(self.required_smallness),
            "matched_conditions": list(self.matched_conditions),
            "matched_cases": [c.value for c in self.matched_cases],
            "notes": list(self.notes),
        }


def classify_regime(dims: GrushinDims, params: ProblemParams,
                    data_nonneg: bool) -> RegimeVerdict:
    """First global-existence case whose hypotheses hold, in order (i) to (v)."""
    rep = critical_exponents(dims, params)
    p1, p2 = params.p1, params.p2
    k1, k2 = params.coeff1, params.coeff2

    def gt(a, b):
        return compare(a, b) > 0

    def le(a, b):
        return compare(a, b) <= 0

    p1_ok = gt(p1, rep.p1_star)
    cases = [
        (CaseTag.GLOBAL_CASE_I,
         [("p1 > p1_star", p1_ok),
          ("p2 = p2_tilde", compare(p2, rep.p2_tilde) == 0)],
         ["||u0||_{L^q_sc} small"]),
        (CaseTag.GLOBAL_CASE_II,
         [("u0 >= 0", data_nonneg), ("k1 > 0", gt(k1, 0)), ("k2 > 0", gt(k2, 0)),
          ("p1 > p1_star", p1_ok), ("p2 > p2_star_star", gt(p2, rep.p2_star_star))],
         ["||u0||_inf small", "||u0||_{L^q_sc} small"]),
        (CaseTag.GLOBAL_CASE_III,
         [("u0 >= 0", data_nonneg), ("k1 <= 0", le(k1, 0)), ("k2 <= 0", le(k2, 0))],
         []),
        (CaseTag.GLOBAL_CASE_IV,
         [("u0 >= 0", data_nonneg), ("k1 > 0", gt(k1, 0)), ("k2 <= 0", le(k2, 0)),
          ("p1 > p1_star", p1_ok)],
         ["||u0||_{L^q_sc1} small"]),
        (CaseTag.GLOBAL_CASE_V,
         [("u0 >= 0", data_nonneg), ("k2 > 0", gt(k2, 0)), ("k1 <= 0", le(k1, 0)),
          ("p2 > p2_star", gt(p2, rep.p2_star))],
         ["||u0||_{L^q_sc2} small"]),
    ]
    matched = [(tag, conds, small) for tag, conds, small in cases
               if all(ok for _, ok in conds)]
    if not matched:
        return RegimeVerdict(CaseTag.INDETERMINATE)
    tag, conds, small = matched[0]
    notes = []
    if tag is CaseTag.GLOBAL_CASE_I:
        # the existence argument for case (i) orders the exponents
        notes.append("ordering p2 < p1 assumed: "
                     + ("holds" if compare(p2, p1) < 0 else "fails"))
    return RegimeVerdict(
        case_tag=tag,
        required_smallness=list(small),
        matched_conditions=[name for name, _ in conds],
        matched_cases=[m[0] for m in matched],
        notes=notes,
    )
