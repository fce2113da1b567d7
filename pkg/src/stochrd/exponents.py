"""Exact-rational exponent algebra for critical stochastic reaction-diffusion theory.

Every quantity here is a :class:`fractions.Fraction` (or, for the Fujita-type
threshold in d >= 3, an exact quadratic surd), so admissibility decisions never
depend on floating-point rounding near region boundaries.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

Number = Union[int, Fraction]


class DomainError(ValueError):
    """An operation was called outside its mathematical domain."""


class InadmissibleError(ValueError):
    """Raised when an operation needs admissible exponents and they are not."""

    def __init__(self, report: "AdmissibilityReport"):
        self.report = report
        names = ", ".join(v.name for v in report.violated)
        super().__init__(f"inadmissible exponents; violated: {names}")


def as_fraction(x) -> Fraction:
    """Convert ints, Fractions, decimal strings or ``"a/b"`` strings exactly.

    Floats are accepted but converted through their shortest repr, so that
    ``0.1`` becomes ``1/10`` rather than the binary expansion.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not exponents")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite exponent {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot interpret {x!r} as a rational number")


def _rational_sqrt(b: Fraction) -> Optional[Fraction]:
    if b < 0:
        return None
    rn, rd = math.isqrt(b.numerator), math.isqrt(b.denominator)
    if rn * rn == b.numerator and rd * rd == b.denominator:
        return Fraction(rn, rd)
    return None


@functools.total_ordering
@dataclass(frozen=True)
class QuadraticSurd:
    """The real number ``a + sqrt(b)`` with rational ``a`` and ``b >= 0``.

    Comparisons against rationals are exact: ``a + sqrt(b) > r`` is decided by
    the sign of ``r - a`` and of the polynomial ``b - (r - a)**2``.
    """

    a: Fraction
    b: Fraction

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("negative radicand")

    def sign_minus(self, r: Number) -> int:
        """Sign of ``self - r``."""
        x = as_fraction(r) - self.a
        if x < 0:
            return 1
        diff = self.b - x * x
        return (diff > 0) - (diff < 0)

    def __eq__(self, other):
        if isinstance(other, QuadraticSurd):
            return self.a == other.a and self.b == other.b
        if isinstance(other, (int, Fraction)):
            return self.sign_minus(other) == 0
        return NotImplemented

    def __lt__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.sign_minus(other) < 0
        return NotImplemented

    def __gt__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.sign_minus(other) > 0
        return NotImplemented

    def __hash__(self):
        return hash((self.a, self.b))

    def __float__(self) -> float:
        return float(self.a) + math.sqrt(float(self.b))

    def __str__(self) -> str:
        return f"{self.a} + sqrt({self.b})"


# ---------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class ExponentParams:
    """The exponent tuple (d, ell, p, q, h, delta, kappa).

    ``kappa=None`` means the critical weight is intended.
    """

    d: int
    p: Fraction
    q: Fraction
    h: Fraction
    delta: Fraction
    ell: int = 1
    kappa: Optional[Fraction] = None

    def __post_init__(self):
        for name in ("p", "q", "h", "delta"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if self.kappa is not None:
            object.__setattr__(self, "kappa", as_fraction(self.kappa))
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError(f"ell must be a positive integer, got {self.ell}")
        if not (self.p > 2 or (self.p == 2 and self.q == 2)):
            raise ValueError("p must exceed 2 (p = 2 only together with q = 2)")
        if self.q < 2:
            raise ValueError("q must be at least 2")
        if self.h <= 1:
            raise ValueError("h must exceed 1")
        if not (1 <= self.delta < 2):
            raise ValueError("delta must lie in [1, 2)")
        if self.kappa is not None and not (0 <= self.kappa < self.p / 2 - 1):
            raise ValueError("kappa must lie in [0, p/2 - 1)")


@dataclass(frozen=True)
class Inequality:
    """A named inequality ``lhs <relation> rhs`` with exact values."""

    name: str
    lhs: Fraction
    relation: str
    rhs: Optional[Fraction]

    def holds(self) -> bool:
        if self.rhs is None:  # unbounded side
            return self.relation in ("<", "<=")
        ops = {
            "<": self.lhs < self.rhs,
            "<=": self.lhs <= self.rhs,
            ">": self.lhs > self.rhs,
            ">=": self.lhs >= self.rhs,
        }
        return ops[self.relation]

    def __str__(self) -> str:
        rhs = "inf" if self.rhs is None else str(self.rhs)
        return f"{self.name}: {self.lhs} {self.relation} {rhs}"


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    violated: tuple[Inequality, ...]
    q_range: tuple[Fraction, Optional[Fraction]]
    kappa_critical: Optional[Fraction]
    trace_smoothness: Fraction
    checked: tuple[Inequality, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class BlowupExponents:
    beta0: Fraction
    gamma0: Fraction
    zeta0: Fraction
    delta0: Fraction


@dataclass(frozen=True)
class Lemma32Exponents:
    beta1: Fraction
    beta2: Fraction
    rho1: Fraction
    rho2: Fraction
    case1: str
    case2: str

    def subcritical_bound(self) -> Fraction:
        """Largest value allowed for ``(1 + kappa)/p`` by both subcriticality conditions."""
        return min(
            (self.rho1 + 1) / self.rho1 * (1 - self.beta1),
            (self.rho2 + 1) / self.rho2 * (1 - self.beta2),
        )


@dataclass(frozen=True)
class D1Report:
    case: int
    terms: tuple[Fraction, ...]
    bound: Fraction
    weight_ratio: Fraction
    satisfied: bool


# ---------------------------------------------------------------------------
# operations


def fujita_exponent(d: int) -> Union[Fraction, QuadraticSurd]:
    """Stochastic Fujita exponent h_d: admissible exponents exist iff h > h_d."""
    if int(d) != d or d < 2:
        raise DomainError("the Fujita threshold is defined for d >= 2 (d = 1 is excluded)")
    if d == 2:
        return Fraction(3)
    a = Fraction(1, 2) + Fraction(1, d)
    b = a * a + Fraction(2, d)
    root = _rational_sqrt(b)
    if root is not None:
        return a + root
    return QuadraticSurd(a, b)


def check_admissible(params: ExponentParams) -> AdmissibilityReport:
    """Check the admissible-exponent region, reporting every violated inequality."""
    d = params.d
    if d < 2:
        raise DomainError("admissibility is defined for d >= 2")
    p, q, h, delta = params.p, params.q, params.h, params.delta

    lower = Fraction(d) / (d - delta)
    denom = h + 1 - delta * (h - 1)
    upper = d * (h - 1) / denom if denom > 0 else None
    dq = Fraction(d) / q

    checks = [
        Inequality("h > 1", h, ">", Fraction(1)),
        Inequality("delta >= 1", delta, ">=", Fraction(1)),
        Inequality("delta < (h+1)/h", delta, "<", (h + 1) / h),
        Inequality("p > 2", p, ">", Fraction(2)),
        Inequality("q >= 2", q, ">=", Fraction(2)),
        Inequality(
            "1/p + (delta + d/q)/2 <= h/(h-1)",
            1 / p + (delta + dq) / 2,
            "<=",
            h / (h - 1),
        ),
        Inequality("q > d/(d-delta)", q, ">", lower),
        Inequality("q < d(h-1)/(h+1-delta(h-1))", q, "<", upper),
    ]
    violated = tuple(c for c in checks if not c.holds())
    admissible = not violated
    kappa_c = critical_weight_formula(params) if admissible else None
    return AdmissibilityReport(
        admissible=admissible,
        violated=violated,
        q_range=(lower, upper),
        kappa_critical=kappa_c,
        trace_smoothness=dq - 2 / (h - 1),
        checked=tuple(checks),
    )


def critical_weight_formula(params: ExponentParams) -> Fraction:
    p, q, h, delta = params.p, params.q, params.h, params.delta
    return p * (h / (h - 1) - (delta + Fraction(params.d) / q) / 2) - 1


def critical_weight(params: ExponentParams) -> tuple[Fraction, Fraction]:
    """Return ``(kappa_c, trace smoothness)`` for admissible exponents.

    The trace smoothness is computed as ``2 - delta - 2(1 + kappa_c)/p``; it
    coincides with ``d/q - 2/(h-1)``.
    """
    report = check_admissible(params)
    if not report.admissible:
        raise InadmissibleError(report)
    kappa_c = report.kappa_critical
    return kappa_c, 2 - params.delta - 2 * (1 + kappa_c) / params.p


def admissible_delta(p, q, h, d: int) -> Optional[Fraction]:
    """Some delta making (p, q, h, delta) admissible, or None if there is none.

    All constraints are linear in delta once (p, q, h) are fixed, so the
    feasible set is an interval that is computed exactly.
    """
    p, q, h = as_fraction(p), as_fraction(q), as_fraction(h)
    if h <= 1 or p <= 2 or q < 2 or d < 2:
        return None
    dq = Fraction(d) / q
    lowers = [(Fraction(1), False), ((h + 1) / (h - 1) - dq, True)]
    uppers = [
        ((h + 1) / h, True),
        (d - dq, True),
        (2 * h / (h - 1) - 2 / p - dq, False),
    ]
    return _pick_in_interval(lowers, uppers)


def _pick_in_interval(lowers, uppers) -> Optional[Fraction]:
    """Pick a rational point from an interval given as (value, strict) bounds."""
    lo, lo_strict = None, False
    for v, strict in lowers:
        if lo is None or v > lo or (v == lo and strict):
            lo, lo_strict = v, strict
    hi, hi_strict = None, False
    for v, strict in uppers:
        if hi is None or v < hi or (v == hi and strict):
            hi, hi_strict = v, strict
    if lo is None and hi is None:
        return Fraction(0)
    if hi is None:
        return lo + 1 if lo_strict else lo
    if lo is None:
        return hi - 1 if hi_strict else hi
    if lo < hi:
        if not lo_strict:
            return lo
        if not hi_strict:
            return hi
        return (lo + hi) / 2
    if lo == hi and not lo_strict and not hi_strict:
        return lo
    return None


def blowup_exponents(p0, q0, h0, d: int, delta0=None) -> BlowupExponents:
    """Exponents of the blow-up criteria for the tuple (p0, q0, h0).

    When ``delta0`` is omitted an admissible one is searched for exactly.
    """
    p0, q0, h0 = as_fraction(p0), as_fraction(q0), as_fraction(h0)
    if delta0 is None:
        delta0 = admissible_delta(p0, q0, h0, d)
        if delta0 is None:
            raise DomainError("no delta0 makes (p0, q0, h0) admissible")
    else:
        delta0 = as_fraction(delta0)
        report = check_admissible(ExponentParams(d=d, p=p0, q=q0, h=h0, delta=delta0))
        if not report.admissible:
            raise InadmissibleError(report)
    beta0 = Fraction(d) / q0 - 2 / (h0 - 1)
    return BlowupExponents(
        beta0=beta0,
        gamma0=beta0 + 2 / p0,
        zeta0=Fraction(d) * (h0 - 1) / 2,
        delta0=delta0,
    )


def lemma32_exponents(q, h, delta, d: int) -> Lemma32Exponents:
    """Lower-order exponents (beta_j, rho_j) of the reaction and flux/noise terms."""
    q, h, delta = as_fraction(q), as_fraction(h), as_fraction(delta)
    if h <= 1:
        raise DomainError("h must exceed 1")
    if not (1 <= delta < 2):
        raise DomainError("delta must lie in [1, 2)")
    if d < 2:
        raise DomainError("d must be at least 2")
    b1 = Fraction(d) / (d - delta)
    b2 = d * (h - 1) / (2 * h - delta * (h - 1))
    if not q > b1:
        raise DomainError(f"precondition q > d/(d-delta) = {b1} fails for q = {q}")
    if not q > b2:
        raise DomainError(f"precondition q > d(h-1)/(2h-delta(h-1)) = {b2} fails for q = {q}")

    s = delta + Fraction(d) / q
    if q < d * (h - 1) / delta:
        beta1, case1 = s * (1 - 1 / h) / 2, "q < d(h-1)/delta"
    else:
        beta1, case1 = delta / 2, "q >= d(h-1)/delta"
    # at delta = 1 the second threshold is +inf, so the first branch always applies
    if delta == 1 or q < d * (h - 1) / (2 * (delta - 1)):
        beta2, case2 = 1 / (h + 1) + s * (h - 1) / (2 * (h + 1)), "q < d(h-1)/(2(delta-1))"
    else:
        beta2, case2 = delta / 2, "q >= d(h-1)/(2(delta-1))"
    for name, b in (("beta1", beta1), ("beta2", beta2)):
        if not (0 < b < 1):
            raise DomainError(f"{name} = {b} outside (0, 1)")
    return Lemma32Exponents(beta1, beta2, h - 1, (h - 1) / 2, case1, case2)


def max_subcritical_weight(p, lemma: Lemma32Exponents) -> Fraction:
    """Largest kappa with (1+kappa)/p <= ((rho_j+1)/rho_j)(1-beta_j) for j = 1, 2."""
    return as_fraction(p) * lemma.subcritical_bound() - 1


def check_d1_conditions(p, q, h, delta, kappa=0) -> D1Report:
    """Exponent conditions for local well-posedness in one space dimension."""
    p, q, h, delta, kappa = map(as_fraction, (p, q, h, delta, kappa))
    if q < 2:
        raise DomainError("q must be at least 2")
    if not (1 / q - 1 / h < 2 - delta):
        raise DomainError("precondition 1/q - 1/h < 2 - delta fails")
    s = delta + 1 / q
    terms = [1 - delta / 2, 1 - delta / 2 + 1 / (2 * h) - 1 / (2 * q)]
    if s > 2:
        case = 1
    elif s < 2:
        case = 2
        terms.append(1 - (h - 1) / (2 * h) * s)
    else:
        raise DomainError("unsupported boundary delta + 1/q = 2")
    bound = h / (h - 1) * min(terms)
    ratio = (1 + kappa) / p
    return D1Report(case, tuple(terms), bound, ratio, ratio <= bound)


def check_p2q2(h, d: int) -> bool:
    """Whether growth h is allowed in the p = q = 2 (variational) setting."""
    h = as_fraction(h)
    if d < 1:
        raise DomainError("d must be positive")
    if d == 1:
        return 1 < h <= 4
    if d == 2:
        return 1 < h < 3
    return 1 < h <= Fraction(4 + d, d)


# ---------------------------------------------------------------------------
# exact region search


@dataclass(frozen=True)
class _Lin:
    """Linear constraint ``sum(coef[v] * v) + const  (> 0 if strict else >= 0)``."""

    coef: tuple[tuple[str, Fraction], ...]
    const: Fraction
    strict: bool

    def c(self, var: str) -> Fraction:
        return dict(self.coef).get(var, Fraction(0))


def _lin(coef: dict, const, strict: bool) -> _Lin:
    items = tuple(sorted((k, as_fraction(v)) for k, v in coef.items() if v != 0))
    return _Lin(items, as_fraction(const), strict)


def _eliminate(cons: Sequence[_Lin], var: str) -> list[_Lin]:
    """One Fourier-Motzkin step removing ``var`` (strictness propagates)."""
    pos = [c for c in cons if c.c(var) > 0]
    neg = [c for c in cons if c.c(var) < 0]
    out = [c for c in cons if c.c(var) == 0]
    for a in pos:
        for b in neg:
            wa, wb = -b.c(var), a.c(var)
            coef: dict[str, Fraction] = {}
            for k, v in a.coef:
                coef[k] = coef.get(k, 0) + wa * v
            for k, v in b.coef:
                coef[k] = coef.get(k, 0) + wb * v
            coef.pop(var, None)
            out.append(_lin(coef, wa * a.const + wb * b.const, a.strict or b.strict))
    return out


def _solve_var(cons: Iterable[_Lin], var: str, values: dict) -> Optional[Fraction]:
    lowers, uppers = [], []
    for c in cons:
        a = c.c(var)
        rest = c.const + sum(v * values[k] for k, v in c.coef if k != var)
        if a == 0:
            if rest < 0 or (rest == 0 and c.strict):
                return None
            continue
        bound = -rest / a
        (lowers if a > 0 else uppers).append((bound, c.strict))
    return _pick_in_interval(lowers, uppers)


def find_admissible(d: int, h) -> Optional[ExponentParams]:
    """Search the admissible region exactly for a witness (p, q, delta).

    Works in the variables s = 1/q and t = 1/p, where every condition is
    linear, and decides feasibility by Fourier-Motzkin elimination. Returns
    None when no admissible exponents exist for this (d, h).
    """
    h = as_fraction(h)
    if d < 2:
        raise DomainError("admissibility is defined for d >= 2")
    if h <= 1:
        return None
    cons = [
        _lin({"t": 1}, 0, True),
        _lin({"t": -1}, Fraction(1, 2), True),
        _lin({"s": 1}, 0, True),
        _lin({"s": -1}, Fraction(1, 2), False),
        _lin({"delta": 1}, -1, False),
        _lin({"delta": -1}, (h + 1) / h, True),
        _lin({"t": -1, "delta": Fraction(-1, 2), "s": Fraction(-d, 2)}, h / (h - 1), False),
        _lin({"delta": -1, "s": -d}, d, True),
        _lin({"s": d * (h - 1), "delta": h - 1}, -(h + 1), True),
    ]
    levels = [cons]
    for var in ("t", "delta", "s"):
        levels.append(_eliminate(levels[-1], var))
    for c in levels[-1]:
        if c.const < 0 or (c.const == 0 and c.strict):
            return None
    values: dict[str, Fraction] = {}
    for var, level in zip(("s", "delta", "t"), (levels[2], levels[1], levels[0])):
        x = _solve_var(level, var, values)
        if x is None:  # pragma: no cover - elimination guarantees feasibility
            return None
        values[var] = x
    return ExponentParams(d=d, p=1 / values["t"], q=1 / values["s"], h=h, delta=values["delta"])


def scan_region(d: int, h, delta, p, samples: int = 50) -> list[tuple[Fraction, Optional[Fraction], Optional[Fraction]]]:
    """Sample the admissible q-interval for fixed (d, h, delta).

    Each row is ``(q, p_min, kappa_c)``: ``p_min`` is the infimum of p making
    the first admissibility inequality hold, and ``kappa_c`` is evaluated at
    the supplied ``p`` (None where that p is not admissible).
    """
    h, delta, p = as_fraction(h), as_fraction(delta), as_fraction(p)
    lower = max(Fraction(d) / (d - delta), Fraction(2))
    denom = h + 1 - delta * (h - 1)
    upper = d * (h - 1) / denom if denom > 0 else lower + 10
    rows = []
    if upper <= lower:
        return rows
    for j in range(1, samples + 1):
        q = lower + (upper - lower) * Fraction(j, samples + 1)
        slack = h / (h - 1) - (delta + Fraction(d) / q) / 2
        p_min = None if slack <= 0 else max(Fraction(2), 1 / slack)
        report = check_admissible(ExponentParams(d=d, p=p, q=q, h=h, delta=delta))
        rows.append((q, p_min, report.kappa_critical))
    return rows
