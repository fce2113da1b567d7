"""Reaction nonlinearities (f, F, g) with growth, positivity and mass-balance validators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

ArrayMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ReactionModel:
    """Pointwise nonlinearities of a reaction-diffusion system.

    ``f(y)`` maps an ``(ell, ...)`` array to ``(ell, ...)``; ``F(y)`` returns the
    flux ``(ell, d, ...)`` and ``g(y)`` the noise terms ``(ell, M, ...)``.
    ``F`` and ``g`` may be None (identically zero). ``degree`` is the
    polynomial degree used for dealiasing.
    """

    name: str
    ell: int
    f: ArrayMap
    h: float
    degree: int
    F: Optional[ArrayMap] = None
    g: Optional[ArrayMap] = None
    flux_dim: int = 0
    n_noise: int = 0
    M1: Optional[float] = None
    M2: Optional[float] = None
    mass_vector: Optional[tuple[float, ...]] = None
    trivial_f: bool = False
    params: dict = field(default_factory=dict, compare=False)

    def flux(self, y: np.ndarray) -> Optional[np.ndarray]:
        return None if self.F is None else self.F(y)

    def noise(self, y: np.ndarray) -> Optional[np.ndarray]:
        return None if self.g is None else self.g(y)


@dataclass(frozen=True)
class Stoichiometry:
    """One reversible reaction ``sum q_i A_i <-> sum p_i A_i`` with rates R+ and R-."""

    q: tuple[int, ...]
    p: tuple[int, ...]
    R_plus: float = 1.0
    R_minus: float = 1.0

    def __post_init__(self):
        q, p = tuple(int(v) for v in self.q), tuple(int(v) for v in self.p)
        if len(q) != len(p) or not q:
            raise ValueError("q and p must be nonempty and of equal length")
        if min(q + p) < 0:
            raise ValueError("stoichiometric orders must be nonnegative")
        if q == p:
            raise ValueError("q = p gives the trivial reaction f = 0")
        if self.R_plus < 0 or self.R_minus < 0:
            raise ValueError("rates must be nonnegative")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class MassBalanceSpec:
    alpha: tuple[Fraction, ...]
    C0: float = 0.0


def _monomial(y: np.ndarray, powers: Sequence[int]) -> np.ndarray:
    out = np.ones(y.shape[1:])
    for yi, k in zip(y, powers):
        if k:
            out = out * yi**k
    return out


def mass_action(stoich: Stoichiometry, declared_M1=None, declared_M2=None) -> ReactionModel:
    """Law-of-mass-action model ``f_i = (p_i - q_i)(R+ y^q - R- y^p)``."""
    q, p = np.array(stoich.q), np.array(stoich.p)
    change = (p - q).astype(float)
    Rp, Rm = stoich.R_plus, stoich.R_minus

    def f(y):
        rate = Rp * _monomial(y, q) - Rm * _monomial(y, p)
        return change.reshape((-1,) + (1,) * (y.ndim - 1)) * rate

    h = max(int(q.sum()), int(p.sum()))
    spec = solve_mass_vector(stoich)
    alpha = None if spec is None else tuple(float(a) for a in spec.alpha)
    return ReactionModel(
        name="mass_action",
        ell=len(q),
        f=f,
        h=h,
        degree=max(h, 2),
        M1=declared_M1,
        M2=declared_M2,
        mass_vector=alpha,
        params={"q": stoich.q, "p": stoich.p, "R_plus": Rp, "R_minus": Rm},
    )


def solve_mass_vector(stoich: Stoichiometry) -> Optional[MassBalanceSpec]:
    """Strictly positive rational ``alpha`` with ``sum alpha_i (q_i - p_i) = 0``, or None.

    Each side of the balance is given total weight 1, spread evenly over its
    species, and the result is scaled to the smallest integer vector.
    """
    v = [qi - pi for qi, pi in zip(stoich.q, stoich.p)]
    pos = [i for i, x in enumerate(v) if x > 0]
    neg = [i for i, x in enumerate(v) if x < 0]
    if not pos or not neg:
        return None
    alpha = [Fraction(1)] * len(v)
    for group in (pos, neg):
        for i in group:
            alpha[i] = Fraction(1, abs(v[i]) * len(group))
    scale = math.lcm(*(a.denominator for a in alpha))
    alpha = [a * scale for a in alpha]
    g = math.gcd(*(a.numerator for a in alpha))
    return MassBalanceSpec(tuple(a / g for a in alpha), 0.0)


# ---------------------------------------------------------------------------
# presets


def _power_degree(h: float) -> int:
    return max(2, int(math.ceil(h)))


def lotka_volterra(lam1=1.0, lam2=1.0, a11=1.0, a12=1.0, a21=1.0, a22=1.0, **declared) -> ReactionModel:
    def f(y):
        y1, y2 = y[0], y[1]
        return np.stack([y1 * (lam1 - a11 * y1 - a12 * y2), y2 * (-lam2 + a21 * y1 - a22 * y2)])

    return ReactionModel(
        "lotka_volterra", 2, f, h=2, degree=2,
        params=dict(lam1=lam1, lam2=lam2, a11=a11, a12=a12, a21=a21, a22=a22), **declared,
    )


def brusselator(alpha=1.0, beta=2.0, **declared) -> ReactionModel:
    def f(y):
        y1, y2 = y[0], y[1]
        r = y1 * y1 * y2
        return np.stack([alpha - (beta + 1) * y1 + r, beta * y1 - r])

    return ReactionModel("brusselator", 2, f, h=3, degree=3, params=dict(alpha=alpha, beta=beta), **declared)


def scalar_power(h=3.0, sign=1.0, e: Sequence[float] = (), theta: Sequence[float] = (), **declared) -> ReactionModel:
    """Scalar model ``f = sign |y|^(h-1) y``, ``F = e |y|^((h-1)/2) y``, ``g_n = theta_n |y|^((h-1)/2) y``."""
    h = float(h)
    e = np.asarray(e, dtype=float)
    theta = np.asarray(theta, dtype=float)
    odd = float(h).is_integer() and int(h) % 2 == 1

    def power(y, k):
        # y^(k) with the sign of y; exact polynomial for odd integer exponents
        return y**k if float(k).is_integer() and int(k) % 2 == 1 else np.abs(y) ** (k - 1) * y

    def f(y):
        return sign * power(y, h)

    half = (h + 1) / 2
    F = g = None
    if e.size and np.any(e != 0):
        def F(y):
            return e.reshape((1, -1) + (1,) * (y.ndim - 1)) * power(y, half)[:, None]
    if theta.size and np.any(theta != 0):
        def g(y):
            return theta.reshape((1, -1) + (1,) * (y.ndim - 1)) * power(y, half)[:, None]

    declared.setdefault("M1", 0.0)
    declared.setdefault("M2", max(1.0, float(np.linalg.norm(e) + np.linalg.norm(theta))))
    return ReactionModel(
        "scalar_power", 1, f, h=h, degree=_power_degree(h) if odd else _power_degree(h) + 1,
        F=F, g=g, flux_dim=int(e.size), n_noise=int(theta.size), trivial_f=(sign == 0),
        params=dict(h=h, sign=sign, e=e.tolist(), theta=theta.tolist()), **declared,
    )


PRESETS = {"lotka_volterra": lotka_volterra, "brusselator": brusselator, "scalar_power": scalar_power}


def preset(name: str, **params) -> ReactionModel:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# validators


def _sobol(dim: int, samples: int, seed: int = 0) -> np.ndarray:
    m = max(1, math.ceil(math.log2(samples)))
    return qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(m)[:samples]


@dataclass(frozen=True)
class PositivityReport:
    passed: bool
    failures: tuple[tuple[str, int, tuple[float, ...], float], ...]
    box_size: float
    samples: int
    flux_constants: tuple[Optional[np.ndarray], ...] = field(default=(), compare=False)


def check_positivity_conditions(model: ReactionModel, box_size: float = 10.0, samples: int = 10_000, tol: float = 1e-12) -> PositivityReport:
    """Boundary conditions for positivity on the sampled box ``[0, box_size]^ell``.

    On the face ``y_i = 0`` it requires ``f_i >= 0``, a constant flux ``F_i``
    and vanishing noise ``g_{n,i}``. The first witness per condition and
    component is reported.
    """
    pts = box_size * _sobol(model.ell, samples)
    failures = []
    consts = []
    for i in range(model.ell):
        y = pts.T.copy()
        y[i] = 0.0
        fi = model.f(y)[i]
        j = int(np.argmin(fi))
        if fi[j] < -tol * (1 + np.max(np.abs(fi))):
            failures.append(("f_i >= 0 on y_i = 0", i, tuple(y[:, j]), float(fi[j])))
        Fy = model.flux(y)
        if Fy is not None:
            Fi = Fy[i]
            spread = np.max(Fi, axis=-1) - np.min(Fi, axis=-1)
            if np.any(spread > tol * (1 + np.max(np.abs(Fi)))):
                j = int(np.argmax(np.max(np.abs(Fi - Fi[:, :1]), axis=0)))
                failures.append(("F_i constant on y_i = 0", i, tuple(y[:, j]), float(np.max(spread))))
            consts.append(Fi[:, 0].copy())
        else:
            consts.append(None)
        gy = model.noise(y)
        if gy is not None:
            gi = np.abs(gy[i])
            if np.any(gi > tol):
                j = int(np.argmax(np.max(gi, axis=0)))
                failures.append(("g_{n,i} = 0 on y_i = 0", i, tuple(y[:, j]), float(gi.max())))
    return PositivityReport(not failures, tuple(failures), box_size, samples, tuple(consts))


@dataclass(frozen=True)
class GrowthReport:
    passed: bool
    M1: float
    M2: float
    lipschitz: float
    declared: tuple[Optional[float], Optional[float]]
    h: float
    witness: Optional[tuple[float, ...]] = None


def check_growth(model: ReactionModel, box_size: float = 10.0, samples: int = 10_000, h: Optional[float] = None, M1=None, M2=None) -> GrowthReport:
    """Fit growth constants on ``[-box, box]^ell`` and test declared ones with 1% slack.

    The envelopes are ``|f| <= M1 + M2(|y| + |y|^h)`` and
    ``|F| + |g| <= M1 + M2(|y| + |y|^((h+1)/2))``. The Lipschitz constant is
    the largest sampled quotient ``|f(y)-f(y')| / ((1+|y|^(h-1)+|y'|^(h-1))|y-y'|)``.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    h = model.h if h is None else h
    M1 = model.M1 if M1 is None else M1
    M2 = model.M2 if M2 is None else M2
    y = (2 * _sobol(model.ell, samples, seed=1) - 1).T * box_size
    r = np.sqrt(np.sum(y * y, axis=0))

    def magnitude(arr, axes):
        return np.sqrt(np.sum(arr * arr, axis=axes))

    zero = np.zeros((model.ell, 1))
    size_f = magnitude(model.f(y), 0)
    size_fg = np.zeros_like(r)
    zero_fg = 0.0
    if model.F is not None:
        size_fg += magnitude(model.F(y), (0, 1))
        zero_fg += float(magnitude(model.F(zero), (0, 1))[0])
    if model.g is not None:
        size_fg += magnitude(model.g(y), (0, 1))
        zero_fg += float(magnitude(model.g(zero), (0, 1))[0])
    env_f = r + r**h
    env_fg = r + r ** ((h + 1) / 2)

    fit_M1 = max(float(magnitude(model.f(zero), 0)[0]), zero_fg)
    nz = r > 0
    fit_M2 = float(max(np.max(np.maximum(size_f[nz] - fit_M1, 0) / env_f[nz]),
                       np.max(np.maximum(size_fg[nz] - fit_M1, 0) / env_fg[nz])))

    half = samples // 2
    ya, yb = y[:, :half], y[:, half : 2 * half]
    dy = magnitude(ya - yb, 0)
    df = magnitude(model.f(ya) - model.f(yb), 0)
    ra, rb = r[:half], r[half : 2 * half]
    ok = dy > 0
    lip = float(np.max(df[ok] / ((1 + ra[ok] ** (h - 1) + rb[ok] ** (h - 1)) * dy[ok]))) if ok.any() else 0.0

    passed, witness = True, None
    if M1 is not None and M2 is not None:
        bad = (size_f > 1.01 * (M1 + M2 * env_f)) | (size_fg > 1.01 * (M1 + M2 * env_fg))
        bad_zero = fit_M1 > 1.01 * M1
        if bad.any():
            passed, witness = False, tuple(y[:, int(np.argmax(bad))])
        elif bad_zero:
            passed, witness = False, (0.0,) * model.ell
    return GrowthReport(passed, fit_M1, fit_M2, lip, (M1, M2), float(h), witness)


def mass_defect(model: ReactionModel, alpha: Sequence[float], y: np.ndarray) -> np.ndarray:
    """``sum_i alpha_i f_i(y)`` at the given points."""
    a = np.asarray(alpha, dtype=float).reshape((-1,) + (1,) * (y.ndim - 1))
    return np.sum(a * model.f(y), axis=0)
