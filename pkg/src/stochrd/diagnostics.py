"""Per-step monitors, run reports, survival statistics and a spectral regularity proxy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exponents import blowup_exponents
from .torus import NormSpec, TorusField, TorusGrid, norm

PATH_COLUMNS = (
    "t",
    "min_u",
    "total_mass",
    "L2",
    "Linf",
    "Lzeta1",
    "besov_beta0",
    "sobolev_gamma0_running_Lp0",
    "alive",
)


@dataclass(frozen=True)
class MonitorSpec:
    """Exponents and weights evaluated along a path.

    ``beta0, gamma0, zeta0, p0, q0`` come from the blow-up criteria and
    ``zeta1 > zeta0``. ``kappa, p, q, delta`` define the time-weighted norm
    ``(int_0^t ||u||^p_{H^{2-delta,q}} r^kappa dr)^{1/p}``. With
    ``norms=False`` only the cheap quantities (min, mass, L2, Linf) are kept.
    """

    beta0: float = 0.0
    gamma0: float = 0.0
    zeta0: float = 2.0
    zeta1: float = 4.0
    p0: float = 2.0
    q0: float = 2.0
    alpha: tuple[float, ...] = (1.0,)
    kappa: float = 0.0
    p: float = 2.0
    q: float = 2.0
    delta: float = 1.0
    norms: bool = True

    def __post_init__(self):
        if not self.zeta1 > self.zeta0:
            raise ValueError("zeta1 must exceed zeta0")
        if any(a <= 0 for a in self.alpha):
            raise ValueError("mass weights must be positive")

    @classmethod
    def default(cls, ell: int, **kw) -> "MonitorSpec":
        return cls(alpha=(1.0,) * ell, **kw)

    @classmethod
    def from_exponents(cls, p0, q0, h0, d: int, ell: int = 1, zeta1=None, delta0=None, **kw) -> "MonitorSpec":
        be = blowup_exponents(p0, q0, h0, d, delta0)
        z1 = float(be.zeta0) + 1.0 if zeta1 is None else float(zeta1)
        kw.setdefault("alpha", (1.0,) * ell)
        return cls(
            beta0=float(be.beta0),
            gamma0=float(be.gamma0),
            zeta0=float(be.zeta0),
            zeta1=z1,
            p0=float(p0),
            q0=float(q0),
            **kw,
        )


def monitor_step(f: TorusField, spec: MonitorSpec) -> dict:
    """Instantaneous monitored quantities of one field."""
    v = f.values
    if not np.all(np.isfinite(v)):
        nan = float("nan")
        return dict(min_u=nan, total_mass=nan, L2=nan, Linf=nan, Lzeta0=nan, Lzeta1=nan,
                    besov_beta0=nan, sobolev_gamma0=nan, weighted_base=nan)
    means = f.mean()
    alpha = np.asarray(spec.alpha, dtype=float)
    rec = dict(
        min_u=float(v.min()),
        total_mass=float(np.dot(alpha, means)),
        L2=norm(f, NormSpec("Lq", q=2)),
        Linf=norm(f, NormSpec("Lq", q=math.inf)),
    )
    if spec.norms:
        rec.update(
            Lzeta0=norm(f, NormSpec("Lq", q=spec.zeta0)),
            Lzeta1=norm(f, NormSpec("Lq", q=spec.zeta1)),
            besov_beta0=norm(f, NormSpec("BesovBsqp", s=spec.beta0, q=spec.q0, p=spec.p0)),
            sobolev_gamma0=norm(f, NormSpec("SobolevHsq", s=spec.gamma0, q=spec.q0)),
            weighted_base=norm(f, NormSpec("SobolevHsq", s=2 - spec.delta, q=spec.q)),
        )
    else:
        nan = float("nan")
        rec.update(Lzeta0=nan, Lzeta1=nan, besov_beta0=nan, sobolev_gamma0=nan, weighted_base=nan)
    return rec


@dataclass
class RunReport:
    """Trajectory summary of one path."""

    path: int
    sigma_hat: float
    reason: str
    series: dict
    sup_zeta1: float
    sup_besov: float
    running_integral: float
    weighted_norm: float
    min_u: float
    mass_drift: float
    final: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def survived(self) -> bool:
        return math.isinf(self.sigma_hat)

    def rows(self) -> list[tuple]:
        s = self.series
        return [
            tuple(s[c][i] for c in PATH_COLUMNS[:-2]) + (s["running_integral"][i], int(s["alive"][i]))
            for i in range(len(s["t"]))
        ]


class Monitor:
    """Accumulates monitor records for one path (the interval starts one step after 0)."""

    def __init__(self, grid: TorusGrid, spec: MonitorSpec, keep_final: bool = True):
        self.grid, self.spec, self.keep_final = grid, spec, keep_final
        self.records: list[dict] = []
        self._integral = 0.0
        self._weighted = 0.0
        self._prev = None  # (t, integrand for I, integrand for W)
        self._sup_z1 = 0.0
        self._sup_b = 0.0
        self.path = 0

    def record(self, state, force: bool = True) -> Optional[dict]:
        if not force:
            return None
        self.path = state.path
        f = TorusField(self.grid, state.u)
        with np.errstate(over="ignore", invalid="ignore"):
            rec = monitor_step(f, self.spec)
        t = float(state.t)
        rec["t"] = t
        rec["alive"] = bool(state.alive)
        integrand_I = rec["sobolev_gamma0"] ** self.spec.p0
        integrand_W = rec["weighted_base"] ** self.spec.p * (t**self.spec.kappa if t > 0 else (1.0 if self.spec.kappa == 0 else 0.0))
        if self._prev is not None:
            t0, i0, w0 = self._prev
            if t0 > 0:  # the integral over [s, t] starts at the first positive time
                self._integral += 0.5 * (t - t0) * (i0 + integrand_I)
            self._weighted += 0.5 * (t - t0) * (w0 + integrand_W)
        self._prev = (t, integrand_I, integrand_W)
        if t > 0:
            for key, attr in (("Lzeta1", "_sup_z1"), ("besov_beta0", "_sup_b")):
                val = rec[key]
                if math.isnan(val) or not rec["alive"]:
                    setattr(self, attr, math.inf) if math.isnan(val) else setattr(self, attr, max(getattr(self, attr), val))
                else:
                    setattr(self, attr, max(getattr(self, attr), val))
        rec["running_integral"] = self._integral
        rec["weighted_norm"] = self._weighted ** (1.0 / self.spec.p)
        self.records.append(rec)
        self._last_u = state.u
        return rec

    def report(self, state) -> RunReport:
        keys = ("t", "min_u", "total_mass", "L2", "Linf", "Lzeta0", "Lzeta1", "besov_beta0",
                "sobolev_gamma0", "running_integral", "weighted_norm", "alive")
        series = {k: np.array([r[k] for r in self.records]) for k in keys}
        mass = series["total_mass"]
        finite = np.isfinite(mass)
        m0 = mass[0]
        drift = float(np.max(np.abs(mass[finite] - m0))) if finite.any() else float("nan")
        if m0 != 0:
            drift /= abs(m0)
        sigma = math.inf if state.alive else float(state.t)
        mins = series["min_u"]
        return RunReport(
            path=state.path,
            sigma_hat=sigma,
            reason="survived" if state.alive else state.reason,
            series=series,
            sup_zeta1=self._sup_z1,
            sup_besov=self._sup_b,
            running_integral=self._integral,
            weighted_norm=self._weighted ** (1.0 / self.spec.p),
            min_u=float(np.nanmin(mins)) if np.isfinite(mins).any() else float("nan"),
            mass_drift=drift,
            final=np.array(state.u) if self.keep_final else None,
        )


# ---------------------------------------------------------------------------
# survival statistics


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (95% by default)."""
    if n <= 0:
        raise ValueError("n must be positive")
    phat = k / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class Scenario:
    scale: float
    M1: float = 0.0
    label: str = ""


@dataclass(frozen=True)
class SurvivalSummary:
    scenario_id: int
    paths: int
    survived: int
    numerical: int
    fraction: float
    wilson_lo: float
    wilson_hi: float
    mean_sigma_hat: float

    def row(self) -> tuple:
        return (self.scenario_id, self.paths, self.survived, self.fraction, self.wilson_lo, self.wilson_hi, self.mean_sigma_hat)


SUMMARY_COLUMNS = ("scenario_id", "paths", "survived", "fraction", "wilson_lo", "wilson_hi", "mean_sigma_hat")


def summarize(scenario_id: int, reports: Sequence[RunReport]) -> SurvivalSummary:
    n = len(reports)
    survived = sum(r.survived for r in reports)
    numerical = sum(r.reason == "numerical" for r in reports)
    lo, hi = wilson_interval(survived, n)
    sig = [r.sigma_hat for r in reports if not r.survived]
    return SurvivalSummary(scenario_id, n, survived, numerical, survived / n, lo, hi,
                           float(np.mean(sig)) if sig else math.inf)


def survival_trend_ok(summaries: Sequence[SurvivalSummary]) -> bool:
    """Fractions nonincreasing, where an increase is tolerated if the Wilson intervals overlap."""
    for a, b in zip(summaries, summaries[1:]):
        if b.fraction > a.fraction and b.wilson_lo > a.wilson_hi:
            return False
    return True


def survival_experiment(
    scenarios: Sequence[Scenario],
    paths: int,
    runner: Callable[[Scenario, int], RunReport],
    map_fn: Callable = map,
) -> list[SurvivalSummary]:
    """Run ``paths`` paths per scenario and summarise survival past the horizon.

    ``runner(scenario, path)`` integrates one path; ``map_fn`` may be a
    parallel map. Scenarios must be ordered by (scale, M1).
    """
    for a, b in zip(scenarios, scenarios[1:]):
        if b.scale < a.scale or b.M1 < a.M1:
            raise ValueError("scenarios must be ordered by data size (scale, M1)")
    out = []
    for i, sc in enumerate(scenarios):
        reports = list(map_fn(lambda r, sc=sc: runner(sc, r), range(paths)))
        out.append(summarize(i, reports))
    return out


# ---------------------------------------------------------------------------
# regularity proxy


def shell_energies(f: TorusField) -> tuple[np.ndarray, np.ndarray]:
    """Energy in integer shells ``s <= |k| < s + 1`` for ``s = 1 .. n/2 - 1``."""
    g = f.grid
    e = g.hermitian_weights * np.sum(np.abs(f.coeffs) ** 2, axis=0)
    shell = np.floor(g.k_abs + 1e-9).astype(int)
    shells = np.arange(1, g.n // 2)
    energy = np.bincount(shell.ravel(), weights=e.ravel(), minlength=g.n)[shells]
    return shells, energy


def regularity_proxy(f: TorusField, rel_threshold: float = 1e-24) -> Optional[float]:
    """Least-squares slope of log shell energy against log |k|; None below three shells."""
    k, e = shell_energies(f)
    total = e.sum()
    if total <= 0:
        return None
    keep = e > rel_threshold * total
    if keep.sum() < 3:
        return None
    slope, _ = np.polyfit(np.log(k[keep]), np.log(e[keep]), 1)
    return float(slope)
