"""Declarative experiment configuration: TOML loading, defaults and fail-fast validation."""
from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .diagnostics import MonitorSpec
from .exponents import DomainError, ExponentParams, check_admissible, check_d1_conditions
from .noise import NoiseBasis, check_parabolicity, constant_basis, empty_basis, half_sum_bbT, kraichnan_basis
from .reactions import (
    ReactionModel,
    Stoichiometry,
    brusselator,
    check_growth,
    check_positivity_conditions,
    lotka_volterra,
    mass_action,
    scalar_power,
)
from .solver import DiffusionSpec, SolverConfig
from .torus import TorusGrid


class ConfigError(ValueError):
    """Malformed configuration: unknown keys, bad types or values (exit code 2)."""


class PreconditionError(ValueError):
    """A validator rejected an otherwise well-formed configuration (exit code 1)."""

    def __init__(self, check: str, message: str, report=None):
        self.check = check
        self.report = report
        super().__init__(f"{check}: {message}")


# Every section with its keys and default values. ``None`` marks "unset".
DEFAULTS: dict[str, dict[str, Any]] = {
    "grid": {"d": 2, "n": 64},
    "model": {
        "kind": "scalar_power",
        # scalar_power
        "h": None,
        "sign": 1.0,
        "e": [],
        "theta": [],
        # mass_action
        "q": None,
        "p": None,
        "R_plus": 1.0,
        "R_minus": 1.0,
        # lotka_volterra
        "lam1": 1.0,
        "lam2": 1.0,
        "a11": 1.0,
        "a12": 1.0,
        "a21": 1.0,
        "a22": 1.0,
        # brusselator
        "alpha": 1.0,
        "beta": 2.0,
        # declared growth constants
        "M1": None,
        "M2": None,
        "box_size": 10.0,
        "samples": 10_000,
    },
    "noise": {"kind": "none", "k_max": 2, "slope": 1.0, "amplitude": 0.0, "vectors": []},
    "diffusion": {"nu": [0.01], "stratonovich": True},
    "initial": {"kind": "constant", "scale": 1.0, "k": [1], "width": 0.1, "centers": []},
    "solver": {
        "dt": None,
        "T": None,
        "scheme": "exponential",
        "spatial": "spectral",
        "blowup_threshold": 1e6,
        "milstein": True,
        "monitor_stride": 1,
        "substeps": 1,
    },
    "monitors": {
        "p0": None,
        "q0": None,
        "h0": None,
        "delta0": None,
        "zeta1": None,
        "alpha": None,
        "exponents": None,
        "kappa": 0.0,
        "norms": True,
        "positivity": False,
    },
    "montecarlo": {"paths": 1, "seed": 0, "scales": [], "M1": [], "workers": 1},
    "convergence": {"dts": [4e-4, 2e-4, 1e-4], "sigma": 1.0},
    "maxprinciple": {"gamma": 0.2, "n_noise": 2, "strength": 0.3, "spatial": "fd"},
    "scan": {"d": 2, "h": 3, "delta": 1.5, "p": 4, "samples": 50},
    "output": {"directory": "out", "snapshot_every": 0},
}

MODEL_KINDS = ("scalar_power", "mass_action", "lotka_volterra", "brusselator")
NOISE_KINDS = ("none", "kraichnan", "constant")
INITIAL_KINDS = ("constant", "cosine", "sine", "bumps")


@dataclass
class ExperimentConfig:
    """Resolved configuration; ``echo`` is the full key/value document with defaults."""

    echo: dict
    source: Optional[str] = None
    checks: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.echo[name]

    @property
    def seed(self) -> int:
        return int(self.echo["montecarlo"]["seed"])

    # -- builders ------------------------------------------------------------

    def grid(self) -> TorusGrid:
        g = self.echo["grid"]
        return TorusGrid(int(g["d"]), int(g["n"]))

    def model(self) -> ReactionModel:
        m = self.echo["model"]
        declared = {k: m[k] for k in ("M1", "M2") if m[k] is not None}
        kind = m["kind"]
        if kind == "scalar_power":
            h = 3.0 if m["h"] is None else float(m["h"])
            return scalar_power(h, float(m["sign"]), e=m["e"], theta=m["theta"], **declared)
        if kind == "mass_action":
            if m["q"] is None or m["p"] is None:
                raise ConfigError("mass_action needs model.q and model.p")
            st = Stoichiometry(tuple(m["q"]), tuple(m["p"]), float(m["R_plus"]), float(m["R_minus"]))
            return mass_action(st, declared.get("M1"), declared.get("M2"))
        if kind == "lotka_volterra":
            keys = ("lam1", "lam2", "a11", "a12", "a21", "a22")
            return lotka_volterra(**{k: float(m[k]) for k in keys}, **declared)
        return brusselator(float(m["alpha"]), float(m["beta"]), **declared)

    def basis(self, grid: Optional[TorusGrid] = None) -> NoiseBasis:
        grid = grid or self.grid()
        nz = self.echo["noise"]
        if nz["kind"] == "none":
            return empty_basis(grid)
        if nz["kind"] == "kraichnan":
            return kraichnan_basis(grid, int(nz["k_max"]), float(nz["slope"]), float(nz["amplitude"]))
        vectors = nz["vectors"]
        if not vectors:
            return empty_basis(grid)
        return constant_basis(grid, vectors)

    def diffusion(self, ell: int) -> DiffusionSpec:
        nu = [float(v) for v in self.echo["diffusion"]["nu"]]
        if len(nu) == 1:
            nu = nu * ell
        if len(nu) != ell:
            raise ConfigError(f"diffusion.nu has {len(nu)} entries but the model has {ell} components")
        return DiffusionSpec(tuple(nu), stratonovich=bool(self.echo["diffusion"]["stratonovich"]))

    def solver(self, **override) -> SolverConfig:
        s = dict(self.echo["solver"])
        s.update(override)
        if s["dt"] is None or s["T"] is None:
            raise ConfigError("solver.dt and solver.T are required")
        return SolverConfig(
            dt=float(s["dt"]),
            T=float(s["T"]),
            scheme=s["scheme"],
            spatial=s["spatial"],
            blowup_threshold=float(s["blowup_threshold"]),
            milstein=bool(s["milstein"]),
            monitor_stride=int(s["monitor_stride"]),
            snapshot_stride=int(self.echo["output"]["snapshot_every"]),
            substeps=int(s["substeps"]),
        )

    def initial(self, grid: TorusGrid, ell: int, scale: Optional[float] = None) -> np.ndarray:
        """Initial data ``(ell, ...)`` described by the ``initial`` section."""
        ini = self.echo["initial"]
        c = float(ini["scale"] if scale is None else scale)
        x = grid.coords
        ks = list(ini["k"]) + [0] * grid.d
        phase = 2 * np.pi * sum(ks[j] * x[j] for j in range(grid.d))
        kind = ini["kind"]
        if kind == "constant":
            one = np.ones(grid.shape)
        elif kind == "cosine":
            one = 1 + 0.1 * np.cos(phase)
        elif kind == "sine":
            one = np.sin(phase)
        else:
            centers = ini["centers"] or [[0.5] * grid.d]
            w = float(ini["width"])
            bumps = []
            for cen in centers:
                r2 = sum(np.sin(np.pi * (x[j] - cen[j])) ** 2 for j in range(grid.d))
                bumps.append(np.exp(-r2 / w))
            bumps += [np.zeros(grid.shape)] * max(0, ell - len(bumps))
            return c * np.stack(bumps[:ell])
        return c * np.stack([one] * ell)

    def monitor_spec(self, ell: int, model: Optional[ReactionModel] = None) -> MonitorSpec:
        mon = self.echo["monitors"]
        alpha = mon["alpha"]
        if alpha is None:
            mv = model.mass_vector if model is not None else None
            alpha = list(mv) if mv is not None else [1.0] * ell
        kw = dict(alpha=tuple(float(a) for a in alpha), kappa=float(mon["kappa"]), norms=bool(mon["norms"]))
        ex = mon["exponents"]
        if ex is not None:
            kw.update(p=float(ex["p"]), q=float(ex["q"]), delta=float(ex["delta"]))
        if mon["p0"] is not None:
            return MonitorSpec.from_exponents(
                mon["p0"], mon["q0"], mon["h0"], self.grid().d, ell=ell, zeta1=mon["zeta1"], delta0=mon["delta0"], **kw
            )
        return MonitorSpec(**kw)


# ---------------------------------------------------------------------------
# loading


def _merge(raw: dict) -> dict:
    unknown = []
    for sec, body in raw.items():
        if sec not in DEFAULTS:
            unknown.append(sec)
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"section [{sec}] must be a table")
        unknown += [f"{sec}.{k}" for k in body if k not in DEFAULTS[sec]]
    if unknown:
        raise ConfigError("unknown keys: " + ", ".join(sorted(unknown)))
    echo = copy.deepcopy(DEFAULTS)
    for sec, body in raw.items():
        echo[sec].update(copy.deepcopy(body))
    return echo


def _check_values(echo: dict):
    g = echo["grid"]
    if g["d"] not in (1, 2):
        raise ConfigError("grid.d must be 1 or 2")
    n = g["n"]
    if not (isinstance(n, int) and n >= 8 and n & (n - 1) == 0):
        raise ConfigError("grid.n must be a power of two >= 8")
    if echo["model"]["kind"] not in MODEL_KINDS:
        raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
    if echo["noise"]["kind"] not in NOISE_KINDS:
        raise ConfigError(f"noise.kind must be one of {NOISE_KINDS}")
    if echo["initial"]["kind"] not in INITIAL_KINDS:
        raise ConfigError(f"initial.kind must be one of {INITIAL_KINDS}")
    if int(echo["montecarlo"]["paths"]) < 1:
        raise ConfigError("montecarlo.paths must be positive")
    ex = echo["monitors"]["exponents"]
    if ex is not None:
        missing = {"p", "q", "h", "delta"} - set(ex)
        extra = set(ex) - {"p", "q", "h", "delta", "kappa", "ell", "d"}
        if missing or extra:
            raise ConfigError(f"monitors.exponents needs p, q, h, delta (missing {sorted(missing)}, unknown {sorted(extra)})")


def _check_exponents(ex: dict, d: int):
    """Admissibility of declared exponents (the d = 1 conditions when d = 1)."""
    try:
        params = ExponentParams(
            d=d if ex.get("d") is None else ex["d"], p=ex["p"], q=ex["q"], h=ex["h"],
            delta=ex["delta"], ell=ex.get("ell", 1), kappa=ex.get("kappa"),
        )
    except (ValueError, DomainError) as err:
        raise ConfigError(f"monitors.exponents: {err}") from None
    if params.d == 1:
        try:
            rep = check_d1_conditions(params.p, params.q, params.h, params.delta, params.kappa or 0)
        except DomainError as err:
            raise PreconditionError("admissibility", str(err)) from None
        if not rep.satisfied:
            raise PreconditionError("admissibility", f"declared exponents violate the d = 1 bound (case {rep.case})", rep)
        return rep
    rep = check_admissible(params)
    if not rep.admissible:
        names = "; ".join(v.name for v in rep.violated)
        raise PreconditionError("admissibility", f"declared exponents violate {names}", rep)
    return rep


def validate(cfg: ExperimentConfig, need_solver: bool = True) -> dict:
    """Run every applicable validator; raise :class:`PreconditionError` on the first failure."""
    checks = {}
    echo = cfg.echo
    ex = echo["monitors"]["exponents"]
    if ex is not None:
        checks["admissibility"] = _check_exponents(ex, cfg.grid().d)
    if not need_solver:
        return checks

    try:
        grid = cfg.grid()
        model = cfg.model()
        basis = cfg.basis(grid)
        diff = cfg.diffusion(model.ell)
        cfg.solver()
    except (ValueError, TypeError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from None

    d = grid.d
    worst = None
    for i, nu in enumerate(diff.nu):
        a = nu * np.eye(d)
        if diff.stratonovich and basis.n_modes:
            a = a[(...,) + (None,) * d] + half_sum_bbT(basis)
        rep = check_parabolicity(a, basis, grid=grid)
        if worst is None or rep.nu_min < worst.nu_min:
            worst = rep
        if not rep.admissible:
            raise PreconditionError(
                "ellipticity",
                f"component {i}: a - (1/2) sum b b^T has smallest eigenvalue {rep.nu_min:.3g} <= 0 "
                f"at grid index {rep.location}",
                rep,
            )
    checks["parabolicity"] = worst

    m = echo["model"]
    if model.M1 is not None and model.M2 is not None:
        rep = check_growth(model, float(m["box_size"]), int(m["samples"]))
        if not rep.passed:
            raise PreconditionError(
                "growth", f"declared (M1, M2) = ({model.M1}, {model.M2}) violated at y = {rep.witness}", rep
            )
        checks["growth"] = rep

    if echo["monitors"]["positivity"]:
        rep = check_positivity_conditions(model, float(m["box_size"]), int(m["samples"]))
        if not rep.passed:
            name, comp, y, val = rep.failures[0]
            raise PreconditionError("positivity", f"{name} fails for component {comp} at y = {y} (value {val:.3g})", rep)
        u0 = cfg.initial(grid, model.ell)
        if np.any(u0 < 0):
            raise PreconditionError("positivity", "initial data must be nonnegative")
        checks["positivity"] = rep
    return checks


def load_config(source: Union[str, Path, dict], need_solver: bool = True) -> ExperimentConfig:
    """Parse a TOML file (or an already parsed dict), fill defaults and validate."""
    if isinstance(source, dict):
        raw, name = source, None
    else:
        path = Path(source)
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"cannot parse {path}: {err}") from None
        name = str(path)
    echo = _merge(raw)
    _check_values(echo)
    cfg = ExperimentConfig(echo, name)
    cfg.checks = validate(cfg, need_solver)
    return cfg


def dump_toml(echo: dict) -> str:
    """Render a config echo as TOML (scalars, lists and one level of inline tables)."""

    def value(v):
        if v is None:
            return None
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, float):
            if math.isinf(v):
                return "inf" if v > 0 else "-inf"
            return repr(v)
        if isinstance(v, str):
            return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if isinstance(v, dict):
            items = [f"{k} = {value(x)}" for k, x in v.items() if x is not None]
            return "{ " + ", ".join(items) + " }"
        return "[" + ", ".join(value(x) for x in v) + "]"

    lines = []
    for sec, body in echo.items():
        lines.append(f"[{sec}]")
        for k, v in body.items():
            text = value(v)
            if text is not None:
                lines.append(f"{k} = {text}")
        lines.append("")
    return "\n".join(lines)
