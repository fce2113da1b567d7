"""Experiment orchestration: path dispatch, CSV persistence and hashed manifests."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .config import ConfigError, ExperimentConfig, dump_toml
from .diagnostics import (
    PATH_COLUMNS,
    SUMMARY_COLUMNS,
    Monitor,
    MonitorSpec,
    RunReport,
    summarize,
    survival_trend_ok,
)
from .exponents import scan_region
from .noise import constant_basis
from .reactions import ReactionModel, scalar_power
from .solver import DiffusionSpec, Simulator, SolverConfig, random_linear_scalar, run_linear_scalar
from .torus import TorusField, TorusGrid, write_snapshot

MODES = ("simulate", "montecarlo", "convergence", "maxprinciple", "scan-region")
REPORT_COLUMNS = (
    "scenario_id", "path", "sigma_hat", "reason", "min_u", "mass_drift",
    "sup_Lzeta1", "sup_besov_beta0", "running_integral", "weighted_norm",
)


@dataclass
class ExperimentResult:
    mode: str
    config: dict
    reports: list = field(default_factory=list)
    summaries: list = field(default_factory=list)
    files: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def exit_code(self) -> int:
        return 3 if any(getattr(r, "reason", "") == "numerical" for r in self.reports) else 0


def fmt(x) -> str:
    """Round-trip text for CSV cells; floats use their shortest repr."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, files: Sequence[Path]) -> Path:
    """``sha256sum``-compatible manifest of every output file."""
    lines = [f"{sha256_file(p)}  {p.relative_to(out).as_posix()}" for p in sorted(files)]
    man = out / "manifest.sha256"
    man.write_text("\n".join(lines) + "\n")
    return man


def parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    """Order-preserving map, in a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# ---------------------------------------------------------------------------
# per-path workers (module level so that they pickle)

_SIM_CACHE: dict = {}


def _with_source(model: ReactionModel, M1: float) -> ReactionModel:
    """Add the constant source ``M1`` to every component of ``f``."""
    if not M1:
        return model
    base = model.f
    return dataclasses.replace(model, f=lambda y: base(y) + M1, trivial_f=False,
                               M1=(model.M1 or 0.0) + abs(M1))


def _simulator(echo_key: str, echo: dict, M1: float) -> Simulator:
    key = (echo_key, M1)
    sim = _SIM_CACHE.get(key)
    if sim is None:
        cfg = ExperimentConfig(echo)
        grid = cfg.grid()
        model = _with_source(cfg.model(), M1)
        sim = Simulator(grid, model, cfg.diffusion(model.ell), cfg.solver(), cfg.basis(grid))
        _SIM_CACHE.clear()
        _SIM_CACHE[key] = sim
    return sim


@dataclass(frozen=True)
class PathTask:
    echo_key: str
    echo: dict
    scenario_id: int
    scale: Optional[float]
    M1: float
    path: int
    out: Optional[str] = None


def run_path(task: PathTask) -> RunReport:
    sim = _simulator(task.echo_key, task.echo, task.M1)
    cfg = ExperimentConfig(task.echo)
    u0 = cfg.initial(sim.grid, sim.ell, task.scale)
    snapshot = None
    if task.out is not None and sim.config.snapshot_stride:
        def snapshot(state, out=Path(task.out), path=task.path):
            write_snapshot(out / f"snap_{path}_{state.step:06d}.csv", TorusField(sim.grid, state.u), state.t)
    monitor = Monitor(sim.grid, cfg.monitor_spec(sim.ell, sim.model), keep_final=False)
    return sim.run(u0, seed=cfg.seed, path=task.path, monitor=monitor, snapshot=snapshot)


def _report_row(sid: int, r: RunReport) -> tuple:
    return (sid, r.path, r.sigma_hat, r.reason, r.min_u, r.mass_drift, r.sup_zeta1, r.sup_besov,
            r.running_integral, r.weighted_norm)


# ---------------------------------------------------------------------------
# modes


def _simulate(cfg: ExperimentConfig, out: Optional[Path], paths: int, workers: int, res: ExperimentResult):
    key = dump_toml(cfg.echo)
    tasks = [PathTask(key, cfg.echo, 0, None, 0.0, r, str(out) if out else None) for r in range(paths)]
    reports = sorted(parallel_map(run_path, tasks, workers), key=lambda r: r.path)
    res.reports = reports
    if out is not None:
        for r in reports:
            res.files.append(write_csv(out / f"path_{r.path}.csv", PATH_COLUMNS, r.rows()))
        res.files.append(write_csv(out / "report.csv", REPORT_COLUMNS, (_report_row(0, r) for r in reports)))
        res.files += sorted(out.glob("snap_*.csv"))
    res.extra["min_u"] = min(r.min_u for r in reports)


def _montecarlo(cfg: ExperimentConfig, out: Optional[Path], paths: int, workers: int, res: ExperimentResult):
    mc = cfg.section("montecarlo")
    scales = list(mc["scales"]) or [cfg.section("initial")["scale"]]
    M1s = list(mc["M1"]) or [0.0] * len(scales)
    if len(M1s) != len(scales):
        raise ConfigError("montecarlo.M1 must have one entry per scale")
    for a, b in zip(zip(scales, M1s), zip(scales[1:], M1s[1:])):
        if b[0] < a[0] or b[1] < a[1]:
            raise ConfigError("montecarlo scenarios must be ordered by (scale, M1)")
    key = dump_toml(cfg.echo)
    tasks = [PathTask(key, cfg.echo, i, float(s), float(m), r)
             for i, (s, m) in enumerate(zip(scales, M1s)) for r in range(paths)]
    reports = parallel_map(run_path, tasks, workers)
    by_sid: dict[int, list] = {}
    for t, r in zip(tasks, reports):
        by_sid.setdefault(t.scenario_id, []).append(r)
    summaries = [summarize(i, sorted(by_sid[i], key=lambda r: r.path)) for i in sorted(by_sid)]
    res.reports = [r for i in sorted(by_sid) for r in sorted(by_sid[i], key=lambda r: r.path)]
    res.summaries = summaries
    res.extra["trend_ok"] = survival_trend_ok(summaries)
    if out is not None:
        rows = [_report_row(i, r) for i in sorted(by_sid) for r in sorted(by_sid[i], key=lambda r: r.path)]
        res.files.append(write_csv(out / "report.csv", REPORT_COLUMNS, rows))
        res.files.append(write_csv(out / "summary.csv", SUMMARY_COLUMNS, (s.row() for s in summaries)))


@dataclass(frozen=True)
class ConvergenceTask:
    n: int
    nu: float
    sigma: float
    T: float
    dts: tuple
    seed: int
    path: int


def convergence_path(task: ConvergenceTask) -> list[float]:
    """L2 errors of constant-b Stratonovich transport at each dt, on one Brownian path."""
    g = TorusGrid(2, task.n)
    x = g.coords[0]
    u0 = np.sin(2 * np.pi * x)
    fine = min(task.dts)
    basis = constant_basis(g, [[task.sigma, 0.0]])
    heat = scalar_power(3, sign=0.0)
    errs = []
    w = None
    for dt in task.dts:
        sub = int(round(dt / fine))
        if not math.isclose(sub * fine, dt, rel_tol=1e-9):
            raise ConfigError("convergence dts must be integer multiples of the smallest dt")
        cfg = SolverConfig(dt=dt, T=task.T, substeps=sub)
        sim = Simulator(g, heat, DiffusionSpec((task.nu,)), cfg, basis)
        rep = sim.run(u0, seed=task.seed, path=task.path, monitor=Monitor(g, _QUIET))
        if w is None:
            drv = sim.driver(task.seed)
            w = sum(drv.increments(task.path, m)[0] for m in range(cfg.n_steps))
        exact = math.exp(-4 * np.pi**2 * task.nu * task.T) * np.sin(2 * np.pi * (x + task.sigma * w))
        errs.append(float(np.sqrt(np.mean((rep.final[0] - exact) ** 2))))
    return errs


_QUIET = MonitorSpec(norms=False)


def strong_errors(per_path: Sequence[Sequence[float]]) -> np.ndarray:
    """Root-mean-square over paths of the pathwise L2 errors."""
    return np.sqrt(np.mean(np.asarray(per_path) ** 2, axis=0))


def fitted_slope(dts: Sequence[float], errors: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(dts), np.log(errors), 1)
    return float(slope)


def _convergence(cfg: ExperimentConfig, out: Optional[Path], paths: int, workers: int, res: ExperimentResult):
    conv = cfg.section("convergence")
    grid = cfg.grid()
    if grid.d != 2:
        raise ConfigError("convergence mode uses the two-dimensional transport scenario")
    nu = float(cfg.section("diffusion")["nu"][0])
    T = cfg.section("solver")["T"]
    if T is None:
        raise ConfigError("solver.T is required")
    dts = tuple(sorted((float(v) for v in conv["dts"]), reverse=True))
    tasks = [ConvergenceTask(grid.n, nu, float(conv["sigma"]), float(T), dts, cfg.seed, r) for r in range(paths)]
    per_path = parallel_map(convergence_path, tasks, workers)
    errs = strong_errors(per_path)
    slope = fitted_slope(dts, errs)
    res.extra.update(dts=dts, errors=errs.tolist(), slope=slope, per_path=per_path)
    if out is not None:
        res.files.append(write_csv(out / "convergence.csv", ("dt", "strong_L2_error"), zip(dts, errs)))
        res.files.append(write_csv(out / "convergence_fit.csv", ("slope",), [(slope,)]))


@dataclass(frozen=True)
class MaxPrincipleTask:
    n: int
    d: int
    gamma: float
    n_noise: int
    strength: float
    dt: float
    T: float
    spatial: str
    seed: int
    path: int


def maxprinciple_path(task: MaxPrincipleTask) -> tuple[float, float, float]:
    """``(min u, ||u0||_inf, margin)`` for one random coefficient draw and noise path."""
    g = TorusGrid(task.d, task.n)
    spec = random_linear_scalar(g, task.gamma, np.random.default_rng([task.seed, task.path]),
                                n_noise=task.n_noise, strength=task.strength)
    rep = run_linear_scalar(spec, SolverConfig(dt=task.dt, T=task.T, spatial=task.spatial),
                            seed=task.seed, path=task.path, monitor=Monitor(g, _QUIET, keep_final=False))
    return rep.min_u, float(np.max(np.abs(spec.u0))), spec.margin()


def _maxprinciple(cfg: ExperimentConfig, out: Optional[Path], paths: int, workers: int, res: ExperimentResult):
    mp = cfg.section("maxprinciple")
    grid = cfg.grid()
    sol = cfg.solver()
    tasks = [MaxPrincipleTask(grid.n, grid.d, float(mp["gamma"]), int(mp["n_noise"]), float(mp["strength"]),
                              sol.dt, sol.T, mp["spatial"], cfg.seed, r) for r in range(paths)]
    rows = parallel_map(maxprinciple_path, tasks, workers)
    worst = min(m / s for m, s, _ in rows)
    res.extra.update(relative_min=worst, rows=rows)
    if out is not None:
        res.files.append(write_csv(out / "maxprinciple.csv", ("path", "min_u", "u0_sup", "margin"),
                                   ((r,) + row for r, row in enumerate(rows))))


def _scan(cfg: ExperimentConfig, out: Optional[Path], res: ExperimentResult):
    sc = cfg.section("scan")
    rows = scan_region(int(sc["d"]), sc["h"], sc["delta"], sc["p"], int(sc["samples"]))
    res.extra["rows"] = rows
    if out is not None:
        def cell(v):
            return "" if v is None else f"{v}"

        res.files.append(write_csv(
            out / "scan.csv", ("q", "q_float", "p_min", "kappa_c"),
            ((cell(q), float(q), cell(pm), cell(kc)) for q, pm, kc in rows),
        ))


def run_experiment(
    cfg: ExperimentConfig,
    mode: str,
    out: Optional[Path] = None,
    paths: Optional[int] = None,
    workers: int = 1,
) -> ExperimentResult:
    """Execute one mode, write its outputs and a manifest under ``out`` (if given)."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    start = time.perf_counter()
    paths = int(cfg.section("montecarlo")["paths"] if paths is None else paths)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
    res = ExperimentResult(mode, cfg.echo)
    try:
        if mode == "simulate":
            _simulate(cfg, out, paths, workers, res)
        elif mode == "montecarlo":
            _montecarlo(cfg, out, paths, workers, res)
        elif mode == "convergence":
            _convergence(cfg, out, paths, workers, res)
        elif mode == "maxprinciple":
            _maxprinciple(cfg, out, paths, workers, res)
        else:
            _scan(cfg, out, res)
    finally:
        res.elapsed = time.perf_counter() - start
        if out is not None:
            echo = out / "config.toml"
            echo.write_text(dump_toml(cfg.echo))
            res.files.append(echo)
            write_manifest(out, res.files)
    return res
