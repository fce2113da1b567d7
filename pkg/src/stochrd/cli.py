"""Command-line interface.

Exit codes: 0 ok, 1 precondition failure, 2 config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, PreconditionError, load_config
from .exponents import (
    DomainError,
    ExponentParams,
    QuadraticSurd,
    as_fraction,
    check_admissible,
    fujita_exponent,
    scan_region,
)
from .experiments import run_experiment
from .solver import SolverError

EXIT_OK, EXIT_PRECONDITION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", type=Path, default=default, help="TOML experiment configuration")
    p.add_argument("--seed", type=int, default=default, help="master seed (overrides montecarlo.seed)")
    p.add_argument("--workers", type=int, default=default, help="worker processes for path dispatch")
    p.add_argument("--out", type=Path, default=default, help="output directory (overrides output.directory)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochrd", description="Stochastic reaction-diffusion toolkit on the torus.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = add("check-exponents", "exact admissibility report for (d, p, q, h, delta)")
    for key in ("d", "p", "q", "h", "delta", "kappa"):
        p.add_argument(f"--{key}", type=str, default=None)
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = add("fujita", "stochastic Fujita exponent h_d")
    p.add_argument("d", type=int, nargs="+")

    p = add("scan-region", "sample the admissible q-interval for fixed (d, h, delta)")
    for key in ("d", "h", "delta", "p", "samples"):
        p.add_argument(f"--{key}", type=str, default=None)

    for name, help_ in (
        ("simulate", "integrate paths and write per-path monitor series"),
        ("montecarlo", "survival statistics over scenarios of data size"),
        ("convergence", "strong error of constant-b transport against the shifted profile"),
        ("maxprinciple", "minimum of linear scalar SPDEs with random coefficients"),
    ):
        p = add(name, help_)
        p.add_argument("--paths", type=int, default=None)
        if name == "simulate":
            p.add_argument("--snapshot-every", type=int, default=None)
    return parser


def _fraction_text(x) -> str:
    if isinstance(x, QuadraticSurd):
        return f"{x} ~ {float(x):.6f}"
    if isinstance(x, Fraction):
        return str(x) if x.denominator == 1 else f"{x} ~ {float(x):.6f}"
    return str(x)


def _cmd_check(args, cfg_exponents: Optional[dict]) -> int:
    src = dict(cfg_exponents or {})
    for key in ("d", "p", "q", "h", "delta", "kappa"):
        v = getattr(args, key)
        if v is not None:
            src[key] = v
    missing = [k for k in ("d", "p", "q", "h", "delta") if src.get(k) is None]
    if missing:
        print(f"error: missing exponents {missing}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        params = ExponentParams(
            d=int(src["d"]), p=as_fraction(src["p"]), q=as_fraction(src["q"]), h=as_fraction(src["h"]),
            delta=as_fraction(src["delta"]), ell=int(src.get("ell", args.ell)),
            kappa=None if src.get("kappa") is None else as_fraction(src["kappa"]),
        )
    except (ValueError, TypeError, DomainError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    rep = check_admissible(params)
    if args.json:
        print(json.dumps({
            "admissible": rep.admissible,
            "violated": [v.name for v in rep.violated],
            "kappa_critical": None if rep.kappa_critical is None else str(rep.kappa_critical),
            "trace_smoothness": str(rep.trace_smoothness),
            "q_range": [str(v) if v is not None else None for v in rep.q_range],
        }))
    else:
        print(f"admissible: {'yes' if rep.admissible else 'no'}")
        for ineq in rep.checked:
            mark = "ok " if ineq.holds() else "FAIL"
            rhs = "inf" if ineq.rhs is None else _fraction_text(ineq.rhs)
            print(f"  [{mark}] {ineq.name}: {_fraction_text(ineq.lhs)} {ineq.relation} {rhs}")
        lo, hi = rep.q_range
        print(f"q range: ({_fraction_text(lo)}, {'inf' if hi is None else _fraction_text(hi)})")
        if rep.kappa_critical is not None:
            print(f"kappa_c: {_fraction_text(rep.kappa_critical)}")
        print(f"trace smoothness d/q - 2/(h-1): {_fraction_text(rep.trace_smoothness)}")
    return EXIT_OK if rep.admissible else EXIT_PRECONDITION


def _cmd_fujita(args) -> int:
    for d in args.d:
        try:
            print(f"d={d}: h_d = {_fraction_text(fujita_exponent(d))}")
        except (ValueError, DomainError) as err:
            print(f"error: {err}", file=sys.stderr)
            return EXIT_CONFIG
    return EXIT_OK


def _cmd_scan_without_config(args) -> int:
    vals = dict(d="2", h="3", delta="3/2", p="4", samples="50")
    for k in vals:
        if getattr(args, k) is not None:
            vals[k] = getattr(args, k)
    rows = scan_region(int(vals["d"]), as_fraction(vals["h"]), as_fraction(vals["delta"]), as_fraction(vals["p"]),
                       int(vals["samples"]))
    print("q,p_min,kappa_c")
    for q, pm, kc in rows:
        print(f"{float(q):.6g},{'' if pm is None else f'{float(pm):.6g}'},{'' if kc is None else f'{float(kc):.6g}'}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cmd = args.command
    try:
        if cmd == "fujita":
            return _cmd_fujita(args)
        if cmd == "check-exponents":
            ex = None
            if args.config is not None:
                ex = load_config(args.config, need_solver=False).section("monitors")["exponents"]
            return _cmd_check(args, ex)
        if cmd == "scan-region" and args.config is None:
            return _cmd_scan_without_config(args)

        if args.config is None:
            raise ConfigError(f"{cmd} needs --config")
        need_solver = cmd in ("simulate", "montecarlo")
        cfg = load_config(args.config, need_solver=need_solver)
        echo = cfg.echo
        if args.seed is not None:
            echo["montecarlo"]["seed"] = args.seed
        if cmd == "scan-region":
            for k in ("d", "h", "delta", "p", "samples"):
                if getattr(args, k) is not None:
                    echo["scan"][k] = getattr(args, k)
        if getattr(args, "snapshot_every", None) is not None:
            echo["output"]["snapshot_every"] = args.snapshot_every
        out = args.out if args.out is not None else Path(echo["output"]["directory"])
        workers = args.workers if args.workers is not None else int(echo["montecarlo"]["workers"])
        res = run_experiment(cfg, cmd, out=out, paths=getattr(args, "paths", None), workers=max(1, workers))
        _print_result(res, out)
        return res.exit_code
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, SolverError, DomainError) as err:
        print(f"precondition failed: {err}", file=sys.stderr)
        return EXIT_PRECONDITION


def _print_result(res, out: Path):
    if res.mode == "simulate":
        died = [r for r in res.reports if not r.survived]
        print(f"{len(res.reports)} paths, {len(died)} died; min u = {res.extra['min_u']:.6g}")
    elif res.mode == "montecarlo":
        for s in res.summaries:
            print(f"scenario {s.scenario_id}: survived {s.survived}/{s.paths} "
                  f"({s.fraction:.3f}, 95% [{s.wilson_lo:.3f}, {s.wilson_hi:.3f}])")
        print(f"trend nonincreasing: {res.extra['trend_ok']}")
    elif res.mode == "convergence":
        for dt, e in zip(res.extra["dts"], res.extra["errors"]):
            print(f"dt={dt:.3g}  strong L2 error={e:.4g}")
        print(f"fitted slope: {res.extra['slope']:.3f}")
    elif res.mode == "maxprinciple":
        print(f"min u / ||u0||_inf over all paths: {res.extra['relative_min']:.3g}")
    else:
        print(f"{len(res.extra['rows'])} rows")
    print(f"outputs in {out} ({len(res.files)} files, manifest.sha256); {res.elapsed:.1f} s")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
