"""Command-line experiment runner.

Exit codes: 0 when every checked invariant holds, 1 when one fails (or the
run blows up), 2 for usage and configuration errors.  Failures print a JSON
object ``{"error": ..., "message": ..., ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, format_config, load_config, parse_config
from .diagnostics import (
    decay_probe,
    half_life,
    lemma2_property_check,
    stability_experiment,
    verify_energy,
)
from .errors import ConfigError, EmptyLedger, GridError, InvariantViolation, ModeCountError, NonFiniteState
from .integrator import init_random_divfree, run
from .ledger import EnergyLedger
from .nonlinearity import DampingParams
from .oracle import compare_with_oracles
from .snapshot import write_snapshot
from .spectral import l2_norm, make_grid

log = logging.getLogger("dampns")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(f"cannot serialise {type(x)}")


def _clean(x):
    """Replace non-finite floats (not valid JSON) by strings."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _load(args) -> RunConfig:
    if args.config is None:
        return parse_config("", args.override)
    return load_config(args.config, args.override)


def _out_dir(args, cfg: RunConfig | None) -> Path:
    if args.out is not None:
        out = Path(args.out)
    elif cfg is not None:
        out = Path(cfg["outputs"]["directory"])
    else:
        out = Path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _summary(out: Path, name: str, cfg: RunConfig | None, passed: bool, **payload) -> dict:
    body = {"command": name, "passed": bool(passed), "version": __version__}
    if cfg is not None:
        body["config"] = cfg.to_dict()
    body.update(payload)
    body = _clean(body)
    _write_json(out / f"{name}_summary.json", body)
    return body


def _write_table(path: Path, header, rows, cfg: RunConfig | None) -> None:
    with open(path, "w", newline="") as fh:
        if cfg is not None:
            fh.write("# config: " + json.dumps(_clean(cfg.to_dict()), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# -- subcommands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    grid = cfg.grid()
    p = cfg.sim_params()
    u0 = cfg.initial_field(grid)
    every = cfg["outputs"]["snapshot_every"]
    meta = cfg.to_dict()
    try:
        result = run(u0, p, snapshot_every=every)
    except NonFiniteState as exc:
        if exc.ledger is not None:
            exc.ledger.to_csv(out / "ledger.csv", meta=_clean(meta))
        raise
    result.ledger.to_csv(out / "ledger.csv", meta=_clean(meta))
    dtype = cfg["outputs"]["snapshot_dtype"]
    names = []
    for i, (t, u) in enumerate(result.snapshots):
        name = f"snapshot_{i:05d}.bin"
        write_snapshot(out / name, u, t, dtype=dtype, extra={"config": _clean(meta)})
        names.append(name)
    write_snapshot(out / "final.bin", result.final.field, result.final.time, dtype=dtype,
                   extra={"config": _clean(meta)})
    check = verify_energy(result.ledger, cfg["sim"]["energy_tol"])
    last = result.ledger[-1]
    e0 = result.ledger.initial_energy
    body = _summary(
        out, "simulate", cfg, check.passed,
        energy_check=check.to_dict(),
        final_time=last.t,
        final_energy=last.energy,
        energy_ratio=last.energy / e0 if e0 > 0 else 0.0,
        final_residual_rel=last.residual / e0 if e0 > 0 else 0.0,
        max_abs_residual_rel=result.ledger.max_abs_residual() / e0 if e0 > 0 else 0.0,
        saturation_count=last.saturation_count,
        snapshots=names,
    )
    print(json.dumps({k: body[k] for k in ("passed", "final_energy", "max_abs_residual_rel")}))
    return EXIT_OK if check.passed else EXIT_FAIL


def cmd_verify_energy(args) -> int:
    cfg = _load(args) if args.config else None
    tol = args.tol if args.tol is not None else (cfg["sim"]["energy_tol"] if cfg else 1e-4)
    path = Path(args.ledger)
    if not path.is_file():
        raise UsageError(f"ledger {path} not found")
    try:
        ledger = EnergyLedger.from_csv(path)
    except ValueError as exc:
        # a ledger that does not even parse fails verification
        _error("CorruptLedger", exc)
        return EXIT_FAIL
    check = verify_energy(ledger, tol)
    payload = {"command": "verify-energy", "ledger": str(args.ledger), "tol": tol, **check.to_dict()}
    if args.out is not None:
        out = _out_dir(args, cfg)
        _summary(out, "verify_energy", cfg, check.passed, ledger=str(args.ledger), tol=tol,
                 energy_check=check.to_dict())
    print(json.dumps(_clean(payload)))
    return EXIT_OK if check.passed else EXIT_FAIL


def _perturbation(cfg: RunConfig, u0):
    st = cfg["stability"]
    if st["delta_kind"] == "scale":
        return u0 * st["delta_rel"]
    grid = u0.grid
    return init_random_divfree(grid, st["delta_seed"], grid.trunc_radius, st["delta_rel"] * l2_norm(u0))


def cmd_stability(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    grid = cfg.grid()
    p = cfg.sim_params()
    u0 = cfg.initial_field(grid)
    delta = _perturbation(cfg, u0)
    report = stability_experiment(u0, delta, p)
    tol = cfg["stability"]["margin_tol"]
    passed = report.holds(tol)
    _write_table(out / "stability.csv", ("t", "w_norm_sq", "bound", "margin"), report.rows(), cfg)
    body = _summary(
        out, "stability", cfg, passed,
        rate=4.0 / (p.damping.a * p.damping.b) if p.damping.active else "inf",
        initial_w_norm_sq=report.initial,
        worst_margin=report.worst_margin(),
        worst_margin_rel=report.worst_margin() / report.initial if report.initial > 0 else 0.0,
        margin_tol=tol,
    )
    print(json.dumps({k: body[k] for k in ("passed", "initial_w_norm_sq", "worst_margin")}))
    return EXIT_OK if passed else EXIT_FAIL


DECAY_COLUMNS = ("t", "l2", "h_neg2", "w1_l2", "w2_l2", "lp_10_3", "damping_flux_l1", "k1", "k2",
                 "h_dot_3_5", "h_dot_1")


def cmd_decay(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    grid = cfg.grid()
    p = cfg.sim_params()
    u0 = cfg.initial_field(grid)
    result = run(u0, p, snapshot_every=p.output_every)
    result.ledger.to_csv(out / "ledger.csv", meta=_clean(cfg.to_dict()))
    kappa = cfg["decay"]["kappa"]
    report = decay_probe(result.snapshots, kappa, p.damping, check=False)
    _write_table(out / "decay.csv", DECAY_COLUMNS,
                 ([getattr(r, c) for c in DECAY_COLUMNS] for r in report.rows), cfg)
    checks = report.checks()
    h = report.column("h_neg2")
    checks["h_neg2_nonincreasing"] = all(b <= a * (1 + 1e-12) for a, b in zip(h, h[1:]))
    checks["k_split_additive"] = all(
        abs(r.k1 + r.k2 - r.damping_flux_l1) <= 1e-12 * max(1.0, r.damping_flux_l1) for r in report.rows
    )
    passed = all(checks.values())
    _summary(out, "decay", cfg, passed, kappa=kappa, checks=checks,
             max_split_defect=max(report.split_defects(), default=0.0),
             min_low_frequency_margin=min(report.low_frequency_margins(), default=0.0))
    print(json.dumps(_clean({"passed": passed, "checks": checks})))
    return EXIT_OK if passed else EXIT_FAIL


def _sweep_one(cfg: RunConfig, r: float, radius: float, out: Path):
    g = cfg["grid"]
    grid = make_grid(g["n_points"], g["box_scale"], radius)
    d = cfg["damping"]
    p = cfg.sim_params(damping=DampingParams(d["a"], d["b"], r))
    ic = cfg["initial"]
    if ic["kind"] == "random":
        cutoff = radius if ic["cutoff"] is None else min(ic["cutoff"], radius)
        u0 = init_random_divfree(grid, ic["seed"], cutoff, ic["amplitude"])
    else:
        u0 = cfg.initial_field(grid)
    result = run(u0, p)
    meta = _clean({**cfg.to_dict(), "run": {"r": r, "trunc_radius": radius}})
    result.ledger.to_csv(out / f"ledger_r{r:.6g}_R{radius:.6g}.csv", meta=meta)
    check = verify_energy(result.ledger, cfg["sim"]["energy_tol"])
    e0 = result.ledger.initial_energy
    return {
        "r": r,
        "trunc_radius": radius,
        "half_life": half_life(result.ledger),
        "final_energy_ratio": result.ledger[-1].energy / e0 if e0 > 0 else 0.0,
        "energy_check": check.passed,
    }


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    radii = cfg["sweep"]["trunc_radii"] or [cfg.grid().trunc_radius]
    jobs = [(r, radius) for r in cfg["sweep"]["r_values"] for radius in radii]
    with ThreadPoolExecutor(max_workers=max(1, min(len(jobs), args.workers))) as pool:
        rows = list(pool.map(lambda job: _sweep_one(cfg, job[0], job[1], out), jobs))
    cols = ("r", "trunc_radius", "half_life", "final_energy_ratio", "energy_check")
    _write_table(out / "sweep.csv", cols, ([row[c] for c in cols] for row in rows), cfg)
    passed = all(row["energy_check"] for row in rows)
    _summary(out, "sweep", cfg, passed, table=rows,
             note="half-lives are reported, not asserted")
    for row in rows:
        print(f"r={row['r']:.6g}  R={row['trunc_radius']:.6g}  half_life={row['half_life']:.6g}  "
              f"E/E0={row['final_energy_ratio']:.6g}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_lemma_check(args) -> int:
    cfg = _load(args) if args.config else None
    results = lemma2_property_check(args.samples, args.seed, args.radius, tol=args.tol)
    passed = all(r.passed for r in results)
    payload = {
        "samples": args.samples,
        "seed": args.seed,
        "radius": args.radius,
        "tol": args.tol,
        "cases": [r.to_dict() for r in results],
        "min_normalized_gap": min(r.min_normalized_gap for r in results),
    }
    if args.out is not None or cfg is not None:
        _summary(_out_dir(args, cfg), "lemma_check", cfg, passed, **payload)
    print(json.dumps(_clean({"passed": passed, "min_normalized_gap": payload["min_normalized_gap"]})))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_oracle_compare(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    grid = cfg.grid()
    p = cfg.sim_params()
    o = cfg["oracle"]
    try:
        cmp = compare_with_oracles(grid, p, range(o["seeds"]), o["amplitude"], o["oversample"], o["t_end"],
                                   endpoint_seeds=args.endpoint_seeds)
    except ModeCountError as exc:
        raise UsageError(str(exc)) from None
    result = cmp.to_dict()
    _summary(out, "oracle_compare", cfg, result.pop("passed"), **result)
    print(json.dumps(_clean(cmp.to_dict())))
    return EXIT_OK if cmp.passed else EXIT_FAIL


def cmd_show_config(args) -> int:
    cfg = _load(args)
    sys.stdout.write(format_config(cfg))
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dampns", description="Damped Navier-Stokes spectral experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run configuration file")
        p.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config entry (repeatable)")
        p.add_argument("--out", default=None, help="output directory (default: outputs.directory)")

    p = sub.add_parser("simulate", help="run and write ledger, snapshots and summary")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-energy", help="check a ledger CSV against the energy inequality")
    p.add_argument("ledger")
    p.add_argument("--tol", type=float, default=None, help="relative tolerance (default 1e-4 or sim.energy_tol)")
    common(p, config_required=False)
    p.set_defaults(func=cmd_verify_energy)

    p = sub.add_parser("stability", help="paired runs against the Gronwall bound")
    common(p)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("decay", help="low/high frequency split along a run")
    common(p)
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("sweep", help="half-life table over r and truncation radius")
    common(p)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("lemma-check", help="random-pair test of the monotonicity inequalities")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--radius", type=float, default=1.5, help="sample x, y in the ball of this radius")
    p.add_argument("--tol", type=float, default=1e-12)
    common(p, config_required=False)
    p.set_defaults(func=cmd_lemma_check)

    p = sub.add_parser("oracle-compare", help="production kernels against dense references")
    common(p)
    p.add_argument("--endpoint-seeds", type=int, default=1, help="seeds used for the time-stepped comparison")
    p.set_defaults(func=cmd_oracle_compare)

    p = sub.add_parser("show-config", help="print the config with every default filled in")
    common(p)
    p.set_defaults(func=cmd_show_config)
    return parser


def _error(kind: str, exc: BaseException, **extra) -> dict:
    payload = {"error": kind, "message": str(exc), **extra}
    if isinstance(exc, ConfigError):
        payload.update(line=exc.line, key=exc.key)
    if isinstance(exc, NonFiniteState):
        payload.update(time=exc.time)
    sys.stderr.write(json.dumps(_clean(payload)) + "\n")
    return payload


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _error("usage", exc)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        _error("usage", UsageError("a subcommand is required"))
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, GridError, EmptyLedger, FileNotFoundError) as exc:
        _error(type(exc).__name__, exc)
        return EXIT_USAGE
    except ValueError as exc:
        # malformed ledger / snapshot content
        _error(type(exc).__name__, exc)
        return EXIT_USAGE
    except (InvariantViolation, NonFiniteState, FloatingPointError) as exc:
        _error(type(exc).__name__, exc)
        return EXIT_FAIL
    except Exception as exc:  # noqa: BLE001 - still report as JSON
        log.debug("unexpected failure", exc_info=True)
        _error("internal", exc, type=type(exc).__name__)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
