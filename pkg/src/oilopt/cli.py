"""Command-line front end.

Subcommands: solve (value field + convergence trace), policy (switching
function, bang-bang policy, threshold curve), simulate (Monte Carlo payoff
under the extracted policy), verify (the self-check suite).

Exit codes: 0 on success, 1 for configuration problems (bad YAML, bad keys,
invalid model or grid), 2 for numerical failures (contraction violation,
divergence, failed verification checks).

Output files are deterministic for a fixed configuration and seed; the run
manifest (manifest.json) additionally carries wall-clock timings and is the
only output that may differ between identical runs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, NumericalError
from .policy import curve_table, extract_policy, switching_function, write_curve_csv, write_policy_csv
from .simulate import estimate_value, simulate_path
from .solver import solve
from .verify import MC_DISCRETIZATION_CONSTANT, run_verification


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    solver = cfg.solver
    updates = {}
    if getattr(args, "mode", None):
        updates["mode"] = args.mode
    if getattr(args, "sweep", None):
        updates["sweep"] = args.sweep
    if getattr(args, "tolerance", None) is not None:
        updates["tolerance"] = args.tolerance
    if updates:
        solver = dataclasses.replace(solver, **updates)
    simulation = cfg.simulation
    sim_updates = {}
    if getattr(args, "seed", None) is not None:
        sim_updates["seed"] = args.seed
    if getattr(args, "paths", None) is not None:
        sim_updates["n_paths"] = args.paths
    if getattr(args, "dt", None) is not None:
        sim_updates["dt"] = args.dt
    if sim_updates:
        simulation = dataclasses.replace(simulation, **sim_updates)
    if updates or sim_updates:
        return dataclasses.replace(cfg, solver=solver, simulation=simulation)
    return cfg


def _manifest(cfg: RunConfig, args, report=None, extra=None) -> dict:
    data = {
        "package_version": __version__,
        "command": args.command,
        "config_path": str(args.config),
        "config": cfg.raw,
        "grid_shape": list(cfg.grid.shape),
        "solver": dataclasses.asdict(cfg.solver),
        "simulation": {
            "n_paths": cfg.simulation.n_paths,
            "dt": cfg.simulation.dt,
            "seed": cfg.simulation.seed,
            "antithetic": cfg.simulation.antithetic,
            "start": list(cfg.simulation.start),
        },
    }
    if report is not None:
        data["run"] = {
            "converged": report.converged,
            "iterations": report.iterations,
            "final_residual": report.final_residual,
            "mode": report.mode,
            "sweep": report.sweep,
            "contraction_value": report.contraction.value,
            "wall_time_s": report.wall_time,
        }
    if extra:
        data.update(extra)
    return data


def _write_manifest(out_dir: Path, data: dict):
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_convergence(out_dir: Path, report):
    path = out_dir / "convergence.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("iteration,residual\n")
        for i, res in enumerate(report.residuals, start=1):
            fh.write(f"{i},{res!r}\n")
    return path


def _cap_warning(cfg, rows):
    cap = cfg.grid.x_values[-1]
    h = cfg.grid.price_step
    near = [r for r in rows if r[3] is not None and r[3] >= cap - h]
    if near:
        print(
            f"warning: extraction threshold within one price step of the cap "
            f"{cap} in {len(near)} rows; the cap may be distorting the policy",
            file=sys.stderr,
        )


def _cmd_solve(cfg: RunConfig, args, out_dir: Path) -> int:
    field, report = solve(cfg.model, cfg.grid, cfg.solver)
    field.to_csv(out_dir / "value.csv")
    _write_convergence(out_dir, report)
    _write_manifest(out_dir, _manifest(cfg, args, report))
    print(
        f"solved {tuple(cfg.grid.shape)} in {report.iterations} iterations "
        f"(residual {report.final_residual:.3g}, {report.wall_time:.1f}s) -> {out_dir}"
    )
    return 0


def _cmd_policy(cfg: RunConfig, args, out_dir: Path) -> int:
    field, report = solve(cfg.model, cfg.grid, cfg.solver)
    sw = switching_function(field, cfg.model, mode=cfg.solver.mode)
    policy = extract_policy(sw, cfg.model)
    rows, flagged = curve_table(sw)
    _cap_warning(cfg, rows)
    if flagged:
        print(
            f"warning: {len(flagged)} rows show multiple threshold crossings",
            file=sys.stderr,
        )
    write_policy_csv(sw, policy, out_dir / "policy.csv")
    write_curve_csv(rows, out_dir / "switching_curve.csv")
    _write_manifest(out_dir, _manifest(cfg, args, report, {"threshold_rows": len(rows)}))
    print(
        f"policy extracted on {tuple(cfg.grid.shape)} -> {out_dir} "
        f"({len(rows)} threshold rows, {len(flagged)} flagged)"
    )
    return 0


def _cmd_simulate(cfg: RunConfig, args, out_dir: Path) -> int:
    field, report = solve(cfg.model, cfg.grid, cfg.solver)
    sw = switching_function(field, cfg.model, mode=cfg.solver.mode)
    policy = extract_policy(sw, cfg.model)
    sim = cfg.simulation
    t0 = time.perf_counter()
    est = estimate_value(
        cfg.model, policy, sim.start, sim.n_paths, sim.dt, sim.seed, antithetic=sim.antithetic
    )
    mc_wall = time.perf_counter() - t0
    g = cfg.grid
    si, xi, yi = g.nearest_indices(*sim.start[:3])
    v_grid = float(field.values[sim.start[3], si, xi, yi])
    n_record = max(0, args.record)
    if n_record:
        streams = np.random.SeedSequence(sim.seed).spawn(max(n_record, 1))
        with open(out_dir / "paths.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("path,t,x,y,regime,u,discounted_profit\n")
            for p in range(n_record):
                rec = simulate_path(cfg.model, policy, sim.start, sim.dt, streams[p])
                for j in range(len(rec.times)):
                    fh.write(
                        f"{p},{float(rec.times[j])!r},{float(rec.x[j])!r},"
                        f"{float(rec.y[j])!r},{int(rec.regime[j])},{float(rec.u[j])!r},"
                        f"{float(rec.discounted_profit[j])!r}\n"
                    )
    extra = {
        "estimate": {
            "mean": est.mean,
            "std_error": est.std_error,
            "n_paths": est.n_paths,
            "antithetic": est.antithetic,
            "dt": est.dt,
            "seed": sim.seed,
            "grid_value_at_start": v_grid,
            "gap": abs(est.mean - v_grid),
            "diagnostics": est.diagnostics,
            "wall_time_s": mc_wall,
        }
    }
    _write_manifest(out_dir, _manifest(cfg, args, report, extra))
    print(
        f"simulated {est.n_paths} paths: mean {est.mean:.4f} (SE {est.std_error:.4f}), "
        f"grid value {v_grid:.4f}, gap {abs(est.mean - v_grid):.4f} -> {out_dir}"
    )
    return 0


def _cmd_verify(cfg: RunConfig, args, out_dir: Path) -> int:
    results, field, report = run_verification(
        cfg, mc_constant=args.mc_constant, skip_simulation=args.skip_simulation
    )
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {r.status.upper():<4}  {r.detail}")
    failed = [r for r in results if r.status == "fail"]
    extra = {
        "mc_constant": args.mc_constant,
        "checks": [
            {"name": r.name, "status": r.status, "detail": r.detail, "value": r.value}
            for r in results
        ],
    }
    _write_manifest(out_dir, _manifest(cfg, args, report, extra))
    if failed:
        print(f"{len(failed)} check(s) failed", file=sys.stderr)
        return 2
    print(f"all {len(results)} checks passed or skipped")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oilopt",
        description="Finite-horizon optimal extraction under a regime-switching "
        "jump-diffusion price: grid solver, policy extraction, Monte Carlo checks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sim_flags=False):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--mode", choices=["upwind", "paper_faithful"], default=None,
                       help="override the spatial stencil")
        p.add_argument("--sweep", choices=["jacobi", "backward"], default=None,
                       help="override the iteration order")
        p.add_argument("--tolerance", type=float, default=None,
                       help="override the convergence tolerance")
        if sim_flags:
            p.add_argument("--seed", type=int, default=None, help="override the RNG seed")
            p.add_argument("--paths", type=int, default=None, help="override the path count")
            p.add_argument("--dt", type=float, default=None, help="override the Euler step")

    common(sub.add_parser("solve", help="solve the balance equation, dump the value field"))
    common(sub.add_parser("policy", help="extract the bang-bang policy and threshold curve"))
    sim = sub.add_parser("simulate", help="Monte Carlo payoff under the extracted policy")
    common(sim, sim_flags=True)
    sim.add_argument("--record", type=int, default=5,
                     help="number of fully recorded paths in paths.csv (default 5)")
    ver = sub.add_parser("verify", help="run the self-check suite")
    common(ver, sim_flags=True)
    ver.add_argument("--mc-constant", type=float, default=MC_DISCRETIZATION_CONSTANT,
                     help="discretization allowance multiplier in the simulation check")
    ver.add_argument("--skip-simulation", action="store_true",
                     help="skip the Monte Carlo check")
    return parser


_COMMANDS = {
    "solve": _cmd_solve,
    "policy": _cmd_policy,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, args, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
