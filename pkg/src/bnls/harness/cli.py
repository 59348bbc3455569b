"""Command line entry point: groundstate, evolve, sweep and verify."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import OUTPUT_ROOT_ENV, ConfigError, load_config, load_configs


def _output_root(arg: str | None, default: str) -> Path:
    import os

    if arg:
        return Path(arg)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, default))


def cmd_groundstate(args) -> int:
    from ..core import Criticality, make_grid, make_params
    from ..groundstate import bubble_report, explicit_W, export_ground_state, solve_Q
    from .io import write_json

    params = make_params(args.d, args.sigma)
    grid = make_grid(params.d, args.rmax, args.n)
    root = _output_root(args.out, "groundstates")
    stem = root / f"Q_d{params.d}_sigma{params.sigma:g}"
    if params.criticality is Criticality.ENERGY_CRITICAL:
        import csv

        w = explicit_W(params.d, grid)
        report = bubble_report(params.d, grid)
        stem = root / f"W_d{params.d}"
        root.mkdir(parents=True, exist_ok=True)
        with stem.with_suffix(".csv").open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["r", "W"])
            for r, v in zip(grid.nodes, w.values.real):
                writer.writerow([repr(float(r)), repr(float(v))])
        write_json(stem.with_suffix(".json"), dataclasses.asdict(report) | {"grid": {"rmax": grid.rmax, "n": grid.n}})
        print(f"W(0)={report.w0!r} residual={report.residual:.3e} energy identity error={report.energy_identity_error:.3e}")
        print(f"wrote {stem.with_suffix('.csv')} and {stem.with_suffix('.json')}")
        return 0
    gs = solve_Q(params, grid, symmetrize=args.symmetrize)
    csv_path, json_path = export_ground_state(gs, stem)
    rep = gs.pohozaev
    print(f"iterations={gs.iterations} residual={gs.residual:.3e}")
    print(f"C_gn={gs.c_gn!r} K_gn={gs.k_gn!r} K_formula={gs.k_gn_formula!r}")
    print(f"pohozaev residuals: {rep.id1_residual:.3e} {rep.id2_residual:.3e}")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_evolve(args) -> int:
    from .pipeline import run_config, write_run

    config = load_config(args.config)
    if args.name:
        config = dataclasses.replace(config, name=args.name)
    root = Path(args.out) if args.out else config.output_root()
    summary = run_config(config)
    directory = write_run(summary, root / config.name)
    if summary.error:
        print(f"run failed: {summary.error}", file=sys.stderr)
        return 1
    evo = summary.evolution
    print(f"outcome={evo['outcome']} T_estimate={evo['T_estimate']} final_time={evo['final_time']!r}")
    print(f"wrote {directory}")
    return 0


def cmd_sweep(args) -> int:
    from ..experiments import sweep, write_verdict_table
    from .io import write_json
    from .pipeline import write_run

    configs = load_configs(args.config)
    summaries = sweep(configs, workers=args.workers)
    root = Path(args.out) if args.out else (configs[0].output_root() if configs else _output_root(None, "runs"))
    root.mkdir(parents=True, exist_ok=True)
    for i, (config, summary) in enumerate(zip(configs, summaries)):
        write_run(summary, root / f"{i:03d}-{config.name}")
    write_verdict_table(root / "verdicts.csv", summaries)
    write_json(root / "sweep.json", [s.to_dict() for s in summaries])
    failed = sum(1 for s in summaries if s.error)
    print(f"{len(summaries)} runs, {failed} failed; table at {root / 'verdicts.csv'}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_suite

    return 0 if run_suite() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bnls", description="Radial biharmonic NLS laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("groundstate", help="solve for Q (or sample W) and export it")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--sigma", type=float, required=True)
    g.add_argument("--rmax", type=float, default=50.0)
    g.add_argument("--n", type=int, default=768)
    g.add_argument("--symmetrize", action="store_true", help="apply Fourier rearrangement while iterating")
    g.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV} or ./groundstates)")
    g.set_defaults(func=cmd_groundstate)

    e = sub.add_parser("evolve", help="run one YAML configuration")
    e.add_argument("config")
    e.add_argument("--name")
    e.add_argument("--out", help="output root (overrides config and environment)")
    e.set_defaults(func=cmd_evolve)

    s = sub.add_parser("sweep", help="run a list of YAML configurations")
    s.add_argument("config")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the certification suite")
    v.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"bnls: config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"bnls: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
