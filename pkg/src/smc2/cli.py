"""Command-line interface: dataset generation, single runs, and sweeps.

    smc2 generate --model lgss --t 500 --seeds 50 --out data/
    smc2 run --model lgss --proposal fo --eps 0.03 --seed 0 --out results/
    smc2 sweep --config experiment.cfg --workers 8 --out results/

Config files are flat ``key = value`` text (see
:func:`smc2.experiment.parse_config_file`); command-line flags win over the
file.  The SMC2_WORKERS environment variable sets the default worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .experiment import (
    ExperimentConfig,
    default_workers,
    generate_datasets,
    parse_config_file,
    parse_grid,
    run_single,
    run_sweep,
)

__all__ = ["main"]


def _add_common(parser):
    parser.add_argument("--model", choices=["lgss", "sir"])
    parser.add_argument("--t", type=int, help="timesteps per dataset")
    parser.add_argument("--nx", type=int, help="particles per inner filter")
    parser.add_argument("--n", type=int, help="parameter samples")
    parser.add_argument("--k", type=int, help="sampler iterations")
    parser.add_argument("--master-seed", type=int)
    parser.add_argument("--truth", help="comma-separated true parameter vector")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--data-dir", help="directory of pre-generated datasets")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smc2", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write datasets (CSV + JSON sidecar)")
    _add_common(p_gen)
    p_gen.add_argument("--seeds", type=int, default=1, help="number of datasets")

    p_run = sub.add_parser("run", help="single (proposal, eps, seed) run")
    _add_common(p_run)
    p_run.add_argument("--proposal", choices=["rw", "fo", "so"], required=True)
    p_run.add_argument("--eps", type=float, required=True)
    p_run.add_argument("--seed", type=int, default=0)

    p_sweep = sub.add_parser("sweep", help="full (proposal x eps x seed) sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--config", help="flat key=value config file")
    p_sweep.add_argument("--workers", type=int)
    p_sweep.add_argument("--seeds", type=int, help="number of seeds")
    p_sweep.add_argument("--proposals", help="comma list, e.g. rw,fo,so")
    for kind in ("rw", "fo", "so"):
        p_sweep.add_argument(
            f"--eps-{kind}", help=f"{kind} grid: lo:hi:count or comma list"
        )
    return parser


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    mapping = {
        "model": "model",
        "t": "t_steps",
        "nx": "n_x",
        "n": "n_samples",
        "k": "n_iterations",
        "master_seed": "master_seed",
        "out": "out_dir",
        "data_dir": "data_dir",
        "workers": "workers",
        "seeds": "n_seeds",
    }
    for arg_name, field_name in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            updates[field_name] = value
    if getattr(args, "truth", None):
        updates["true_theta"] = tuple(float(tok) for tok in args.truth.split(","))
    if getattr(args, "proposals", None):
        updates["proposals"] = tuple(
            tok.strip() for tok in args.proposals.split(",") if tok.strip()
        )
    grids = dict(config.grids)
    for kind in ("rw", "fo", "so"):
        spec = getattr(args, f"eps_{kind}", None)
        if spec:
            grids[kind] = parse_grid(spec)
    if grids != config.grids:
        updates["grids"] = grids
    return dataclasses.replace(config, **updates)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    base = ExperimentConfig(workers=default_workers())
    if getattr(args, "config", None):
        base = parse_config_file(args.config)
    config = _apply_overrides(base, args)

    if args.command == "generate":
        paths = generate_datasets(config, config.out_dir)
        for path in paths:
            print(path)
        return 0

    if args.command == "run":
        row = run_single(config, args.proposal, args.eps, args.seed)
        print(
            f"{row['model']} {row['proposal']} eps={row['eps']:g} "
            f"seed={row['seed']} status={row['status']} rmse={row['rmse']:.6g} "
            f"wall={row['wall_s']:.2f}s"
        )
        return 0 if row["status"] == "ok" else 1

    result = run_sweep(config)
    n_failed = sum(1 for row in result["rows"] if row["status"] != "ok")
    print(f"sweep complete: {len(result['rows'])} cells, {n_failed} failed, "
          f"outputs in {result['out_dir']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
