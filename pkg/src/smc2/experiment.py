"""Experiment harness: (proposal × step-size × seed) sweeps and aggregation.

A sweep cell simulates (or loads) one dataset, runs the sampler once, and
reports the recycled posterior mean, its RMSE against the generating truth,
and the wall-clock of the sampler alone.  Cells are independent jobs; they
run on a bounded worker pool and their rows are written through an ordered
sink in canonical (proposal, ε, seed) order, so the emitted CSV bytes do not
depend on the worker count (the wall_s column is the one field that cannot
be reproducible).  Each cell's random streams are keyed by
(master_seed, seed) only — not by proposal or ε — so proposals share data
and noise and sweeps are comparable at a fixed master seed.

Outputs:

* ``results.csv`` — long format, one row per cell:
  model,proposal,eps,seed,status,theta_hat_*,rmse,sq_err_*,wall_s
* ``rmse_by_eps.csv`` — per (proposal, ε): mean and quartiles over seeds of
  the per-seed RMSE (the step-size robustness distribution).
* ``summary.json`` — per proposal at its median-RMSE ε: chosen ε,
  per-parameter posterior-mean averages, RMSE, runtime relative to RW.
* ``diagnostics.json`` — ESS trails and SO fallback counts per cell.
* ``failures.csv`` — failed cell counts, only written when something failed.

Per-seed RMSE is sqrt(mean over parameters of squared error); the grid
median is the lower-middle order statistic of the per-ε mean RMSEs with ties
broken toward smaller ε.  Squared errors are emitted per parameter so any
other convention can be recomputed from the CSV.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .crn import CrnStreams
from .models import make_model
from .models.base import dataset_paths, load_dataset, save_dataset
from .sampler import DegeneratePopulation, ProposalConfig, run_smc2

__all__ = [
    "ExperimentConfig",
    "DEFAULT_GRIDS",
    "parse_config_file",
    "parse_grid",
    "run_cell",
    "generate_datasets",
    "run_sweep",
    "aggregate_rmse",
]

DEFAULT_GRIDS = {
    "rw": (0.05, 1.5),
    "fo": (0.005, 0.1),
    "so": (0.25, 3.0),
}
DEFAULT_GRID_COUNT = 20

WORKERS_ENV = "SMC2_WORKERS"


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def parse_grid(text: str) -> tuple:
    """Grid spec: 'lo:hi:count' (log-spaced) or an explicit comma list."""
    text = text.strip()
    if ":" in text:
        lo, hi, count = text.split(":")
        return tuple(float(e) for e in np.geomspace(float(lo), float(hi), int(count)))
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def default_grid(proposal: str, count: int = DEFAULT_GRID_COUNT) -> tuple:
    lo, hi = DEFAULT_GRIDS[proposal]
    return tuple(float(e) for e in np.geomspace(lo, hi, count))


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "lgss"
    true_theta: tuple | None = None     # None -> model default
    t_steps: int = 500
    n_seeds: int = 10
    n_x: int = 500
    n_samples: int = 32
    n_iterations: int = 15
    proposals: tuple = ("rw", "fo", "so")
    grids: dict = field(default_factory=dict)  # proposal -> tuple of eps
    master_seed: int = 0
    workers: int = 1
    out_dir: str = "results"
    data_dir: str | None = None         # load pre-generated datasets if set

    def __post_init__(self):
        for name, value in (("t_steps", self.t_steps), ("n_seeds", self.n_seeds),
                            ("n_x", self.n_x), ("n_samples", self.n_samples),
                            ("n_iterations", self.n_iterations)):
            if value < 1:
                raise ValueError(f"{name} must be >= 1")

    def grid(self, proposal: str) -> tuple:
        grid = self.grids.get(proposal) or default_grid(proposal)
        if any(e <= 0 for e in grid):
            raise ValueError("step sizes must be positive")
        return grid

    def truth(self) -> np.ndarray:
        if self.true_theta is not None:
            return np.asarray(self.true_theta, dtype=float)
        return make_model(self.model).default_truth()

    def cells(self) -> list:
        """Canonical (proposal, eps, seed) order: the output row order."""
        return [
            (proposal, eps, seed)
            for proposal in self.proposals
            for eps in self.grid(proposal)
            for seed in range(self.n_seeds)
        ]


_CONFIG_KEYS = {
    "model": str,
    "t": int,
    "n_seeds": int,
    "n_x": int,
    "n": int,
    "k": int,
    "master_seed": int,
    "workers": int,
    "out_dir": str,
    "data_dir": str,
}


def parse_config_file(path) -> ExperimentConfig:
    """Flat key = value config; '#' starts a comment.

    Keys: model, t, n_seeds, n_x, n, k, proposals (comma list),
    eps_rw / eps_fo / eps_so (grid specs), true_theta (comma list),
    master_seed, workers, out_dir, data_dir.
    """
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key.lower()] = value

    kwargs = {}
    for key, value in raw.items():
        if key in _CONFIG_KEYS:
            name = {"t": "t_steps", "n": "n_samples", "k": "n_iterations"}.get(key, key)
            kwargs[name] = _CONFIG_KEYS[key](value)
        elif key == "proposals":
            kwargs["proposals"] = tuple(tok.strip() for tok in value.split(",") if tok.strip())
        elif key == "true_theta":
            kwargs["true_theta"] = tuple(float(tok) for tok in value.split(","))
        elif key.startswith("eps_"):
            kwargs.setdefault("grids", {})[key[4:]] = parse_grid(value)
        else:
            raise ValueError(f"{path}: unknown config key {key!r}")
    return ExperimentConfig(**kwargs)


# -- cells -------------------------------------------------------------------


def _cell_dataset(config: ExperimentConfig, seed: int):
    model = make_model(config.model)
    if config.data_dir:
        csv_path, _ = dataset_paths(config.data_dir, config.model, seed)
        if csv_path.exists():
            return model, load_dataset(csv_path)
    return model, model.make_dataset(config.truth(), config.t_steps, seed)


def run_cell(config: ExperimentConfig, proposal: str, eps: float, seed: int) -> dict:
    """Run one (proposal, ε, seed) cell and return its result row."""
    model, data = _cell_dataset(config, seed)
    prior = model.default_prior()
    streams = CrnStreams((config.master_seed, seed))
    truth = data.true_theta
    d = len(truth)
    row = {
        "model": config.model,
        "proposal": proposal,
        "eps": eps,
        "seed": seed,
        "status": "ok",
        "theta_hat": [math.nan] * d,
        "rmse": math.nan,
        "sq_err": [math.nan] * d,
        "wall_s": math.nan,
        "ess_history": [],
        "fallback_counts": [],
    }
    start = time.perf_counter()
    try:
        result = run_smc2(
            model, data.observations, prior, ProposalConfig(proposal, eps),
            n_samples=config.n_samples, n_iterations=config.n_iterations,
            n_x=config.n_x, streams=streams, n_jobs=1,
        )
    except DegeneratePopulation:
        row["status"] = "failed"
        row["wall_s"] = time.perf_counter() - start
        return row
    row["wall_s"] = time.perf_counter() - start
    theta_hat = result.posterior_mean
    if not np.all(np.isfinite(theta_hat)):
        row["status"] = "failed"
        return row
    sq_err = (theta_hat - truth) ** 2
    row["theta_hat"] = [float(v) for v in theta_hat]
    row["sq_err"] = [float(v) for v in sq_err]
    row["rmse"] = float(np.sqrt(sq_err.mean()))
    row["ess_history"] = [float(v) for v in result.ess_history]
    row["fallback_counts"] = [int(v) for v in result.fallback_counts]
    return row


def generate_datasets(config: ExperimentConfig, out_dir) -> list:
    """Write one dataset (CSV + JSON sidecar) per seed; deterministic."""
    model = make_model(config.model)
    truth = config.truth()
    paths = []
    for seed in range(config.n_seeds):
        data = model.make_dataset(truth, config.t_steps, seed)
        paths.append(save_dataset(data, out_dir))
    return paths


# -- output files ------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _results_header(d: int) -> list:
    return (
        ["model", "proposal", "eps", "seed", "status"]
        + [f"theta_hat_{i + 1}" for i in range(d)]
        + ["rmse"]
        + [f"sq_err_{i + 1}" for i in range(d)]
        + ["wall_s"]
    )


def _results_line(row: dict) -> str:
    fields = (
        [row["model"], row["proposal"], _fmt(row["eps"]), row["seed"], row["status"]]
        + [_fmt(v) for v in row["theta_hat"]]
        + [_fmt(row["rmse"])]
        + [_fmt(v) for v in row["sq_err"]]
        + [_fmt(row["wall_s"])]
    )
    return ",".join(str(f) for f in fields)


class _OrderedSink:
    """Writes rows in canonical cell order as soon as they are contiguous,
    so partial results survive interruption and full runs are byte-stable."""

    def __init__(self, path, header):
        self._fh = open(path, "w")
        self._fh.write(",".join(header) + "\n")
        self._fh.flush()
        self._pending = {}
        self._next = 0

    def add(self, index: int, line: str):
        self._pending[index] = line
        while self._next in self._pending:
            self._fh.write(self._pending.pop(self._next) + "\n")
            self._next += 1
        self._fh.flush()

    def close(self):
        self._fh.close()


def aggregate_rmse(rows) -> dict:
    """Aggregate cell rows into the per-ε and per-proposal statistics.

    Returns {proposal: {"by_eps": [(eps, rmse_mean, q25, q75, n_ok)...],
    "eps_median": ..., "rmse": ..., "means": [...], "wall": ...,
    "n_failed": ...}}; cells with zero successes are dropped from
    aggregation and counted in n_failed.
    """
    by_cell = {}
    for row in rows:
        by_cell.setdefault((row["proposal"], row["eps"]), []).append(row)

    out = {}
    for (proposal, eps), cell_rows in sorted(by_cell.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        entry = out.setdefault(
            proposal, {"by_eps": [], "n_failed": 0, "_cells": {}}
        )
        ok = [r for r in cell_rows if r["status"] == "ok"]
        entry["n_failed"] += len(cell_rows) - len(ok)
        if not ok:
            continue
        rmses = np.array([r["rmse"] for r in ok])
        entry["by_eps"].append((
            eps,
            float(rmses.mean()),
            float(np.percentile(rmses, 25)),
            float(np.percentile(rmses, 75)),
            len(ok),
        ))
        entry["_cells"][eps] = ok

    for proposal, entry in out.items():
        if not entry["by_eps"]:
            entry["eps_median"] = None
            continue
        # median by RMSE: lower-middle order statistic, ties toward smaller eps
        ranked = sorted(entry["by_eps"], key=lambda item: (item[1], item[0]))
        eps_median, rmse_median = ranked[(len(ranked) - 1) // 2][:2]
        entry["eps_median"] = eps_median
        entry["rmse"] = rmse_median
        chosen = entry["_cells"][eps_median]
        entry["means"] = [
            float(np.mean([r["theta_hat"][i] for r in chosen]))
            for i in range(len(chosen[0]["theta_hat"]))
        ]
        entry["wall"] = float(sum(r["wall_s"] for r in chosen))
        del entry["_cells"]
    return out


def _write_outputs(config: ExperimentConfig, rows, out_dir: Path) -> dict:
    stats = aggregate_rmse(rows)

    lines = ["proposal,eps,rmse_mean,rmse_q25,rmse_q75"]
    for proposal in config.proposals:
        for eps, mean, q25, q75, _ in stats.get(proposal, {}).get("by_eps", []):
            lines.append(f"{proposal},{_fmt(eps)},{_fmt(mean)},{_fmt(q25)},{_fmt(q75)}")
    (out_dir / "rmse_by_eps.csv").write_text("\n".join(lines) + "\n")

    rw_wall = stats.get("rw", {}).get("wall")
    summary = []
    for proposal in config.proposals:
        entry = stats.get(proposal)
        if not entry or entry.get("eps_median") is None:
            continue
        rr = None
        if rw_wall:
            rr = 1.0 if proposal == "rw" else entry["wall"] / rw_wall
        summary.append({
            "proposal": proposal,
            "eps_median": entry["eps_median"],
            "means": entry["means"],
            "rmse": entry["rmse"],
            "rr": rr,
        })
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")

    diagnostics = [
        {
            "proposal": row["proposal"],
            "eps": row["eps"],
            "seed": row["seed"],
            "status": row["status"],
            "ess_history": row["ess_history"],
            "fallback_counts": row["fallback_counts"],
            "total_fallbacks": int(sum(row["fallback_counts"])),
        }
        for row in rows
    ]
    with open(out_dir / "diagnostics.json", "w") as fh:
        json.dump(diagnostics, fh, indent=2)
        fh.write("\n")

    failures = [
        (proposal, entry["n_failed"])
        for proposal, entry in stats.items()
        if entry["n_failed"]
    ]
    if failures:
        text = "proposal,n_failed\n" + "\n".join(f"{p},{n}" for p, n in failures) + "\n"
        (out_dir / "failures.csv").write_text(text)

    return stats


def run_sweep(config: ExperimentConfig, workers: int | None = None) -> dict:
    """Run every (proposal, ε, seed) cell and write all output files.

    Cells execute on up to ``workers`` processes; rows land in results.csv
    in canonical order regardless of completion order.
    """
    workers = config.workers if workers is None else workers
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = config.cells()
    d = len(config.truth())
    sink = _OrderedSink(out_dir / "results.csv", _results_header(d))

    rows = [None] * len(cells)
    try:
        if workers <= 1:
            for i, (proposal, eps, seed) in enumerate(cells):
                rows[i] = run_cell(config, proposal, eps, seed)
                sink.add(i, _results_line(rows[i]))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {
                    pool.submit(run_cell, config, proposal, eps, seed): i
                    for i, (proposal, eps, seed) in enumerate(cells)
                }
                for future in as_completed(futures):
                    i = futures[future]
                    rows[i] = future.result()
                    sink.add(i, _results_line(rows[i]))
    finally:
        sink.close()

    stats = _write_outputs(config, rows, out_dir)
    return {"rows": rows, "stats": stats, "out_dir": out_dir}


def run_single(config: ExperimentConfig, proposal: str, eps: float, seed: int) -> dict:
    """One cell, written through the same sinks (results.csv + diagnostics)."""
    single = replace(
        config,
        proposals=(proposal,),
        grids={proposal: (eps,)},
        n_seeds=1,
    )
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    row = run_cell(config, proposal, eps, seed)
    d = len(config.truth())
    sink = _OrderedSink(out_dir / "results.csv", _results_header(d))
    sink.add(0, _results_line(row))
    sink.close()
    _write_outputs(single, [row], out_dir)
    return row
