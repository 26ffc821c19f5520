"""Experiment runner, baselines dispatch, sweeps and metrics persistence."""
from __future__ import annotations

import copy
import csv
import io
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import engine
from .baselines import run_fedavg
from .config import ConfigError, ExperimentConfig
from .data import FederatedDataset, load_csv, partition, synth_tasks

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("m", "b", "k", "h", "dual", "primal", "gap", "accuracy", "mapping_residual")

AXES = {
    "budget": "budget",
    "n_terminals": "n_terminals",
    "N_b": "n_terminals",
    "n_tasks": "n_tasks",
    "N": "n_tasks",
    "c_dev": "c_dev",
    "c_bs": "c_bs",
    "lambda1": "lambda1",
    "lambda2": "lambda2",
}


class PlanInfeasible(RuntimeError):
    """Raised in strict mode when the selected plan cannot meet the target within budget."""


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunArtifact:
    config: dict
    metrics: List[dict]
    summary: dict

    def metrics_csv(self) -> str:
        J = len(self.summary["consumed"])
        cols = list(METRIC_COLUMNS) + [f"consumed_{j}" for j in range(J)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.metrics:
            w.writerow([_fmt(row[c]) for c in cols])
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps({"config": self.config, **self.summary}, indent=2, sort_keys=True, allow_nan=True) + "\n"

    def write(self, out_dir) -> Path:
        """Write ``metrics.csv`` and ``summary.json`` (each atomically)."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _atomic_write(out / "metrics.csv", self.metrics_csv())
        _atomic_write(out / "summary.json", self.summary_json())
        return out


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def build_dataset(config: ExperimentConfig) -> FederatedDataset:
    sysc = config.system
    if config.csv is not None:
        raw = load_csv(config.csv.path, config.csv.label_column, config.csv.task_column,
                       config.csv.positive_label)
        return partition(raw, sysc.n_tasks, sysc.n_terminals, config.test_fraction, config.seed,
                         config.standardize)
    s = config.synth
    return synth_tasks(sysc.n_tasks, sysc.n_terminals, s.samples_per_task, s.d, s.relatedness, s.noise,
                       seed=config.seed, test_fraction=config.test_fraction, standardize=config.standardize)


def _summary(config: ExperimentConfig, data: FederatedDataset, result: engine.RunResult) -> dict:
    accs = [engine.accuracy(w, task) for w, task in zip(result.state.models, data.tasks)]
    budget = [b if math.isfinite(b) else "inf" for b in config.system.costs.budget]
    return {
        "algorithm": config.algorithm,
        "status": result.status,
        "accuracy_per_task": accs,
        "mean_accuracy": float(np.mean(accs)),
        "consumed": [float(c) for c in result.state.consumed],
        "budget": budget,
        "bs_iterations": list(result.bs_iterations),
        "final_gap": result.final_gap,
        "plans": [p.as_dict() for p in result.plans],
        "dataset_fingerprint": data.fingerprint(),
    }


def run_experiment(config: ExperimentConfig, data: Optional[FederatedDataset] = None,
                   out_dir=None) -> RunArtifact:
    """Run the configured algorithm; optionally persist metrics and summary to ``out_dir``."""
    config.validate()
    if data is None:
        data = build_dataset(config)
    if config.algorithm == "rhfedmtl":
        result = engine.run(config.system, data, seed=config.seed)
    elif config.algorithm == "hfedmtl":
        result = baseline_hfedmtl(config, data)
    else:
        result = baseline_fedavg(config, data)
    if config.strict and result.plans and not result.plans[0].feasible:
        raise PlanInfeasible(f"plan {result.plans[0].as_dict()} is infeasible")
    artifact = RunArtifact(
        config=config.to_dict(),
        metrics=[r.as_row() for r in result.trace],
        summary=_summary(config, data, result),
    )
    if out_dir is not None:
        artifact.write(out_dir)
    return artifact


def baseline_hfedmtl(config: ExperimentConfig, data: FederatedDataset) -> engine.RunResult:
    """Same engine, planner bypassed: ``H = fixed_h`` and ``K`` drains the budget."""
    return engine.run(config.system, data, seed=config.seed, fixed_h=config.fixed_h)


def baseline_fedavg(config: ExperimentConfig, data: FederatedDataset) -> engine.RunResult:
    return run_fedavg(config.system, data, h=config.fixed_h, learning_rate=config.learning_rate)


def apply_axis(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    cfg = copy.deepcopy(config)
    field = AXES[axis]
    cast = int if field in ("n_terminals", "n_tasks") else float
    setattr(cfg.system, field, cast(value))
    return cfg


def _run_point(args):
    config, out_dir = args
    return run_experiment(config, out_dir=out_dir)


def sweep(config: ExperimentConfig, grid: Dict[str, Sequence], algorithms: Optional[Sequence[str]] = None,
          seeds: Optional[Sequence[int]] = None, jobs: int = 1, out_dir=None):
    """Run the cartesian product of ``grid`` x ``algorithms`` x ``seeds``.

    Returns ``(rows, aggregate)``: one long-format row per run and one row
    per grid point/algorithm with mean and standard deviation over seeds.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("sweep needs at least one axis with at least one value")
    algorithms = list(algorithms or [config.algorithm])
    seeds = list(seeds if seeds is not None else [config.seed])
    axes = list(grid)
    points = []
    for combo in itertools.product(*(grid[a] for a in axes)):
        for alg in algorithms:
            for seed in seeds:
                cfg = copy.deepcopy(config)
                cfg.algorithm = alg
                cfg.seed = int(seed)
                for a, v in zip(axes, combo):
                    cfg = apply_axis(cfg, a, v)
                name = "_".join([alg, *(f"{a}={v}" for a, v in zip(axes, combo)), f"seed={seed}"])
                dest = None if out_dir is None else Path(out_dir) / "runs" / name
                points.append(((cfg, dest), dict(zip(axes, combo)), alg, seed))

    work = [p[0] for p in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            artifacts = list(pool.map(_run_point, work))
    else:
        artifacts = [_run_point(w) for w in work]

    rows = []
    for (_, values, alg, seed), art in zip(points, artifacts):
        s = art.summary
        rows.append({**values, "algorithm": alg, "seed": seed, "mean_accuracy": s["mean_accuracy"],
                     "consumed_0": s["consumed"][0], "status": s["status"],
                     "h": s["plans"][0]["h_per_task"][0] if s["plans"] else art.config["fixed_h"],
                     "k": s["plans"][0]["k"] if s["plans"] else s["bs_iterations"][0],
                     "bs_iterations": s["bs_iterations"][0]})
    aggregate = []
    keys = []
    for r in rows:
        key = tuple(r[a] for a in axes) + (r["algorithm"],)
        if key not in keys:
            keys.append(key)
    for key in keys:
        group = [r for r in rows if tuple(r[a] for a in axes) + (r["algorithm"],) == key]
        acc = np.array([g["mean_accuracy"] for g in group])
        aggregate.append({**dict(zip(axes, key[:-1])), "algorithm": key[-1], "n_seeds": len(group),
                          "accuracy_mean": float(acc.mean()), "accuracy_std": float(acc.std()),
                          "consumed_mean": float(np.mean([g["consumed_0"] for g in group]))})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _atomic_write(out / "sweep_runs.csv", _table_csv(rows))
        _atomic_write(out / "sweep_summary.csv", _table_csv(aggregate))
    return rows, aggregate


def _table_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()
