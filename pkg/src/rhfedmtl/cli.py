"""Command line entry point: ``rhfedmtl {run,sweep,plan,synth}``.

Settings are resolved as defaults, then flags, then the ``--config`` file
(a JSON document shaped like ``ExperimentConfig.to_dict()``), so a config
file always wins over flags.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 infeasible plan
under ``--strict``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .config import ALGORITHMS, ConfigError, CsvSource, ExperimentConfig, SynthSource
from .data import DataError, synth_raw, write_csv
from .harness import AXES, PlanInfeasible, build_dataset, run_experiment, sweep

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_INFEASIBLE = 0, 1, 2, 3

# flag dest -> (section, field); section None means top level
FLAG_FIELDS = {
    "algorithm": (None, "algorithm"),
    "seed": (None, "seed"),
    "fixed_h": (None, "fixed_h"),
    "learning_rate": (None, "learning_rate"),
    "test_fraction": (None, "test_fraction"),
    "n_tasks": ("system", "n_tasks"),
    "n_terminals": ("system", "n_terminals"),
    "lambda1": ("system", "lambda1"),
    "lambda2": ("system", "lambda2"),
    "gamma": ("system", "gamma"),
    "eps_d": ("system", "eps_d"),
    "server_iterations": ("system", "server_iterations"),
    "c_dev": ("system", "c_dev"),
    "c_bs": ("system", "c_bs"),
    "budget": ("system", "budget"),
    "k_cap": ("system", "k_cap"),
    "eta_variant": ("system", "eta_variant"),
    "sigma_mode": ("system", "sigma_mode"),
    "h_max": ("system", "h_max"),
    "samples_per_task": ("synth", "samples_per_task"),
    "d": ("synth", "d"),
    "relatedness": ("synth", "relatedness"),
    "noise": ("synth", "noise"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("experiment")
    g.add_argument("--config", help="JSON config file; its values override flags")
    g.add_argument("--algorithm", choices=ALGORITHMS)
    g.add_argument("--seed", type=int)
    g.add_argument("--fixed-h", type=int, help="terminal iterations for the baselines")
    g.add_argument("--learning-rate", type=float, help="FedAVG step size")
    g.add_argument("--test-fraction", type=float)
    g.add_argument("--no-standardize", action="store_true")
    g.add_argument("--strict", action="store_true", help="exit 3 when the selected plan is infeasible")

    s = p.add_argument_group("system")
    s.add_argument("--n-tasks", "-N", type=int)
    s.add_argument("--n-terminals", "--N-b", type=int)
    s.add_argument("--lambda1", type=float)
    s.add_argument("--lambda2", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--eps-d", type=float)
    s.add_argument("--server-iterations", "-M", type=int)
    s.add_argument("--c-dev", type=float)
    s.add_argument("--c-bs", type=float)
    s.add_argument("--budget", type=float, help="resource budget; 'inf' for unbounded")
    s.add_argument("--k-cap", type=int)
    s.add_argument("--no-replan", action="store_true")
    s.add_argument("--eta-variant", choices=("theorem", "proof"))
    s.add_argument("--sigma-mode", choices=("safe", "brute-force"))
    s.add_argument("--h-max", type=int)

    d = p.add_argument_group("data")
    d.add_argument("--csv", help="CSV file with a header row; default is synthetic data")
    d.add_argument("--label-column")
    d.add_argument("--task-column")
    d.add_argument("--positive-label")
    d.add_argument("--samples-per-task", type=int)
    d.add_argument("--d", type=int, help="synthetic feature dimension")
    d.add_argument("--relatedness", type=float)
    d.add_argument("--noise", type=float)


def resolve_config(args) -> ExperimentConfig:
    """Defaults, then explicitly given flags, then the config file."""
    cfg = ExperimentConfig()
    for dest, (section, name) in FLAG_FIELDS.items():
        v = getattr(args, dest, None)
        if v is None:
            continue
        target = cfg if section is None else getattr(cfg, section)
        setattr(target, name, v)
    if getattr(args, "no_standardize", False):
        cfg.standardize = False
    if getattr(args, "strict", False):
        cfg.strict = True
    if getattr(args, "no_replan", False):
        cfg.system.replan = False
    if getattr(args, "csv", None):
        cfg.csv = CsvSource(path=args.csv)
        cfg.synth = None
        for k in ("label_column", "task_column", "positive_label"):
            if getattr(args, k, None) is not None:
                setattr(cfg.csv, k, getattr(args, k))
    if getattr(args, "config", None):
        file_cfg = ExperimentConfig.load(args.config)
        cfg = _overlay(cfg, json.loads(Path(args.config).read_text(encoding="utf-8")), file_cfg)
    return cfg.validate()


def _overlay(base: ExperimentConfig, raw: dict, parsed: ExperimentConfig) -> ExperimentConfig:
    """Replace every field present in ``raw`` with its parsed value."""
    for key in raw:
        if key == "system":
            for name in raw["system"]:
                setattr(base.system, name, getattr(parsed.system, name))
        elif key == "synth" and raw["synth"] is not None and base.synth is not None:
            for name in raw["synth"]:
                setattr(base.synth, name, getattr(parsed.synth, name))
        else:
            setattr(base, key, getattr(parsed, key))
    if "csv" in raw and raw["csv"] is not None and "synth" not in raw:
        base.synth = None
    if "synth" in raw and raw["synth"] is not None and "csv" not in raw:
        base.csv = None
        if base.synth is None:
            base.synth = parsed.synth
    return base


def _parse_values(text: str):
    vals = [v.strip() for v in text.split(",") if v.strip()]
    if not vals:
        raise UsageError("empty value list")
    try:
        return [float(v) if any(c in v.lower() for c in ".ei") else int(v) for v in vals]
    except ValueError:
        raise UsageError(f"cannot parse values {text!r}") from None


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    art = run_experiment(cfg, out_dir=args.out)
    s = art.summary
    print(json.dumps({"algorithm": s["algorithm"], "status": s["status"], "mean_accuracy": s["mean_accuracy"],
                      "consumed": s["consumed"], "bs_iterations": s["bs_iterations"],
                      "final_gap": s["final_gap"]}, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    grid = {}
    for spec in args.axis:
        if "=" not in spec:
            raise UsageError(f"--axis expects NAME=V1,V2,..., got {spec!r}")
        name, values = spec.split("=", 1)
        if name not in AXES:
            raise UsageError(f"unknown axis {name!r}; choose from {sorted(AXES)}")
        grid[name] = _parse_values(values)
    algorithms = args.algorithms.split(",") if args.algorithms else None
    for a in algorithms or []:
        if a not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {a!r}")
    seeds = _parse_values(args.seeds) if args.seeds else None
    _, aggregate = sweep(cfg, grid, algorithms, seeds, args.jobs, args.out)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(aggregate[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(aggregate)
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def plan_report(cfg: ExperimentConfig, h_max: int = 70) -> dict:
    """Planner dry run: the selected plan and the ``f(H)`` table."""
    from . import engine
    from .planner import cost_table, select_plan

    data = build_dataset(cfg)
    model = engine.convergence_model(cfg.system, data)
    sysc = cfg.system
    plan = select_plan(sysc.costs, sysc.target, model, sysc.h_max or h_max, sysc.k_cap)
    rows = cost_table(sysc.costs, sysc.target, model, sysc.h_max or h_max)
    return {
        "plan": plan.as_dict(),
        "sigma": model.sigma,
        "eta_star": model.eta_star,
        "t_star": model.t_star,
        "table": [{"h": h, "theta": th, "k_bound": kb, "f": f} for h, th, kb, f in rows],
    }


def cmd_plan(args) -> int:
    cfg = resolve_config(args)
    rep = plan_report(cfg, args.table_max)
    if args.format == "json":
        print(json.dumps(rep, indent=2, sort_keys=True))
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["h", "theta", "k_bound", "f"])
        for r in rep["table"]:
            w.writerow([r["h"], repr(r["theta"]), r["k_bound"], repr(r["f"])])
        p = rep["plan"]
        print(f"# plan: H={p['h_per_task'][0]} K={p['k']} regime={p['regime']} feasible={p['feasible']}")
    if cfg.strict and not rep["plan"]["feasible"]:
        print("plan is infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = resolve_config(args)
    s = cfg.synth or SynthSource()
    raw = synth_raw(cfg.system.n_tasks, s.samples_per_task, s.d, s.relatedness, s.noise, cfg.seed)
    write_csv(raw, args.out)
    print(f"wrote {raw.X.shape[0]} rows to {args.out} (label column 'label', positive label '1', task column 'task')")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rhfedmtl", description="Resource-aware hierarchical federated multi-task learning.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one experiment")
    _add_config_flags(r)
    r.add_argument("--out", help="directory for metrics.csv and summary.json")
    r.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="grid sweep over one or more axes")
    _add_config_flags(sw)
    sw.add_argument("--axis", action="append", required=True, metavar="NAME=V1,V2",
                    help=f"sweep axis, one of {sorted(AXES)}; repeatable")
    sw.add_argument("--algorithms", help="comma list, default the configured algorithm")
    sw.add_argument("--seeds", help="comma list of seeds")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", help="output directory")
    sw.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("plan", help="planner dry run with the f(H) table")
    _add_config_flags(pl)
    pl.add_argument("--table-max", type=int, default=70, help="largest H in the table")
    pl.add_argument("--format", choices=("csv", "json"), default="csv")
    pl.set_defaults(func=cmd_plan)

    sy = sub.add_parser("synth", help="write a synthetic dataset as CSV")
    _add_config_flags(sy)
    sy.add_argument("--out", required=True, help="CSV path")
    sy.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"rhfedmtl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlanInfeasible as exc:
        print(f"rhfedmtl: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DataError, OSError, ValueError, ArithmeticError) as exc:
        print(f"rhfedmtl: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
