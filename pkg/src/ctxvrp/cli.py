"""Command-line entry point: ``ctxvrp <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import instance as inst
from .alns import AlnsConfig, run_alns
from .experiment import GRAMMAR, GridConfig, parse_model_name, rows_from_csv, rows_to_csv, run_grid, \
    summarize, summary_to_csv
from .lpexport import export_lp
from .predict import (
    DemandPrediction,
    PredictionTarget,
    TrainerConfig,
    build_predictions,
    fit_model,
    model_to_json,
)
from .routing import RoutingProblem, Solution
from .simulate import SimulationContext, evaluate, sample_scenarios


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read(path) -> str:
    return Path(path).read_text()


def _sub_instance(aug, m: int | None):
    return aug if m is None or m == aug.n_customers else inst.take_first(aug, m)


def _problem(args) -> RoutingProblem:
    aug = inst.load_instance(args.instance)
    pred = DemandPrediction.from_json(_read(args.predictions))
    aug = _sub_instance(aug, len(pred.customers))
    mode = args.mode or ("robust" if pred.mode == "robust" else "det")
    if mode == "robust":
        if pred.mode != "robust":
            raise SystemExit("robust solving needs base and worst-case predictions")
        return RoutingProblem.from_instance(aug, pred, gamma=args.gamma)
    problem = RoutingProblem.from_instance(aug, pred, gamma=args.gamma)
    return problem if problem.mode == "deterministic" else problem.deterministic_twin()


def cmd_augment(args):
    aug = inst.augment(inst.read_solomon(args.solomon), args.seed)
    _write(args.out, inst.to_json(aug) + "\n")


def cmd_history(args):
    aug = inst.load_instance(args.instance)
    hist = inst.generate_history(aug, args.setting, args.n, args.seed)
    _write(args.out, inst.history_to_json(hist) + "\n")


def cmd_train(args):
    hist = inst.history_from_json(_read(args.history))
    target = PredictionTarget.from_label(args.target)
    model = fit_model(args.predictor, target, hist, TrainerConfig(seed=args.seed))
    _write(args.out, model_to_json(model) + "\n")


def cmd_predict(args):
    aug = _sub_instance(inst.load_instance(args.instance), args.customers)
    hist = inst.history_from_json(_read(args.history))
    name = parse_model_name(args.model)
    pred = build_predictions(name.spec(), aug, hist, TrainerConfig(seed=args.seed))
    _write(args.out, pred.to_json() + "\n")


def cmd_solve(args):
    problem = _problem(args)
    config = AlnsConfig(time_limit=args.time_limit, max_iterations=args.max_iterations, seed=args.seed,
                        record=args.trace is not None)
    run = run_alns(problem, config)
    extra = {"n_customers": problem.n_customers, "iterations": run.iterations, "gamma": problem.gamma}
    _write(args.out, run.best.to_json(extra) + "\n")
    if args.trace:
        _write(args.trace, run.history_csv())


def cmd_export_lp(args):
    _write(args.out, export_lp(_problem(args)))


def cmd_simulate(args):
    doc = json.loads(_read(args.solution))
    solution = Solution.from_json(_read(args.solution))
    m = doc.get("n_customers") or max((j for r in solution.routes for j in r), default=0)
    aug = _sub_instance(inst.load_instance(args.instance), m)
    scenarios = sample_scenarios(aug, args.scenarios, args.seed)
    report = evaluate(solution.routes, scenarios, SimulationContext.from_instance(aug, args.depot_dwell))
    _write(args.out, report.to_json() + "\n")
    if args.per_scenario:
        _write(args.per_scenario, report.scenario_csv())


def cmd_grid(args):
    config = GridConfig.from_json(_read(args.config))
    if args.seed is not None:
        config = GridConfig(**{**config.__dict__, "seed": args.seed})

    def progress(row):
        if args.verbose:
            print(f"{row.instance} {row.setting} n={row.n_obs} rep={row.replication} {row.model}: {row.status}",
                  file=sys.stderr)

    _write(args.out, rows_to_csv(run_grid(config, progress)))


def cmd_summarize(args):
    rows = rows_from_csv(_read(args.results))
    _write(args.out, summary_to_csv(summarize(rows, args.top_k)))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # None lets ``grid`` keep its config seed; other commands fall back to 0 in main()
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--out", default="-", help="output file (default stdout)")

    parser = argparse.ArgumentParser(
        prog="ctxvrp",
        description="Contextual demand prediction and robust vehicle routing with time windows.",
        epilog=GRAMMAR,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text, epilog=GRAMMAR,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add("augment", cmd_augment, "add features and demand mixtures to a Solomon instance")
    p.add_argument("--solomon", required=True, help="Solomon-format instance file")

    p = add("history", cmd_history, "draw a demand history from an augmented instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--setting", choices=inst.SETTINGS, default="all")
    p.add_argument("--n", type=int, choices=inst.OBS_COUNTS, default=30)

    p = add("train", cmd_train, "fit one contextual predictor on a demand history")
    p.add_argument("--history", required=True)
    p.add_argument("--predictor", choices=("L", "N"), required=True)
    p.add_argument("--target", default="M", help="M for the mean or a quantile percentage such as 90")

    p = add("predict", cmd_predict, "per-customer demand predictions for a model name")
    p.add_argument("--instance", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--model", required=True, help="model name, see below")
    p.add_argument("--customers", type=int, help="keep only the first N customers")

    for name, func, text in (("solve", cmd_solve, "route with adaptive large neighbourhood search"),
                             ("export-lp", cmd_export_lp, "write the MIP in CPLEX LP format")):
        p = add(name, func, text)
        p.add_argument("--instance", required=True)
        p.add_argument("--predictions", required=True)
        p.add_argument("--mode", choices=("det", "robust"), help="default: the predictions' mode")
        p.add_argument("--gamma", type=int, default=0, help="uncertainty budget for robust mode")
        if name == "solve":
            p.add_argument("--time-limit", type=float, default=60.0)
            p.add_argument("--max-iterations", type=int, help="iteration budget; disables the time limit")
            p.add_argument("--trace", help="per-iteration CSV diagnostics")

    p = add("simulate", cmd_simulate, "evaluate a solution under sampled demand scenarios")
    p.add_argument("--solution", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--scenarios", type=int, default=10_000)
    p.add_argument("--depot-dwell", type=float, default=0.0)
    p.add_argument("--per-scenario", help="per-scenario CSV output")

    p = add("grid", cmd_grid, "run an experiment grid described by a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--verbose", action="store_true")

    p = add("summarize", cmd_summarize, "rank models per setting from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--top-k", type=int, default=10)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is None and args.command != "grid":
        args.seed = 0
    if getattr(args, "max_iterations", None) is not None:
        args.time_limit = None
    args.func(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
