"""Experiment grid: model-name grammar, per-cell pipeline, CSV rows and summaries."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .alns import AlnsConfig, run_alns
from .instance import (
    OBS_COUNTS,
    SETTINGS,
    AugmentedInstance,
    DemandHistory,
    augment,
    generate_history,
    read_solomon,
    take_first,
)
from .lpexport import export_lp, read_external_solution
from .predict import (
    QUANTILE_GRID,
    ModelUnavailable,
    PredictionTarget,
    PredictorSpec,
    TrainerConfig,
    build_predictions,
)
from .rng import derive_seed
from .routing import InfeasibleProblem, RoutingProblem, Solution
from .simulate import ScenarioSet, SimulationContext, evaluate, sample_scenarios

CSV_HEADER = ("instance,setting,n_obs,replication,model,initial_cost,mean_total_cost,std_total_cost,"
              "mean_tw_violation_frac,normalized_score,solve_seconds,status")

DET_TARGETS = ("M",) + tuple(str(round(b * 100)) for b in QUANTILE_GRID)
ROBUST_BASES = ("M", "50", "55")
ROBUST_WORSTS = ("90", "95")
BUDGETS = (1, 2)
PREDICTORS = ("I", "L", "N")
EXACT_EXPORT_MAX = 25

GRAMMAR = (
    "model names:\n"
    "  D-<p>-<e>            deterministic; e in M,50,55,...,95\n"
    "  R-<p>-<b>-<w>-G<k>   robust; b in M,50,55; w in 90,95; k in 1,2 (the Greek letter is also accepted for G)\n"
    "  p is the predictor: I individual, L linear, N neural network\n"
    "  examples: D-N-60, R-L-M-95-G1"
)


class ModelNameError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ModelName:
    family: str  # "D" or "R"
    delta: str
    target: str  # D: point target; R: base target
    worst: str | None = None
    gamma: int | None = None

    def __str__(self) -> str:
        if self.family == "D":
            return f"D-{self.delta}-{self.target}"
        return f"R-{self.delta}-{self.target}-{self.worst}-G{self.gamma}"

    @property
    def mode(self) -> str:
        return "deterministic" if self.family == "D" else "robust"

    def spec(self) -> PredictorSpec:
        targets = [PredictionTarget.from_label(self.target)]
        if self.family == "R":
            targets.append(PredictionTarget.from_label(self.worst))
        return PredictorSpec(self.delta, tuple(targets))


def parse_model_name(text: str) -> ModelName:
    parts = text.split("-")
    starts = [0]
    for p in parts[:-1]:
        starts.append(starts[-1] + len(p) + 1)

    def check(k: int, allowed, what: str) -> str:
        if k >= len(parts):
            raise ModelNameError(f"{text!r}: missing {what} at position {len(text)}")
        if parts[k] not in allowed:
            raise ModelNameError(f"{text!r}: bad {what} {parts[k]!r} at position {starts[k]}; "
                                 f"expected one of {', '.join(allowed)}")
        return parts[k]

    family = check(0, ("D", "R"), "family")
    delta = check(1, PREDICTORS, "predictor")
    if family == "D":
        target = check(2, DET_TARGETS, "target")
        expected = 3
        name = ModelName("D", delta, target)
    else:
        target = check(2, ROBUST_BASES, "base target")
        worst = check(3, ROBUST_WORSTS, "worst-case target")
        budget = check(4, ("G1", "G2", "Γ1", "Γ2"), "budget")
        expected = 5
        name = ModelName("R", delta, target, worst, int(budget[1]))
    if len(parts) > expected:
        raise ModelNameError(f"{text!r}: unexpected trailing text at position {starts[expected] - 1}")
    return name


def all_model_names() -> list[ModelName]:
    names = [ModelName("D", p, e) for p in PREDICTORS for e in DET_TARGETS]
    names += [ModelName("R", p, b, w, g) for p in PREDICTORS for b in ROBUST_BASES
              for w in ROBUST_WORSTS for g in BUDGETS]
    return names


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class GridConfig:
    instances: tuple  # Solomon file paths
    customers: int | None = 25  # None keeps every customer
    settings: tuple = SETTINGS
    obs_counts: tuple = OBS_COUNTS
    replications: int = 5
    models: tuple = ()
    solver: str = "alns"  # or "exact-export"
    time_limit: float | None = 60.0
    max_iterations: int | None = None
    scenarios: int = 10_000
    seed: int = 0
    export_dir: str | None = None
    record_times: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.solver not in ("alns", "exact-export"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.solver == "exact-export" and not self.export_dir:
            raise ValueError("exact-export needs an export directory")
        if not set(self.settings) <= set(SETTINGS):
            raise ValueError(f"settings must be drawn from {SETTINGS}")
        for m in self.models:
            parse_model_name(m)
        object.__setattr__(self, "instances", tuple(str(p) for p in self.instances))
        object.__setattr__(self, "settings", tuple(self.settings))
        object.__setattr__(self, "obs_counts", tuple(int(n) for n in self.obs_counts))
        object.__setattr__(self, "models", tuple(str(parse_model_name(m)) for m in self.models))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> GridConfig:
        doc = json.loads(text)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown grid config keys: {sorted(unknown)}")
        return cls(**doc)

    def alns_config(self, seed: int) -> AlnsConfig:
        return AlnsConfig(time_limit=self.time_limit, max_iterations=self.max_iterations, seed=seed)


@dataclass
class ResultRow:
    instance: str
    setting: str
    n_obs: int
    replication: int
    model: str
    initial_cost: float | None = None
    mean_total_cost: float | None = None
    std_total_cost: float | None = None
    mean_tw_violation_frac: float | None = None
    normalized_score: float | None = None
    solve_seconds: float | None = None
    status: str = "ok"

    def sort_key(self):
        return (self.instance, SETTINGS.index(self.setting), self.n_obs, self.replication, self.model)


# -- per-cell pipeline -------------------------------------------------------

def instance_label(path) -> str:
    return Path(path).stem.lower()


class CellCache:
    """Shares augmentation, histories, scenarios and trained models between cells."""

    def __init__(self, config: GridConfig):
        self.config = config
        self._base = {}
        self._full = {}
        self._aug = {}
        self._scen = {}
        self._hist = {}
        self._models = {}

    def full(self, path, rep: int) -> AugmentedInstance:
        """Augmented instance with every customer; histories are drawn from it."""
        key = (path, rep)
        if key not in self._full:
            if path not in self._base:
                self._base[path] = read_solomon(path)
            seed = derive_seed(self.config.seed, instance_label(path), rep, "augment")
            self._full[key] = augment(self._base[path], seed)
        return self._full[key]

    def augmented(self, path, rep: int) -> AugmentedInstance:
        """The instance that is actually routed (first ``customers`` customers)."""
        key = (path, rep)
        if key not in self._aug:
            aug = self.full(path, rep)
            if self.config.customers is not None:
                aug = take_first(aug, self.config.customers)
            self._aug[key] = aug
        return self._aug[key]

    def scenarios(self, path, rep: int) -> ScenarioSet:
        key = (path, rep)
        if key not in self._scen:
            seed = derive_seed(self.config.seed, instance_label(path), rep, "scenarios")
            self._scen[key] = sample_scenarios(self.augmented(path, rep), self.config.scenarios, seed)
        return self._scen[key]

    def history(self, path, rep: int, setting: str, n: int) -> DemandHistory:
        key = (path, rep, setting, n)
        if key not in self._hist:
            seed = derive_seed(self.config.seed, instance_label(path), rep, "history")
            self._hist[key] = generate_history(self.full(path, rep), setting, n, seed)
        return self._hist[key]

    def models(self, path, rep: int, setting: str, n: int) -> dict:
        return self._models.setdefault((path, rep, setting, n), {})


def cell_seed(config: GridConfig, path, setting: str, n: int, rep: int, model: str, purpose: str) -> int:
    return derive_seed(config.seed, instance_label(path), setting, n, rep, model, purpose)


def _cell_stem(path, setting, n, rep, model) -> str:
    return f"{instance_label(path)}_{setting}_n{n}_r{rep}_{model}"


def run_cell(path, setting: str, n: int, rep: int, model, config: GridConfig,
             cache: CellCache | None = None) -> ResultRow:
    name = model if isinstance(model, ModelName) else parse_model_name(model)
    cache = cache or CellCache(config)
    row = ResultRow(instance_label(path), setting, int(n), int(rep), str(name))
    aug = cache.augmented(path, rep)
    history = cache.history(path, rep, setting, n)
    trainer = TrainerConfig(seed=derive_seed(config.seed, instance_label(path), rep, setting, n, "train"))
    try:
        prediction = build_predictions(name.spec(), aug, history, trainer, cache.models(path, rep, setting, n))
    except ModelUnavailable:
        row.status = "unavailable"
        return row
    try:
        problem = RoutingProblem.from_instance(aug, prediction, gamma=name.gamma or 0)
    except ValueError:
        row.status = "infeasible"
        return row

    started = time.perf_counter()
    try:
        if config.solver == "exact-export" and aug.n_customers <= EXACT_EXPORT_MAX:
            solution = _exact_via_files(problem, Path(config.export_dir), _cell_stem(path, setting, n, rep, name))
            if solution is None:
                row.status = "exported"
                return row
        else:
            seed = cell_seed(config, path, setting, n, rep, str(name), "alns")
            solution = run_alns(problem, config.alns_config(seed)).best
    except InfeasibleProblem:
        row.status = "infeasible"
        return row
    elapsed = time.perf_counter() - started

    report = evaluate(solution.routes, cache.scenarios(path, rep), SimulationContext.from_instance(aug))
    row.initial_cost = solution.cost
    row.mean_total_cost = report.mean_total_cost
    row.std_total_cost = report.std_total_cost
    row.mean_tw_violation_frac = report.mean_violation_fraction
    row.solve_seconds = elapsed if config.record_times else None
    return row


def _exact_via_files(problem: RoutingProblem, directory: Path, stem: str) -> Solution | None:
    """Write the LP; ingest ``<stem>.sol`` when an external solver has produced it."""
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{stem}.lp").write_text(export_lp(problem))
    sol = directory / f"{stem}.sol"
    if not sol.exists():
        return None
    return read_external_solution(sol.read_text(), problem)


def iter_cells(config: GridConfig):
    for path in config.instances:
        for setting in config.settings:
            for n in config.obs_counts:
                for rep in range(config.replications):
                    for model in config.models:
                        yield path, setting, n, rep, model


def run_grid(config: GridConfig, progress=None) -> list[ResultRow]:
    cache = CellCache(config)
    rows = []
    for path, setting, n, rep, model in iter_cells(config):
        try:
            row = run_cell(path, setting, n, rep, model, config, cache)
        except (FloatingPointError, RuntimeError) as exc:
            row = ResultRow(instance_label(path), setting, n, rep, model, status=f"error: {type(exc).__name__}")
        rows.append(row)
        if progress is not None:
            progress(row)
    rows.sort(key=ResultRow.sort_key)
    return normalize_rows(rows)


def normalize_rows(rows: list[ResultRow]) -> list[ResultRow]:
    """Score each row against the best all/n=30 cost of its (instance, replication)."""
    base = {}
    for r in rows:
        if r.setting == "all" and r.n_obs == 30 and r.status == "ok":
            key = (r.instance, r.replication)
            base[key] = min(base.get(key, math.inf), r.mean_total_cost)
    for r in rows:
        b = base.get((r.instance, r.replication))
        if r.status == "ok" and b is not None and b > 0:
            r.normalized_score = 100.0 * (r.mean_total_cost - b) / b
        else:
            r.normalized_score = None
    return rows


# -- CSV ---------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    fields = CSV_HEADER.split(",")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([_fmt(getattr(r, f)) for f in fields])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ResultRow]:
    reader = csv.DictReader(io.StringIO(text))
    if ",".join(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    rows = []
    for rec in reader:
        def num(k):
            return float(rec[k]) if rec[k] != "" else None
        rows.append(ResultRow(
            rec["instance"], rec["setting"], int(rec["n_obs"]), int(rec["replication"]), rec["model"],
            num("initial_cost"), num("mean_total_cost"), num("std_total_cost"), num("mean_tw_violation_frac"),
            num("normalized_score"), num("solve_seconds"), rec["status"],
        ))
    return rows


# -- summaries ---------------------------------------------------------------

@dataclass
class SummaryRow:
    setting: str
    n_obs: int
    rank: int
    model: str
    metric: str  # "normalized_score" or "mean_total_cost"
    mean: float
    std: float
    mean_violation_increase: float | None
    std_violation_increase: float | None
    count: int


def conservative_baseline(model: str) -> str:
    """The D-<p>-95 model that violation increases are measured against."""
    return f"D-{parse_model_name(model).delta}-95"


def summarize(rows, top_k: int | None = None) -> list[SummaryRow]:
    """Per (setting, n_obs): models ranked by mean normalized score (raw cost if unnormalized).

    Violation increases are percentage points over ``D-<p>-95`` in the same cell.
    """
    rows = [r for r in rows if r.status == "ok"]
    if not rows:
        raise ValueError("no completed rows to summarize")
    viol = {(r.instance, r.setting, r.n_obs, r.replication, r.model): r.mean_tw_violation_frac for r in rows}
    groups: dict = {}
    for r in rows:
        groups.setdefault((SETTINGS.index(r.setting), r.n_obs), {}).setdefault(r.model, []).append(r)
    out = []
    for (s_idx, n), by_model in sorted(groups.items()):
        normalized = all(r.normalized_score is not None for rs in by_model.values() for r in rs)
        metric = "normalized_score" if normalized else "mean_total_cost"
        stats = []
        for model, rs in by_model.items():
            vals = np.array([getattr(r, metric) for r in rs])
            inc = []
            for r in rs:
                b = viol.get((r.instance, r.setting, r.n_obs, r.replication, conservative_baseline(model)))
                if b is not None:
                    inc.append(100.0 * (r.mean_tw_violation_frac - b))
            inc_mean = float(np.mean(inc)) if inc else None
            inc_std = float(np.std(inc)) if inc else None
            stats.append((float(vals.mean()), model, float(vals.std()), inc_mean, inc_std, len(rs)))
        stats.sort()
        for rank, (mean, model, std, im, isd, cnt) in enumerate(stats[:top_k] if top_k else stats, start=1):
            out.append(SummaryRow(SETTINGS[s_idx], n, rank, model, metric, mean, std, im, isd, cnt))
    return out


def summary_to_csv(summary) -> str:
    buf = io.StringIO()
    fields = list(SummaryRow.__dataclass_fields__)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for s in summary:
        w.writerow([_fmt(getattr(s, f)) for f in fields])
    return buf.getvalue()
