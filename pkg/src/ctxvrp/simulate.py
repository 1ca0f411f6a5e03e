"""Monte Carlo replay of fixed routes with depot-detour recourse."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .instance import AugmentedInstance, build_travel_matrix, sample_demands
from .routing import route_cost

N_SCENARIOS = 10_000


@dataclass(frozen=True)
class SimulationContext:
    travel: np.ndarray
    capacity: float
    tw_open: np.ndarray
    tw_close: np.ndarray
    service: np.ndarray
    depot_dwell: float = 0.0

    @classmethod
    def from_instance(cls, aug: AugmentedInstance, depot_dwell: float = 0.0) -> SimulationContext:
        b = aug.base
        return cls(build_travel_matrix(b), float(b.capacity), b.column("tw_open"), b.column("tw_close"),
                   b.column("service"), depot_dwell)

    @property
    def n_customers(self) -> int:
        return len(self.travel) - 1


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    demands: np.ndarray  # (count, n); column c-1 is customer c
    seed: int

    def __post_init__(self):
        if self.demands.ndim != 2 or np.any(self.demands < 0):
            raise ValueError("scenario demands must be a non-negative (count, n) matrix")
        self.demands.flags.writeable = False

    def __len__(self) -> int:
        return len(self.demands)

    def __getitem__(self, k) -> np.ndarray:
        return self.demands[k]

    @classmethod
    def fixed(cls, demand, count: int) -> ScenarioSet:
        """``count`` copies of one demand vector (customer-indexed)."""
        row = np.asarray(demand, dtype=float)
        return cls(np.tile(row, (count, 1)), -1)


def sample_scenarios(aug: AugmentedInstance, count: int = N_SCENARIOS, seed: int = 0) -> ScenarioSet:
    """Independent draws of every customer's true demand; one stream per customer."""
    if count < 1:
        raise ValueError("need at least one scenario")
    cols = [sample_demands(aug, c, count, rngmod.stream(seed, rngmod.SCENARIO, c)) for c in aug.base.customers]
    demands = np.column_stack(cols) if cols else np.zeros((count, 0))
    return ScenarioSet(demands, int(seed))


@dataclass(frozen=True)
class RouteReplay:
    sequence: tuple  # executed customers with 0 marking each mid-route depot visit
    recourse: float
    detours: int
    starts: dict  # customer -> service start
    violated: tuple
    clamped: bool = False


def simulate_route(route, demand, ctx: SimulationContext) -> RouteReplay:
    """Replay one route under one realization (``demand[c-1]`` is customer c's demand)."""
    t, Q = ctx.travel, ctx.capacity
    load, prev = 0.0, 0
    depart = float(ctx.tw_open[0])
    seq, starts, violated = [], {}, []
    recourse, detours, clamped = 0.0, 0, False
    for j in route:
        d = float(demand[j - 1])
        if d > Q:
            d, clamped = Q, True
        if load + d > Q:
            detours += 1
            recourse += t[prev][0] + t[0][j] - t[prev][j]
            arrive = depart + t[prev][0] + ctx.depot_dwell + t[0][j]
            seq.append(0)
            load = d
        else:
            arrive = depart + t[prev][j]
            load += d
        start = max(arrive, float(ctx.tw_open[j]))
        if start > ctx.tw_close[j]:
            violated.append(j)
        starts[j] = start
        seq.append(j)
        depart = start + ctx.service[j]
        prev = j
    return RouteReplay(tuple(seq), float(recourse), detours, starts, tuple(violated), clamped)


@dataclass
class EvaluationReport:
    scenario_count: int
    initial_cost: float
    mean_total_cost: float
    std_total_cost: float
    mean_recourse: float
    mean_detours: float
    mean_violation_fraction: float
    clamped_scenarios: int
    per_scenario: dict = field(default_factory=dict, repr=False)

    def summary(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "per_scenario"}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=1, sort_keys=True)

    def scenario_csv(self) -> str:
        buf = io.StringIO()
        buf.write("scenario,total_cost,recourse,detours,violation_fraction\n")
        p = self.per_scenario
        for k in range(self.scenario_count):
            buf.write(f"{k},{float(p['total'][k])!r},{float(p['recourse'][k])!r},{int(p['detours'][k])},"
                      f"{float(p['violation'][k])!r}\n")
        return buf.getvalue()


def _replay_many(route, D: np.ndarray, ctx: SimulationContext):
    """Vectorised :func:`simulate_route` over all scenario rows of ``D``."""
    t, Q = ctx.travel, ctx.capacity
    S = len(D)
    load = np.zeros(S)
    depart = np.full(S, float(ctx.tw_open[0]))
    recourse = np.zeros(S)
    detours = np.zeros(S, dtype=np.int64)
    violated = np.zeros(S, dtype=np.int64)
    clamped = np.zeros(S, dtype=bool)
    prev = 0
    for j in route:
        d = D[:, j - 1]
        over = d > Q
        if over.any():
            clamped |= over
            d = np.minimum(d, Q)
        det = load + d > Q
        arrive = depart + np.where(det, t[prev][0] + ctx.depot_dwell + t[0][j], t[prev][j])
        recourse += np.where(det, t[prev][0] + t[0][j] - t[prev][j], 0.0)
        detours += det
        load = np.where(det, d, load + d)
        start = np.maximum(arrive, ctx.tw_open[j])
        violated += start > ctx.tw_close[j]
        depart = start + ctx.service[j]
        prev = j
    return recourse, detours, violated, clamped


def evaluate(routes, scenarios: ScenarioSet, ctx: SimulationContext) -> EvaluationReport:
    """Aggregate route replays over every scenario."""
    D = np.asarray(scenarios.demands, dtype=float)
    S, n = len(D), ctx.n_customers
    if D.shape[1] != n:
        raise ValueError("scenario dimension does not match the customer count")
    initial = sum(route_cost(r, ctx.travel) for r in routes)
    recourse = np.zeros(S)
    detours = np.zeros(S, dtype=np.int64)
    violated = np.zeros(S, dtype=np.int64)
    clamped = np.zeros(S, dtype=bool)
    for r in routes:
        rc, dt, vi, cl = _replay_many(r, D, ctx)
        recourse += rc
        detours += dt
        violated += vi
        clamped |= cl
    total = initial + recourse
    frac = violated / n if n else np.zeros(S)
    return EvaluationReport(
        scenario_count=S,
        initial_cost=float(initial),
        mean_total_cost=float(total.mean()),
        std_total_cost=float(total.std()),
        mean_recourse=float(recourse.mean()),
        mean_detours=float(detours.mean()),
        mean_violation_fraction=float(frac.mean()),
        clamped_scenarios=int(clamped.sum()),
        per_scenario={"total": total, "recourse": recourse, "detours": detours, "violation": frac},
    )


def normalize_costs(costs: dict, base: float) -> dict:
    """Percentage deviation of each model's cost from ``base`` (may be negative)."""
    if not base > 0:
        raise ValueError(f"base must be positive, got {base}")
    return {k: 100.0 * (v - base) / base for k, v in costs.items()}
