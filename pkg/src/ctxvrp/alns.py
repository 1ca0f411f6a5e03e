"""Adaptive large neighbourhood search for the deterministic and robust CVRPTW.

Two destroy operators (random, string removal), two repair operators (greedy,
regret-2 insertion), roulette-wheel selection with exponentially smoothed
weights, and simulated-annealing acceptance.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .routing import (
    DETERMINISTIC,
    InfeasibleProblem,
    RoutingProblem,
    Solution,
    route_feasible,
    solution_cost,
    solution_feasible,
)

NEW_BEST, BETTER, ACCEPTED, REJECTED = "new-best", "better", "accepted", "rejected"
OUTCOMES = (NEW_BEST, BETTER, ACCEPTED, REJECTED)
DESTROY = ("random_removal", "string_removal")
REPAIR = ("greedy_repair", "regret_repair")


@dataclass
class OperatorWeights:
    destroy: list = field(default_factory=lambda: [1.0, 1.0])
    repair: list = field(default_factory=lambda: [1.0, 1.0])
    decay: float = 0.8
    rewards: tuple = (25.0, 5.0, 1.0, 0.0)
    floor: float = 1e-3
    additive: bool = False

    def __post_init__(self):
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if min(self.destroy + self.repair) <= 0:
            raise ValueError("operator weights must be positive")


def _roulette(weights, rng: np.random.Generator) -> int:
    total = sum(weights)
    x = rng.random() * total
    acc = 0.0
    for k, w in enumerate(weights):
        acc += w
        if x < acc:
            return k
    return len(weights) - 1


def select_operators(weights: OperatorWeights, rng: np.random.Generator) -> tuple[int, int]:
    return _roulette(weights.destroy, rng), _roulette(weights.repair, rng)


def update_weights(weights: OperatorWeights, chosen: tuple[int, int], outcome: str) -> OperatorWeights:
    """Smooth the chosen operators' weights toward the outcome's reward, in place."""
    score = weights.rewards[OUTCOMES.index(outcome)]
    d, r = chosen
    for family, k in ((weights.destroy, d), (weights.repair, r)):
        if weights.additive:
            new = weights.decay * family[k] + score
        else:
            new = weights.decay * family[k] + (1 - weights.decay) * score
        family[k] = max(new, weights.floor)
    return weights


@dataclass(frozen=True)
class AnnealingSchedule:
    initial: float
    alpha: float
    cooling_steps: int = 5000

    def temperature(self, step: int) -> float:
        # reaches 1 after cooling_steps and is held there
        return self.initial * self.alpha ** min(step, self.cooling_steps)


def init_temperature(initial_cost: float, worse: float = 0.5, chance: float = 0.05,
                     cooling_steps: int = 5000) -> AnnealingSchedule:
    """A solution ``worse`` (relative) above the initial cost is accepted with probability ``chance``."""
    if not initial_cost > 0:
        raise ValueError(f"initial cost must be positive, got {initial_cost}")
    t0 = worse * initial_cost / -math.log(chance)
    return AnnealingSchedule(t0, t0 ** (-1.0 / cooling_steps), cooling_steps)


def accept(current: float, candidate: float, temperature: float, rng: np.random.Generator) -> bool:
    if candidate <= current:
        return True
    return bool(rng.random() < math.exp((current - candidate) / temperature))


@dataclass(frozen=True)
class AlnsConfig:
    time_limit: float | None = 60.0
    max_iterations: int | None = None
    removal_fraction: float = 0.15
    max_string_length: int = 10
    seed: int = 0
    decay: float = 0.8
    rewards: tuple = (25.0, 5.0, 1.0, 0.0)
    weight_floor: float = 1e-3
    additive_update: bool = False
    debug: bool = False
    record: bool = False

    def __post_init__(self):
        if self.time_limit is None and self.max_iterations is None:
            raise ValueError("need a time limit or an iteration budget")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        if not 0 < self.removal_fraction <= 0.5:
            raise ValueError("removal fraction must lie in (0, 0.5]")
        if self.max_string_length < 1:
            raise ValueError("max string length must be >= 1")


@dataclass
class AlnsRun:
    best: Solution
    best_cost: float
    iterations: int
    destroy_usage: list
    repair_usage: list
    weights: OperatorWeights
    history: list = field(default_factory=list)  # (iteration, temp, current, best, destroy, repair, outcome)

    def history_csv(self) -> str:
        rows = ["iteration,temperature,current_cost,best_cost,destroy,repair,outcome"]
        for it, temp, cur, best, d, r, out in self.history:
            rows.append(f"{it},{temp!r},{cur!r},{best!r},{DESTROY[d]},{REPAIR[r]},{out}")
        return "\n".join(rows) + "\n"


# -- construction ------------------------------------------------------------

def greedy_initial(problem: RoutingProblem, rng: np.random.Generator | None = None) -> list[list[int]]:
    """Nearest-neighbour routes; a new route opens when no unassigned customer fits."""
    t = problem._t
    unassigned = set(problem.customers)
    routes = []
    while unassigned:
        route, pos = [], 0
        while True:
            for j in sorted(unassigned, key=lambda c: (t[pos][c], c)):
                if route_feasible(route + [j], problem):
                    route.append(j)
                    unassigned.discard(j)
                    pos = j
                    break
            else:
                break
        if not route:
            raise InfeasibleProblem(f"customers {sorted(unassigned)[:5]} cannot be served even alone")
        routes.append(route)
    return routes


# -- destroy -----------------------------------------------------------------

def removal_count(n: int, fraction: float) -> int:
    return max(1, min(math.ceil(fraction * n), max(n - 1, 1)))


def random_removal(routes, k: int, rng: np.random.Generator):
    customers = [j for r in routes for j in r]
    if not 1 <= k <= len(customers):
        raise ValueError(f"cannot remove {k} of {len(customers)} customers")
    picked = rng.choice(len(customers), size=k, replace=False)
    removed = [customers[i] for i in picked]
    gone = set(removed)
    partial = [[j for j in r if j not in gone] for r in routes]
    return [r for r in partial if r], removed


def string_removal(routes, budget: int, max_length: int, neighbours, rng: np.random.Generator):
    """Remove contiguous strings from routes near a random seed customer.

    ``neighbours[c]`` lists every customer ordered by distance from ``c``
    (``c`` itself first). At most one string leaves each route.
    """
    where = {j: (ri, p) for ri, r in enumerate(routes) for p, j in enumerate(r)}
    customers = [j for r in routes for j in r]
    seed = customers[int(rng.integers(len(customers)))]
    removed: list[int] = []
    ruined: set[int] = set()
    for v in neighbours[seed]:
        if len(removed) >= budget:
            break
        if v not in where:
            continue
        ri, pos = where[v]
        if ri in ruined:
            continue
        route = routes[ri]
        length = int(rng.integers(1, min(max_length, len(route)) + 1))
        lo, hi = max(0, pos - length + 1), min(pos, len(route) - length)
        start = int(rng.integers(lo, hi + 1))
        removed.extend(route[start:start + length])
        ruined.add(ri)
    gone = set(removed)
    partial = [[j for j in r if j not in gone] for r in routes]
    return [r for r in partial if r], removed


# -- repair ------------------------------------------------------------------

class _Inserter:
    """Insertion evaluation against one problem with per-route cached schedules."""

    def __init__(self, problem: RoutingProblem):
        self.p = problem
        self.robust = problem.mode != DETERMINISTIC

    def route_info(self, route):
        p = self.p
        t, op, sv = p._t, p._open, p._svc
        starts, prev, depart = [], 0, op[0]
        for j in route:
            w = max(depart + t[prev][j], op[j])
            starts.append(w)
            depart = w + sv[j]
            prev = j
        load = sum(p._d[j] for j in route)
        devs = sorted((p._dev[j] for j in route), reverse=True)[: p.gamma] if self.robust else []
        return starts, load, devs

    def load_ok(self, info, j) -> bool:
        p = self.p
        _, load, devs = info
        total = load + p._d[j]
        if self.robust and p.gamma:
            top = sorted(devs + [p._dev[j]], reverse=True)[: p.gamma]
            total += sum(top)
        return total <= p.capacity

    def time_ok(self, route, starts, pos, j) -> bool:
        p = self.p
        t, op, cl, sv = p._t, p._open, p._close, p._svc
        if pos:
            prev = route[pos - 1]
            depart = starts[pos - 1] + sv[prev]
        else:
            prev, depart = 0, op[0]
        w = max(depart + t[prev][j], op[j])
        if w > cl[j]:
            return False
        depart, prev = w + sv[j], j
        for k in range(pos, len(route)):
            c = route[k]
            w = max(depart + t[prev][c], op[c])
            if w > cl[c]:
                return False
            if w <= starts[k]:
                # schedule from here on is unchanged and was feasible
                return True
            depart, prev = w + sv[c], c
        return depart + t[prev][0] <= cl[0]

    def top2(self, route, info, j):
        """Two cheapest feasible positions in ``route``: list of (delta, pos)."""
        if not self.load_ok(info, j):
            return []
        t = self.p._t
        seq = [0] + route + [0]
        deltas = sorted((t[seq[q]][j] + t[j][seq[q + 1]] - t[seq[q]][seq[q + 1]], q) for q in range(len(route) + 1))
        out = []
        for delta, q in deltas:
            if self.time_ok(route, info[0], q, j):
                out.append((delta, q))
                if len(out) == 2:
                    break
        return out


NEW_ROUTE = -1


def _best_of(options):
    """Best and second-best (delta, route, pos) over ``{route: [(delta, pos)...]}``.

    Route key ``NEW_ROUTE`` stands for opening a fresh route.
    """
    flat = sorted((delta, ri, q) for ri, opts in options.items() for delta, q in opts)
    return flat[:2]


def _open_singleton(routes, infos, ins: _Inserter, j):
    if not route_feasible([j], ins.p):
        raise InfeasibleProblem(f"customer {j} cannot be served even alone")
    routes.append([j])
    infos.append(ins.route_info([j]))


def _singleton_option(ins: _Inserter, j):
    t = ins.p._t
    return [(t[0][j] + t[j][0], 0)] if route_feasible([j], ins.p) else []


def _place(routes, infos, ins: _Inserter, j, ri, q) -> int:
    """Insert ``j``; returns the index of the route that changed."""
    if ri == NEW_ROUTE:
        _open_singleton(routes, infos, ins, j)
        return len(routes) - 1
    routes[ri].insert(q, j)
    infos[ri] = ins.route_info(routes[ri])
    return ri


def greedy_repair(partial, removed, problem: RoutingProblem, rng: np.random.Generator | None = None):
    """Insert the globally cheapest feasible (customer, route, position) until none remain."""
    ins = _Inserter(problem)
    routes = [list(r) for r in partial]
    infos = [ins.route_info(r) for r in routes]
    pending = list(removed)
    options = {}
    for j in pending:
        options[j] = {ri: ins.top2(routes[ri], infos[ri], j) for ri in range(len(routes))}
        options[j][NEW_ROUTE] = _singleton_option(ins, j)
    while pending:
        best = None
        for j in pending:
            cand = _best_of(options[j])
            if cand and (best is None or cand[0][0] < best[0]):
                best = (cand[0][0], j, cand[0][1], cand[0][2])
        if best is None:
            best = (None, pending[0], NEW_ROUTE, 0)
        _, j, ri, q = best
        changed = _place(routes, infos, ins, j, ri, q)
        pending.remove(j)
        del options[j]
        for c in pending:
            options[c][changed] = ins.top2(routes[changed], infos[changed], c)
    return routes


def regret_repair(partial, removed, problem: RoutingProblem, rng: np.random.Generator | None = None):
    """Order customers by regret-2 once, then insert each at its best position in that order."""
    ins = _Inserter(problem)
    routes = [list(r) for r in partial]
    infos = [ins.route_info(r) for r in routes]

    def candidates(j):
        options = {ri: ins.top2(routes[ri], infos[ri], j) for ri in range(len(routes))}
        options[NEW_ROUTE] = _singleton_option(ins, j)
        return _best_of(options)

    keyed = []
    for k, j in enumerate(removed):
        cand = candidates(j)
        regret = cand[1][0] - cand[0][0] if len(cand) == 2 else math.inf
        keyed.append((-regret, k, j))
    keyed.sort()
    for _, _, j in keyed:
        cand = candidates(j) or [(None, NEW_ROUTE, 0)]
        _place(routes, infos, ins, j, cand[0][1], cand[0][2])
    return routes


# -- driver ------------------------------------------------------------------

def neighbour_lists(problem: RoutingProblem) -> dict:
    t = problem._t
    cs = list(problem.customers)
    return {c: sorted(cs, key=lambda j: (t[c][j], j != c, j)) for c in cs}


def run_alns(problem: RoutingProblem, config: AlnsConfig = AlnsConfig()) -> AlnsRun:
    rng = rngmod.stream(config.seed, rngmod.ALNS)
    weights = OperatorWeights(decay=config.decay, rewards=tuple(config.rewards), floor=config.weight_floor,
                              additive=config.additive_update)
    n = problem.n_customers
    if n == 0:
        empty = Solution((), problem.mode, 0.0)
        return AlnsRun(empty, 0.0, 0, [0, 0], [0, 0], weights)

    current = greedy_initial(problem, rng)
    cur_cost = solution_cost(current, problem._t)
    best, best_cost = current, cur_cost
    schedule = init_temperature(cur_cost) if cur_cost > 0 else AnnealingSchedule(1.0, 1.0)
    k = removal_count(n, config.removal_fraction)
    neighbours = neighbour_lists(problem)
    destroy_usage, repair_usage = [0, 0], [0, 0]
    history = []
    deadline = None if config.time_limit is None else time.perf_counter() + config.time_limit
    it = 0
    while True:
        if config.max_iterations is not None and it >= config.max_iterations:
            break
        if deadline is not None and time.perf_counter() >= deadline:
            break
        temp = schedule.temperature(it)
        d, r = select_operators(weights, rng)
        destroy_usage[d] += 1
        repair_usage[r] += 1
        if d == 0:
            partial, removed = random_removal(current, k, rng)
        else:
            partial, removed = string_removal(current, k, config.max_string_length, neighbours, rng)
        repair = greedy_repair if r == 0 else regret_repair
        candidate = repair(partial, removed, problem, rng)
        cand_cost = solution_cost(candidate, problem._t)
        if config.debug and not solution_feasible(candidate, problem):
            raise AssertionError(f"iteration {it}: repaired solution is infeasible")

        if cand_cost < best_cost:
            outcome = NEW_BEST
        elif cand_cost < cur_cost:
            outcome = BETTER
        else:
            outcome = None
        if accept(cur_cost, cand_cost, temp, rng):
            current, cur_cost = candidate, cand_cost
            if outcome is None:
                outcome = ACCEPTED
            if cur_cost < best_cost:
                best, best_cost = current, cur_cost
        elif outcome is None:
            outcome = REJECTED
        update_weights(weights, (d, r), outcome)
        if config.record:
            history.append((it, temp, cur_cost, best_cost, d, r, outcome))
        it += 1

    solution = Solution.of(best, problem)
    return AlnsRun(solution, solution.cost, it, destroy_usage, repair_usage, weights, history)
