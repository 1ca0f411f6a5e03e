"""Routes, solutions and route-level feasibility for the deterministic and robust models."""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .instance import AugmentedInstance, build_travel_matrix
from .predict import DemandPrediction

DETERMINISTIC = "deterministic"
ROBUST = "robust"


class InfeasibleProblem(Exception):
    pass


@dataclass(frozen=True, eq=False)
class UncertaintyBudget:
    """Budgeted demand set: base demand plus at most ``gamma`` upward deviations."""

    base: np.ndarray
    deviation: np.ndarray
    gamma: int

    def __post_init__(self):
        if isinstance(self.gamma, bool) or int(self.gamma) != self.gamma or self.gamma < 0:
            raise ValueError(f"budget must be a non-negative integer, got {self.gamma!r}")
        object.__setattr__(self, "gamma", int(self.gamma))
        if len(self.base) != len(self.deviation):
            raise ValueError("base and deviation length mismatch")
        if np.any(np.asarray(self.deviation) < 0) or np.any(np.asarray(self.base) < 0):
            raise ValueError("base demands and deviations must be non-negative")
        if self.gamma > len(self.base):
            raise ValueError("budget exceeds the customer count")

    @property
    def worst(self) -> np.ndarray:
        return np.asarray(self.base) + np.asarray(self.deviation)


@dataclass(eq=False)
class RoutingProblem:
    """Everything a solver needs; arrays are indexed by node id (0 is the depot)."""

    travel: np.ndarray
    capacity: float
    tw_open: np.ndarray
    tw_close: np.ndarray
    service: np.ndarray
    mode: str
    demand: np.ndarray  # planning demand (deterministic) or base demand (robust), depot entry 0
    deviation: np.ndarray | None = None
    gamma: int = 0
    name: str = ""

    def __post_init__(self):
        n = len(self.travel)
        for arr in (self.tw_open, self.tw_close, self.service, self.demand):
            if len(arr) != n:
                raise ValueError("prediction vector dimension does not match the customer count")
        if self.mode not in (DETERMINISTIC, ROBUST):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == ROBUST:
            if self.deviation is None or len(self.deviation) != n:
                raise ValueError("robust problems need a deviation vector")
            # validates gamma and non-negativity
            UncertaintyBudget(self.demand[1:], self.deviation[1:], self.gamma)
        # plain lists are markedly faster than numpy scalars in the inner loops
        self._t = self.travel.tolist()
        self._open = list(map(float, self.tw_open))
        self._close = list(map(float, self.tw_close))
        self._svc = list(map(float, self.service))
        self._d = list(map(float, self.demand))
        self._dev = list(map(float, self.deviation)) if self.deviation is not None else None

    @property
    def n_customers(self) -> int:
        return len(self.travel) - 1

    @property
    def customers(self) -> range:
        return range(1, len(self.travel))

    @property
    def budget(self) -> UncertaintyBudget:
        if self.mode != ROBUST:
            raise ValueError("deterministic problems have no uncertainty budget")
        return UncertaintyBudget(self.demand[1:], self.deviation[1:], self.gamma)

    def deterministic_twin(self) -> RoutingProblem:
        """Same problem with the base demand as a deterministic prediction."""
        return RoutingProblem(self.travel, self.capacity, self.tw_open, self.tw_close, self.service,
                              DETERMINISTIC, self.demand, name=self.name)

    @classmethod
    def from_instance(cls, aug: AugmentedInstance, prediction: DemandPrediction | None = None,
                      gamma: int = 0, demand=None) -> RoutingProblem:
        """Build from an augmented instance and a prediction (or explicit demands)."""
        b = aug.base
        travel = build_travel_matrix(b)
        args = (travel, b.capacity, b.column("tw_open"), b.column("tw_close"), b.column("service"))
        if prediction is None:
            d = b.column("demand") if demand is None else np.concatenate([[0.0], np.asarray(demand, float)])
            return cls(*args, DETERMINISTIC, d, name=aug.name)
        if tuple(prediction.customers) != tuple(b.customers):
            raise ValueError("prediction vector dimension does not match the customer count")
        if prediction.mode == DETERMINISTIC:
            return cls(*args, DETERMINISTIC, np.concatenate([[0.0], prediction.demand]), name=aug.name)
        base = np.concatenate([[0.0], prediction.base])
        dev = np.concatenate([[0.0], prediction.worst - prediction.base])
        return cls(*args, ROBUST, base, dev, gamma, name=aug.name)


# -- cost and feasibility ----------------------------------------------------

def route_cost(route, travel) -> float:
    t = travel
    prev, cost = 0, 0.0
    for j in route:
        cost += t[prev][j]
        prev = j
    return cost + t[prev][0]


def solution_cost(routes, travel) -> float:
    return sum(route_cost(r, travel) for r in routes)


def time_feasible(route, problem: RoutingProblem) -> tuple[bool, list[float]]:
    """Forward recursion of service-start times; waits at early arrivals."""
    t, op, cl, sv = problem._t, problem._open, problem._close, problem._svc
    starts = []
    prev, depart = 0, op[0]
    ok = True
    for j in route:
        w = depart + t[prev][j]
        if w < op[j]:
            w = op[j]
        if w > cl[j]:
            ok = False
        starts.append(w)
        depart = w + sv[j]
        prev = j
    if depart + t[prev][0] > cl[0]:
        ok = False
    return ok, starts


def _time_ok(route, problem: RoutingProblem) -> bool:
    t, op, cl, sv = problem._t, problem._open, problem._close, problem._svc
    prev, depart = 0, op[0]
    for j in route:
        w = depart + t[prev][j]
        if w < op[j]:
            w = op[j]
        elif w > cl[j]:
            return False
        depart = w + sv[j]
        prev = j
    return depart + t[prev][0] <= cl[0]


def det_capacity_feasible(route, problem: RoutingProblem) -> bool:
    if problem.mode != DETERMINISTIC:
        raise ValueError("det_capacity_feasible called on a robust problem")
    d = problem._d
    return sum(d[j] for j in route) <= problem.capacity


def robust_load_table(route, budget: UncertaintyBudget) -> np.ndarray:
    """Worst-case loads ``u[p, g]`` after the p-th stop when g customers deviate.

    Row 0 is the depot (all zeros). Customer ids index ``budget.base`` from 1.
    """
    base = np.asarray(budget.base, dtype=float)
    worst = base + np.asarray(budget.deviation, dtype=float)
    G = budget.gamma
    u = np.zeros((len(route) + 1, G + 1))
    for p, j in enumerate(route, start=1):
        u[p, 0] = u[p - 1, 0] + base[j - 1]
        for g in range(1, G + 1):
            u[p, g] = max(u[p - 1, g] + base[j - 1], u[p - 1, g - 1] + worst[j - 1])
    return u


def robust_final_load(route, base, deviation, gamma: int) -> float:
    """Final-row entry at ``g = gamma``: base sum plus the ``gamma`` largest deviations."""
    total = sum(base[j] for j in route)
    if gamma:
        devs = sorted((deviation[j] for j in route), reverse=True)
        total += sum(devs[:gamma])
    return total


def robust_feasible(route, budget: UncertaintyBudget, capacity: float) -> bool:
    return bool(robust_load_table(route, budget).max() <= capacity)


def load_feasible(route, problem: RoutingProblem) -> bool:
    """Mode-appropriate capacity check used by the solvers."""
    if problem.mode == DETERMINISTIC:
        d = problem._d
        return sum(d[j] for j in route) <= problem.capacity
    # the table is monotone along the route and in g, so the last entry decides
    return robust_final_load(route, problem._d, problem._dev, problem.gamma) <= problem.capacity


def route_feasible(route, problem: RoutingProblem) -> bool:
    return load_feasible(route, problem) and _time_ok(route, problem)


def solution_feasible(routes, problem: RoutingProblem) -> bool:
    seen = [j for r in routes for j in r]
    if sorted(seen) != list(problem.customers):
        return False
    if any(len(r) == 0 for r in routes):
        return False
    if problem.mode == DETERMINISTIC:
        cap_ok = all(det_capacity_feasible(r, problem) for r in routes)
    else:
        budget = problem.budget
        cap_ok = all(robust_feasible(r, budget, problem.capacity) for r in routes)
    return cap_ok and all(time_feasible(r, problem)[0] for r in routes)


# -- solutions ---------------------------------------------------------------

@dataclass(frozen=True)
class Solution:
    routes: tuple  # tuple of tuples of customer ids
    mode: str
    cost: float

    @classmethod
    def of(cls, routes, problem: RoutingProblem) -> Solution:
        routes = tuple(tuple(int(j) for j in r) for r in routes if len(r))
        return cls(routes, problem.mode, solution_cost(routes, problem._t))

    def to_json(self, extra: dict | None = None) -> str:
        doc = {"mode": self.mode, "cost": self.cost, "routes": [list(r) for r in self.routes]}
        if extra:
            doc.update(extra)
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Solution:
        doc = json.loads(text)
        return cls(tuple(tuple(r) for r in doc["routes"]), doc["mode"], float(doc["cost"]))


# -- exact oracle ------------------------------------------------------------

MAX_EXACT_CUSTOMERS = 8


def best_routes_by_subset(problem: RoutingProblem) -> dict:
    """Cheapest feasible visiting order for every customer subset (bitmask keyed).

    Depth-first enumeration from the depot in lexicographic order; a partial
    path is pruned as soon as it breaks a time window or capacity. Strict
    improvement keeps the lexicographically first optimal order.
    """
    t, op, cl, sv = problem._t, problem._open, problem._close, problem._svc
    n = problem.n_customers
    best: dict[int, tuple[float, tuple]] = {}

    def extend(path, mask, cost, depart, prev):
        for j in range(1, n + 1):
            bit = 1 << (j - 1)
            if mask & bit:
                continue
            w = depart + t[prev][j]
            if w > cl[j]:
                continue
            w = max(w, op[j])
            new_path = path + (j,)
            if not load_feasible(new_path, problem):
                continue
            new_cost = cost + t[prev][j]
            dep = w + sv[j]
            new_mask = mask | bit
            if dep + t[j][0] <= cl[0]:
                total = new_cost + t[j][0]
                cur = best.get(new_mask)
                if cur is None or total < cur[0]:
                    best[new_mask] = (total, new_path)
            extend(new_path, new_mask, new_cost, dep, j)

    extend((), 0, 0.0, op[0], 0)
    return best


def solve_exact_small(problem: RoutingProblem) -> Solution:
    """Optimal solution by exhaustive enumeration (at most 8 customers)."""
    n = problem.n_customers
    if n > MAX_EXACT_CUSTOMERS:
        raise ValueError(f"exact oracle supports at most {MAX_EXACT_CUSTOMERS} customers, got {n}")
    if n == 0:
        return Solution((), problem.mode, 0.0)
    routes = best_routes_by_subset(problem)
    full = (1 << n) - 1
    # set-partition DP; the route holding the lowest remaining customer is chosen first
    part: dict[int, tuple[float, tuple]] = {0: (0.0, ())}
    for mask in range(1, full + 1):
        low = mask & -mask
        rest = mask ^ low
        best = None
        sub = rest
        while True:
            r = sub | low
            if r in routes and (mask ^ r) in part:
                cost_r, path = routes[r]
                cost_rest, tail = part[mask ^ r]
                total = cost_r + cost_rest
                cand = (total, tuple(sorted((path,) + tail)))
                if best is None or cand[0] < best[0] or (cand[0] == best[0] and cand[1] < best[1]):
                    best = cand
            if sub == 0:
                break
            sub = (sub - 1) & rest
        if best is not None:
            part[mask] = best
    if full not in part:
        raise InfeasibleProblem("no feasible partition of the customers exists")
    return Solution(part[full][1], problem.mode, part[full][0])


def enumerate_worst_load(route, base, deviation, gamma: int) -> float:
    """Brute-force max over subsets S (|S| <= gamma) of sum(base) + sum_S(deviation)."""
    total = sum(base[j] for j in route)
    best = total
    for k in range(1, min(gamma, len(route)) + 1):
        for S in combinations(route, k):
            best = max(best, total + sum(deviation[j] for j in S))
    return best


def big_m_time(problem: RoutingProblem) -> float:
    return float(problem.tw_close[0] + np.max(problem.service) + np.max(problem.travel))

