from pathlib import Path

import numpy as np

from ctxvrp.routing import DETERMINISTIC, ROBUST, RoutingProblem

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"
C101 = DATA / "c101.txt"


def euclid(coords):
    xy = np.asarray(coords, dtype=float)
    return np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1))


def toy_problem(coords, demand, capacity, windows=None, service=None, deviation=None, gamma=0,
                horizon=1000.0):
    """Problem from raw coordinates (depot first) and customer-indexed data."""
    n = len(coords) - 1
    open_, close = np.zeros(n + 1), np.full(n + 1, horizon)
    if windows is not None:
        for i, (a, b) in enumerate(windows, start=1):
            open_[i], close[i] = a, b
    svc = np.zeros(n + 1) if service is None else np.concatenate([[0.0], service])
    d = np.concatenate([[0.0], np.asarray(demand, dtype=float)])
    if deviation is None:
        return RoutingProblem(euclid(coords), float(capacity), open_, close, svc, DETERMINISTIC, d)
    dev = np.concatenate([[0.0], np.asarray(deviation, dtype=float)])
    return RoutingProblem(euclid(coords), float(capacity), open_, close, svc, ROBUST, d, dev, gamma)


def matrix_problem(travel, demand, capacity, **kw):
    """Problem on an explicit travel matrix with no time windows."""
    n = len(travel) - 1
    p = toy_problem([(0, 0)] * (n + 1), demand, capacity, **kw)
    return RoutingProblem(np.asarray(travel, dtype=float), p.capacity, p.tw_open, p.tw_close, p.service,
                          p.mode, p.demand, p.deviation, p.gamma)


def lp_toy(robust: bool) -> RoutingProblem:
    """Three-customer problem behind the golden LP files."""
    coords = [(0, 0), (3, 4), (6, 0), (0, 5)]
    kw = dict(deviation=[2, 1, 3], gamma=1) if robust else {}
    return toy_problem(coords, [4, 3, 5], 10, windows=[(0, 40), (5, 30), (0, 50)], service=[2, 2, 1],
                       horizon=60, **kw)


# criterion number -> (passed, detail); printed in the terminal summary
ACCEPTANCE = {}


def report(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}")
