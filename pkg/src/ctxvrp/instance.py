"""Solomon benchmark instances, feature augmentation and the demand generator."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import rng as rngmod

MIXTURE_MODES = np.array([-10.0, -5.0, 0.0, 5.0, 10.0])
MAX_REJECTIONS = 10_000
N_FEATURES = 6
# history draws are taken as a prefix of this many, so n=1 ⊂ n=10 ⊂ n=30
HISTORY_POOL = 30
SETTINGS = ("all", "half", "quar")
OBS_COUNTS = (1, 10, 30)


class SolomonFormatError(ValueError):
    def __init__(self, lineno: int | None, message: str):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


class Node(NamedTuple):
    id: int
    x: float
    y: float
    demand: float
    tw_open: float
    tw_close: float
    service: float


@dataclass(frozen=True)
class SolomonInstance:
    name: str
    listed_vehicle_count: int
    capacity: float
    nodes: tuple[Node, ...]

    def __post_init__(self):
        if not self.nodes or self.nodes[0].id != 0:
            raise ValueError("node 0 (depot) must come first")
        for k, node in enumerate(self.nodes):
            if node.id != k:
                raise ValueError(f"node ids must be contiguous 0..n, found {node.id} at position {k}")
            if node.tw_open > node.tw_close:
                raise ValueError(f"node {k}: tw_open > tw_close")
        depot = self.nodes[0]
        if depot.demand != 0 or depot.service != 0:
            raise ValueError("depot must have zero demand and zero service time")
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")

    @property
    def n_customers(self) -> int:
        return len(self.nodes) - 1

    @property
    def customers(self) -> range:
        return range(1, len(self.nodes))

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(node, name) for node in self.nodes], dtype=float)


def _numbers(tokens: list[str], lineno: int) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError:
        bad = next(t for t in tokens if not _is_number(t))
        raise SolomonFormatError(lineno, f"non-numeric field {bad!r}") from None


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def parse_solomon(text: str) -> SolomonInstance:
    """Parse the classic Solomon VRPTW text format.

    The layout is a name line, a ``VEHICLE`` section whose numeric row holds
    the vehicle count and capacity, then a ``CUSTOMER`` section with one row
    of seven numbers per node (depot first).
    """
    lines = [(k + 1, raw.split()) for k, raw in enumerate(text.splitlines())]
    lines = [(k, toks) for k, toks in lines if toks]
    if not lines:
        raise SolomonFormatError(None, "empty input")

    name = " ".join(lines[0][1])
    pos = 1
    while pos < len(lines) and lines[pos][1][0].upper() != "VEHICLE":
        pos += 1
    if pos == len(lines):
        raise SolomonFormatError(lines[0][0], "missing VEHICLE section")
    pos += 1
    # skip the "NUMBER CAPACITY" caption
    while pos < len(lines) and not _is_number(lines[pos][1][0]):
        if lines[pos][1][0].upper() == "CUSTOMER":
            break
        pos += 1
    if pos == len(lines) or not _is_number(lines[pos][1][0]):
        lineno = lines[min(pos, len(lines) - 1)][0]
        raise SolomonFormatError(lineno, "malformed header: expected vehicle count and capacity")
    lineno, toks = lines[pos]
    if len(toks) != 2:
        raise SolomonFormatError(lineno, f"malformed header: expected 2 fields, got {len(toks)}")
    count, capacity = _numbers(toks, lineno)
    if capacity <= 0 or count != int(count):
        raise SolomonFormatError(lineno, "malformed header: bad vehicle count or capacity")
    pos += 1

    while pos < len(lines) and lines[pos][1][0].upper() != "CUSTOMER":
        pos += 1
    if pos == len(lines):
        raise SolomonFormatError(lines[-1][0], "missing CUSTOMER section")
    pos += 1
    while pos < len(lines) and not _is_number(lines[pos][1][0]):
        pos += 1

    nodes: list[Node] = []
    seen: dict[int, int] = {}
    for lineno, toks in lines[pos:]:
        if len(toks) != 7:
            raise SolomonFormatError(lineno, f"expected 7 fields, got {len(toks)}")
        vals = _numbers(toks, lineno)
        if vals[0] != int(vals[0]):
            raise SolomonFormatError(lineno, f"non-integer node id {toks[0]!r}")
        nid = int(vals[0])
        if nid in seen:
            raise SolomonFormatError(lineno, f"duplicate node id {nid} (first on line {seen[nid]})")
        seen[nid] = lineno
        if not nodes and nid != 0:
            raise SolomonFormatError(lineno, "missing depot row (first node must have id 0)")
        if nid != len(nodes):
            raise SolomonFormatError(lineno, f"node ids must be contiguous, expected {len(nodes)}, got {nid}")
        if vals[4] > vals[5]:
            raise SolomonFormatError(lineno, "ready time exceeds due date")
        nodes.append(Node(nid, *vals[1:]))
    if not nodes:
        raise SolomonFormatError(lines[-1][0], "missing depot row")
    if nodes[0].demand != 0 or nodes[0].service != 0:
        raise SolomonFormatError(seen[0], "depot must have zero demand and service time")
    return SolomonInstance(name, int(count), capacity, tuple(nodes))


def read_solomon(path) -> SolomonInstance:
    with open(path) as fh:
        return parse_solomon(fh.read())


def build_travel_matrix(instance: SolomonInstance) -> np.ndarray:
    """Exact Euclidean distances; used as both travel cost and travel time."""
    xy = np.column_stack([instance.column("x"), instance.column("y")])
    diff = xy[:, None, :] - xy[None, :, :]
    matrix = np.sqrt((diff**2).sum(axis=-1))
    matrix.flags.writeable = False
    return matrix


def mixture_weights(features) -> np.ndarray:
    """Softmax of features 1..5; feature 0 (nominal demand) does not enter."""
    z = np.asarray(features, dtype=float)[1:6]
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass(frozen=True, eq=False)
class AugmentedInstance:
    base: SolomonInstance
    features: np.ndarray  # row i-1 belongs to customer i
    mixture_weights: np.ndarray
    seed: int
    original_capacity: float

    def __post_init__(self):
        n = self.base.n_customers
        if self.features.shape != (n, N_FEATURES) or self.mixture_weights.shape != (n, 5):
            raise ValueError("feature / weight arrays do not match the customer count")
        if n and (self.features[:, 1:].min() < 0 or self.features[:, 1:].max() > 1):
            raise ValueError("features 1..5 must lie in [0, 1]")
        if n and (self.mixture_weights.min() <= 0 or np.abs(self.mixture_weights.sum(1) - 1).max() > 1e-12):
            raise ValueError("mixture weights must be positive and sum to 1")
        self.features.flags.writeable = False
        self.mixture_weights.flags.writeable = False

    @property
    def name(self) -> str:
        return self.base.name

    @property
    def capacity(self) -> float:
        return self.base.capacity

    @property
    def n_customers(self) -> int:
        return self.base.n_customers

    def feature(self, customer: int) -> np.ndarray:
        return self.features[customer - 1]

    def __eq__(self, other):
        if not isinstance(other, AugmentedInstance):
            return NotImplemented
        return to_json(self) == to_json(other)


def augment(instance: SolomonInstance, seed: int) -> AugmentedInstance:
    n = instance.n_customers
    features = np.empty((n, N_FEATURES))
    for i in instance.customers:
        features[i - 1, 0] = instance.nodes[i].demand
        features[i - 1, 1:] = rngmod.stream(seed, rngmod.FEATURES, i).random(5)
    weights = np.array([mixture_weights(f) for f in features]).reshape(n, 5)
    base = SolomonInstance(instance.name, instance.listed_vehicle_count, instance.capacity / 2, instance.nodes)
    return AugmentedInstance(base, features, weights, int(seed), instance.capacity)


def sample_demand(aug: AugmentedInstance, customer: int, rng: np.random.Generator) -> float:
    """One draw of the truncated five-mode mixture for ``customer``."""
    f0 = aug.features[customer - 1, 0]
    cdf = np.cumsum(aug.mixture_weights[customer - 1])
    for _ in range(MAX_REJECTIONS):
        k = min(int(np.searchsorted(cdf, rng.random(), side="right")), 4)
        value = f0 + MIXTURE_MODES[k] + rng.standard_normal()
        if value >= 0:
            return float(value)
    raise RuntimeError(f"customer {customer}: rejection sampling exceeded {MAX_REJECTIONS} attempts")


def sample_demands(aug: AugmentedInstance, customer: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorised version of :func:`sample_demand` returning ``size`` draws."""
    f0 = aug.features[customer - 1, 0]
    cdf = np.cumsum(aug.mixture_weights[customer - 1])
    out = np.empty(size)
    todo = np.arange(size)
    for _ in range(MAX_REJECTIONS):
        if todo.size == 0:
            return out
        k = np.minimum(np.searchsorted(cdf, rng.random(todo.size), side="right"), 4)
        values = f0 + MIXTURE_MODES[k] + rng.standard_normal(todo.size)
        ok = values >= 0
        out[todo[ok]] = values[ok]
        todo = todo[~ok]
    if todo.size:
        raise RuntimeError(f"customer {customer}: rejection sampling exceeded {MAX_REJECTIONS} attempts")
    return out


def truncated_mixture_mean(aug: AugmentedInstance, customer: int) -> float:
    """Analytic mean of the truncated mixture (normal components cut at 0)."""
    from scipy.stats import norm

    f0 = aug.features[customer - 1, 0]
    p = aug.mixture_weights[customer - 1]
    mu = f0 + MIXTURE_MODES
    mass = norm.sf(-mu)  # P(component >= 0)
    partial = mu * mass + norm.pdf(mu)  # E[X; X >= 0] for X ~ N(mu, 1)
    return float((p * partial).sum() / (p * mass).sum())


@dataclass(frozen=True)
class DemandHistory:
    setting: str
    n: int
    seed: int
    values: dict  # customer id -> tuple of observations (empty when unobserved)
    features: dict  # customer id -> feature tuple, for every customer of the source instance

    def observed(self) -> list[int]:
        return [i for i, v in sorted(self.values.items()) if v]

    def dataset(self) -> tuple[np.ndarray, np.ndarray]:
        """Aggregated ``(features, demand)`` pairs over all observed customers."""
        rows = [(self.features[i], d) for i in self.observed() for d in self.values[i]]
        if not rows:
            return np.empty((0, N_FEATURES)), np.empty(0)
        X = np.array([r[0] for r in rows], dtype=float)
        y = np.array([r[1] for r in rows], dtype=float)
        return X, y

    @property
    def record_count(self) -> int:
        return sum(len(v) for v in self.values.values())


def history_customers(n_customers: int, setting: str) -> range:
    """Customers (by original id) that carry a history under ``setting``."""
    if setting == "all":
        return range(1, n_customers + 1)
    divisor = {"half": 2, "quar": 4}.get(setting)
    if divisor is None:
        raise ValueError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    if n_customers % divisor:
        raise ValueError(f"setting {setting!r} needs a customer count divisible by {divisor}, got {n_customers}")
    return range(n_customers - n_customers // divisor + 1, n_customers + 1)


def generate_history(aug: AugmentedInstance, setting: str, n: int, seed: int) -> DemandHistory:
    if n < 1:
        raise ValueError("observation count must be >= 1")
    with_history = set(history_customers(aug.n_customers, setting))
    values = {}
    for i in aug.base.customers:
        if i in with_history:
            draws = sample_demands(aug, i, max(n, HISTORY_POOL), rngmod.stream(seed, rngmod.HISTORY, i))
            values[i] = tuple(float(v) for v in draws[:n])
        else:
            values[i] = ()
    features = {i: tuple(float(v) for v in aug.feature(i)) for i in aug.base.customers}
    return DemandHistory(setting, n, int(seed), values, features)


def take_first(aug: AugmentedInstance, m: int) -> AugmentedInstance:
    if not 1 <= m <= aug.n_customers:
        raise ValueError(f"m must be in 1..{aug.n_customers}, got {m}")
    return select_customers(aug, range(1, m + 1))


def select_customers(aug: AugmentedInstance, ids) -> AugmentedInstance:
    """Sub-instance on the given customers, renumbered 1..m in the order given."""
    ids = [int(i) for i in ids]
    if len(set(ids)) != len(ids) or not all(1 <= i <= aug.n_customers for i in ids):
        raise ValueError("customer ids must be distinct and within the instance")
    b = aug.base
    nodes = (b.nodes[0],) + tuple(b.nodes[i]._replace(id=k) for k, i in enumerate(ids, start=1))
    base = SolomonInstance(b.name, b.listed_vehicle_count, b.capacity, nodes)
    rows = [i - 1 for i in ids]
    return AugmentedInstance(base, aug.features[rows].copy(), aug.mixture_weights[rows].copy(), aug.seed,
                             aug.original_capacity)


# -- JSON -------------------------------------------------------------------

def to_json(aug: AugmentedInstance) -> str:
    doc = {
        "name": aug.name,
        "listed_vehicle_count": aug.base.listed_vehicle_count,
        "original_capacity": aug.original_capacity,
        "capacity": aug.capacity,
        "seed": aug.seed,
        "nodes": [node._asdict() for node in aug.base.nodes],
        "features": aug.features.tolist(),
        "mixture_weights": aug.mixture_weights.tolist(),
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def from_json(text: str) -> AugmentedInstance:
    doc = json.loads(text)
    nodes = tuple(Node(**node) for node in doc["nodes"])
    base = SolomonInstance(doc["name"], doc["listed_vehicle_count"], doc["capacity"], nodes)
    n = len(nodes) - 1
    features = np.array(doc["features"], dtype=float).reshape(n, N_FEATURES)
    weights = np.array(doc["mixture_weights"], dtype=float).reshape(n, 5)
    return AugmentedInstance(base, features, weights, doc["seed"], doc["original_capacity"])


def history_to_json(history: DemandHistory) -> str:
    doc = {
        "setting": history.setting,
        "n": history.n,
        "seed": history.seed,
        "values": {str(i): list(v) for i, v in sorted(history.values.items())},
        "features": {str(i): list(f) for i, f in sorted(history.features.items())},
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def history_from_json(text: str) -> DemandHistory:
    doc = json.loads(text)
    return DemandHistory(
        doc["setting"], doc["n"], doc["seed"],
        {int(i): tuple(v) for i, v in doc["values"].items()},
        {int(i): tuple(f) for i, f in doc["features"].items()},
    )


def load_instance(path) -> AugmentedInstance:
    """Read an augmented-instance JSON document."""
    with open(path) as fh:
        return from_json(fh.read())
