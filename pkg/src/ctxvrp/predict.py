"""Demand predictors: individual (per-customer), linear and one-hidden-layer MLP.

Contextual models are trained full-batch with Adam on either squared error
(mean targets) or the pinball loss (quantile targets). Features and the target
are z-scored with training statistics; the pinball and squared losses are
positively homogeneous, so scaling the target does not move the minimiser.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .instance import AugmentedInstance, DemandHistory

QUANTILE_GRID = tuple(round(0.50 + 0.05 * k, 2) for k in range(10))
HIDDEN = 10
MIN_INDIVIDUAL_OBS = 2  # per-customer estimates need more than one observation


class ModelUnavailable(Exception):
    """The requested predictor cannot be built from the available history."""


@dataclass(frozen=True)
class PredictionTarget:
    kind: str  # "mean" or "quantile"
    beta: float | None = None

    def __post_init__(self):
        if self.kind == "mean":
            if self.beta is not None:
                raise ValueError("mean target takes no beta")
        elif self.kind == "quantile":
            if self.beta is None or not 0 < self.beta < 1:
                raise ValueError(f"quantile target needs beta in (0, 1), got {self.beta}")
        else:
            raise ValueError(f"unknown target kind {self.kind!r}")

    @classmethod
    def mean(cls) -> PredictionTarget:
        return cls("mean")

    @classmethod
    def quantile(cls, beta: float) -> PredictionTarget:
        return cls("quantile", float(beta))

    @property
    def label(self) -> str:
        return "M" if self.kind == "mean" else f"{round(self.beta * 100):d}"

    @classmethod
    def from_label(cls, label: str) -> PredictionTarget:
        return cls.mean() if label == "M" else cls.quantile(int(label) / 100)


# -- losses and empirical estimators -----------------------------------------

def pinball_loss(prediction: float, actual: float, beta: float) -> float:
    """Tilted loss: under-prediction costs ``beta`` per unit, over-prediction ``1 - beta``.

    Oriented so that its minimiser is the beta-quantile.
    """
    u = actual - prediction
    return max(beta * u, (beta - 1) * u)


def empirical_quantile(values, beta: float) -> float:
    """Lower sample quantile: the ceil(beta*n)-th order statistic.

    It minimises the summed pinball loss; when the minimiser is an interval
    this is its left end.
    """
    v = sorted(values)
    if not v:
        raise ValueError("empirical_quantile of an empty sample")
    # round() guards against beta*n landing a hair above an integer
    rank = max(1, math.ceil(round(beta * len(v), 9)))
    return float(v[rank - 1])


def empirical_mean(values) -> float:
    v = list(values)
    if not v:
        raise ValueError("empirical_mean of an empty sample")
    return float(sum(v) / len(v))


def _loss_and_dpred(q: np.ndarray, y: np.ndarray, target: PredictionTarget) -> tuple[float, np.ndarray]:
    r = q - y
    n = len(y)
    if target.kind == "mean":
        return float(np.mean(r * r)), 2.0 * r / n
    beta = target.beta
    u = -r
    loss = np.maximum(beta * u, (beta - 1) * u)
    # kink (u == 0) takes the beta branch, d(beta*u)/dq = -beta
    slope = np.where(u >= 0, -beta, 1.0 - beta)
    return float(loss.mean()), slope / n


# -- models ------------------------------------------------------------------

@dataclass(frozen=True)
class Normalization:
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0

    @classmethod
    def identity(cls, n_features: int = 6) -> Normalization:
        return cls(np.zeros(n_features), np.ones(n_features))

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray) -> Normalization:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd > 1e-12, sd, 1.0)
        ysd = float(y.std())
        return cls(mu, sd, float(y.mean()), ysd if ysd > 1e-12 else 1.0)

    def features(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.feature_mean) / self.feature_std

    def to_dict(self) -> dict:
        return {
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Normalization:
        return cls(np.array(d["feature_mean"]), np.array(d["feature_std"]), d["target_mean"], d["target_std"])


@dataclass(frozen=True, eq=False)
class LinearModel:
    intercept: float
    coef: np.ndarray
    normalization: Normalization
    target: PredictionTarget

    def raw(self, X) -> np.ndarray:
        z = self.normalization.features(np.atleast_2d(X))
        out = self.intercept + z @ self.coef
        return self.normalization.target_mean + self.normalization.target_std * out

    def params(self) -> dict:
        return {"intercept": np.array(self.intercept), "coef": np.asarray(self.coef)}


@dataclass(frozen=True, eq=False)
class MlpModel:
    hidden_weights: np.ndarray  # (HIDDEN, 6)
    hidden_bias: np.ndarray
    output_weights: np.ndarray
    output_bias: float
    normalization: Normalization
    target: PredictionTarget

    def raw(self, X) -> np.ndarray:
        z = self.normalization.features(np.atleast_2d(X))
        params = self.params()
        q, _ = _mlp_forward(params, z)
        return self.normalization.target_mean + self.normalization.target_std * q

    def params(self) -> dict:
        return {
            "W1": np.asarray(self.hidden_weights),
            "b1": np.asarray(self.hidden_bias),
            "w2": np.asarray(self.output_weights),
            "b2": np.array(self.output_bias),
        }


def predict_value(model: LinearModel | MlpModel, features) -> float:
    """Model output for one feature vector, clamped at zero."""
    return max(0.0, float(model.raw(features)[0]))


def predict_many(model: LinearModel | MlpModel, X) -> np.ndarray:
    return np.maximum(model.raw(X), 0.0)


# -- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainerConfig:
    seed: int = 0
    step_size: float = 0.01
    max_iter: int = 1000
    patience: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainingTrace:
    losses: list = field(default_factory=list)
    best_loss: float = math.inf
    best_iteration: int = 0


def _adam(loss_and_grad, params: dict, config: TrainerConfig, trace: TrainingTrace) -> dict:
    params = {k: np.array(v, dtype=float) for k, v in params.items()}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    best = {k: p.copy() for k, p in params.items()}
    stale = 0
    for it in range(config.max_iter):
        loss, grads = loss_and_grad(params)
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss at iteration {it}")
        trace.losses.append(loss)
        if loss < trace.best_loss:
            trace.best_loss, trace.best_iteration = loss, it
            best = {k: p.copy() for k, p in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
        t = it + 1
        for k in params:
            g = grads[k]
            m[k] = config.beta1 * m[k] + (1 - config.beta1) * g
            v[k] = config.beta2 * v[k] + (1 - config.beta2) * g * g
            mhat = m[k] / (1 - config.beta1**t)
            vhat = v[k] / (1 - config.beta2**t)
            params[k] = params[k] - config.step_size * mhat / (np.sqrt(vhat) + config.eps)
    return best


def _check_dataset(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise ValueError("training data must be a non-empty (features, demand) set")
    return X, y


def linear_loss_and_grad(params: dict, Z: np.ndarray, y: np.ndarray, target: PredictionTarget):
    q = params["intercept"] + Z @ params["coef"]
    loss, dq = _loss_and_dpred(q, y, target)
    return loss, {"intercept": np.array(dq.sum()), "coef": Z.T @ dq}


def train_linear(X, y, target: PredictionTarget, config: TrainerConfig = TrainerConfig(),
                 trace: TrainingTrace | None = None) -> LinearModel:
    X, y = _check_dataset(X, y)
    norm = Normalization.fit(X, y)
    Z, ys = norm.features(X), (y - norm.target_mean) / norm.target_std
    init = {"intercept": np.array(0.0), "coef": np.zeros(X.shape[1])}
    trace = trace if trace is not None else TrainingTrace()
    best = _adam(lambda p: linear_loss_and_grad(p, Z, ys, target), init, config, trace)
    return LinearModel(float(best["intercept"]), best["coef"], norm, target)


def _mlp_forward(params: dict, Z: np.ndarray):
    H = Z @ params["W1"].T + params["b1"]
    A = np.maximum(H, 0.0)
    return A @ params["w2"] + params["b2"], (H, A)


def mlp_loss_and_grad(params: dict, Z: np.ndarray, y: np.ndarray, target: PredictionTarget):
    """Loss and exact backpropagated gradient for the rectifier network."""
    q, (H, A) = _mlp_forward(params, Z)
    loss, dq = _loss_and_dpred(q, y, target)
    dH = np.outer(dq, params["w2"]) * (H > 0)
    return loss, {
        "W1": dH.T @ Z,
        "b1": dH.sum(axis=0),
        "w2": A.T @ dq,
        "b2": np.array(dq.sum()),
    }


def init_mlp_params(n_features: int, seed: int, hidden: int = HIDDEN) -> dict:
    """Glorot-uniform weights, zero biases, keyed by ``seed``."""
    g = rngmod.stream(seed, rngmod.TRAIN_INIT)
    lim1 = math.sqrt(6.0 / (n_features + hidden))
    lim2 = math.sqrt(6.0 / (hidden + 1))
    return {
        "W1": g.uniform(-lim1, lim1, size=(hidden, n_features)),
        "b1": np.zeros(hidden),
        "w2": g.uniform(-lim2, lim2, size=hidden),
        "b2": np.array(0.0),
    }


def train_mlp(X, y, target: PredictionTarget, config: TrainerConfig = TrainerConfig(),
              trace: TrainingTrace | None = None) -> MlpModel:
    X, y = _check_dataset(X, y)
    norm = Normalization.fit(X, y)
    Z, ys = norm.features(X), (y - norm.target_mean) / norm.target_std
    trace = trace if trace is not None else TrainingTrace()
    init = init_mlp_params(X.shape[1], config.seed)
    best = _adam(lambda p: mlp_loss_and_grad(p, Z, ys, target), init, config, trace)
    return MlpModel(best["W1"], best["b1"], best["w2"], float(best["b2"]), norm, target)


def training_loss(model: LinearModel | MlpModel, X, y) -> float:
    """Loss of ``model`` on the data, in original demand units (no clamping)."""
    loss, _ = _loss_and_dpred(model.raw(np.asarray(X, dtype=float)), np.asarray(y, dtype=float), model.target)
    return loss


# -- serialisation -----------------------------------------------------------

def model_to_json(model: LinearModel | MlpModel) -> str:
    kind = "linear" if isinstance(model, LinearModel) else "mlp"
    doc = {
        "kind": kind,
        "target": {"kind": model.target.kind, "beta": model.target.beta},
        "normalization": model.normalization.to_dict(),
        "params": {k: np.asarray(v).tolist() for k, v in model.params().items()},
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def model_from_json(text: str) -> LinearModel | MlpModel:
    doc = json.loads(text)
    target = PredictionTarget(doc["target"]["kind"], doc["target"]["beta"])
    norm = Normalization.from_dict(doc["normalization"])
    p = doc["params"]
    if doc["kind"] == "linear":
        return LinearModel(float(p["intercept"]), np.array(p["coef"]), norm, target)
    if doc["kind"] == "mlp":
        return MlpModel(np.array(p["W1"]), np.array(p["b1"]), np.array(p["w2"]), float(p["b2"]), norm, target)
    raise ValueError(f"unknown model kind {doc['kind']!r}")


# -- prediction assembly -----------------------------------------------------

@dataclass(frozen=True)
class PredictorSpec:
    delta: str  # "I", "L" or "N"
    targets: tuple  # one PredictionTarget (deterministic) or (base, worst)

    def __post_init__(self):
        if self.delta not in ("I", "L", "N"):
            raise ValueError(f"unknown predictor {self.delta!r}")
        if len(self.targets) not in (1, 2):
            raise ValueError("expected one target (deterministic) or two (robust)")

    @property
    def mode(self) -> str:
        return "deterministic" if len(self.targets) == 1 else "robust"


@dataclass(frozen=True, eq=False)
class DemandPrediction:
    mode: str
    customers: tuple  # customer ids, aligned with the arrays below
    demand: np.ndarray | None = None  # deterministic point prediction
    base: np.ndarray | None = None
    worst: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        arrays = [self.demand] if self.mode == "deterministic" else [self.base, self.worst]
        if self.mode not in ("deterministic", "robust") or any(a is None for a in arrays):
            raise ValueError("prediction arrays do not match the mode")
        for a in arrays:
            if len(a) != len(self.customers) or np.min(a, initial=0.0) < 0:
                raise ValueError("predictions must be non-negative and one per customer")
        if self.mode == "robust" and np.any(self.worst < self.base):
            raise ValueError("robust worst-case demand below base demand")

    def to_json(self) -> str:
        doc = {"mode": self.mode, "customers": list(self.customers), "provenance": self.provenance}
        for key in ("demand", "base", "worst"):
            arr = getattr(self, key)
            if arr is not None:
                doc[key] = np.asarray(arr).tolist()
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> DemandPrediction:
        doc = json.loads(text)
        arrays = {k: np.array(doc[k], dtype=float) for k in ("demand", "base", "worst") if k in doc}
        return cls(doc["mode"], tuple(doc["customers"]), provenance=doc.get("provenance", ""), **arrays)


def fit_model(delta: str, target: PredictionTarget, history: DemandHistory,
              config: TrainerConfig = TrainerConfig()) -> LinearModel | MlpModel:
    X, y = history.dataset()
    if len(y) == 0:
        raise ModelUnavailable("no demand history to train a contextual model")
    if delta == "L":
        return train_linear(X, y, target, config)
    if delta == "N":
        return train_mlp(X, y, target, config)
    raise ValueError(f"no trainable model for predictor {delta!r}")


def _individual(values, target: PredictionTarget) -> float:
    if target.kind == "mean":
        return empirical_mean(values)
    return empirical_quantile(values, target.beta)


def predict_targets(spec: PredictorSpec, aug: AugmentedInstance, history: DemandHistory,
                    config: TrainerConfig = TrainerConfig(), models: dict | None = None) -> list[np.ndarray]:
    """Raw per-customer predictions, one array per target of ``spec``."""
    customers = list(aug.base.customers)
    out = []
    for target in spec.targets:
        if spec.delta == "I":
            missing = [i for i in customers if len(history.values.get(i, ())) < MIN_INDIVIDUAL_OBS]
            if missing:
                raise ModelUnavailable(
                    f"model unavailable: customers with fewer than {MIN_INDIVIDUAL_OBS} observations, "
                    f"e.g. {missing[:5]}")
            out.append(np.array([max(0.0, _individual(history.values[i], target)) for i in customers]))
            continue
        key = (spec.delta, target)
        model = models.get(key) if models is not None else None
        if model is None:
            model = fit_model(spec.delta, target, history, config)
            if models is not None:
                models[key] = model
        out.append(predict_many(model, aug.features))
    return out


def build_predictions(spec: PredictorSpec, aug: AugmentedInstance, history: DemandHistory,
                      config: TrainerConfig = TrainerConfig(), models: dict | None = None) -> DemandPrediction:
    values = predict_targets(spec, aug, history, config, models)
    return assemble(spec, tuple(aug.base.customers), values)


def assemble(spec: PredictorSpec, customers: tuple, values: list) -> DemandPrediction:
    provenance = f"{spec.delta}:" + "-".join(t.label for t in spec.targets)
    if spec.mode == "deterministic":
        return DemandPrediction("deterministic", customers, demand=np.asarray(values[0], dtype=float),
                                provenance=provenance)
    base = np.asarray(values[0], dtype=float)
    # quantile crossing repair
    worst = np.maximum(base, np.asarray(values[1], dtype=float))
    return DemandPrediction("robust", customers, base=base, worst=worst, provenance=provenance)
