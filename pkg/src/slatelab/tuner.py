"""Ensemble-weight search maximizing the sum of per-objective AUCs."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, DegenerateLabelsError
from .labels import FSTAGE_OBJECTIVES, ValidationSet
from .predictor import PredictorModel, auc, predict_batch
from .ranker import EnsembleWeights, item_values

METHODS = ("random", "coordinate", "bayes_like")
PARAMS = ("w_vtr", "w_cvr", "w_sdr")
DEFAULT_PROBE = {"w_vtr": 1.0, "w_cvr": 1.0, "w_sdr": 1.0, "alpha": 1.0}


@dataclass(frozen=True)
class TuneSpec:
    search_space: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: {p: (0.0, 1.0) for p in PARAMS})
    budget: int = 200
    method: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        for name, (lo, hi) in self.search_space.items():
            if name not in PARAMS + ("alpha",):
                raise ConfigError(f"unknown tuning parameter {name!r}")
            if not lo <= hi:
                raise ConfigError(f"empty range for {name}: [{lo}, {hi}]")
            if lo < 0:
                raise ConfigError(f"{name} range must be non-negative")

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.search_space.get(p, (DEFAULT_PROBE[p],) * 2)[0] for p in PARAMS])
        hi = np.array([self.search_space.get(p, (DEFAULT_PROBE[p],) * 2)[1] for p in PARAMS])
        return lo, hi

    @property
    def alpha(self) -> float:
        lo, hi = self.search_space.get("alpha", (1.0, 1.0))
        return float(min(max(DEFAULT_PROBE["alpha"], lo), hi))


@dataclass
class TuneResult:
    best_weights: EnsembleWeights
    best_objective: float
    trace: list[tuple[tuple[float, float, float], float]]
    alpha: float = 1.0

    @property
    def best_raw(self) -> tuple[float, float, float]:
        return max(self.trace, key=lambda t: t[1])[0]

    def trace_jsonl(self) -> str:
        return "".join(json.dumps({"probe": i, "w_vtr": w[0], "w_cvr": w[1], "w_sdr": w[2],
                                   "objective": obj}) + "\n"
                       for i, (w, obj) in enumerate(self.trace))


class _Objective:
    """AUC sum with the model predictions on the validation set computed once."""

    def __init__(self, validation: ValidationSet, model: PredictorModel):
        for obj in FSTAGE_OBJECTIVES:
            y, z = validation.labels[obj], validation.weights[obj]
            live = z > 0
            if not (np.any(y[live] == 1) and np.any(y[live] == 0)):
                raise DegenerateLabelsError(f"validation labels for {obj!r} are degenerate", obj)
        self.validation = validation
        self.scores = predict_batch(model, validation.features, FSTAGE_OBJECTIVES)

    def __call__(self, weights: EnsembleWeights) -> float:
        combined = item_values(self.scores, weights)
        v = self.validation
        return float(sum(auc(combined, v.labels[o], v.weights[o]) for o in FSTAGE_OBJECTIVES))


def tune_objective(weights: EnsembleWeights, validation: ValidationSet, model: PredictorModel) -> float:
    """Sum over vtr, cvr, sdr of the AUC of the combined ensemble score."""
    return _Objective(validation, model)(EnsembleWeights.of(weights))


def _safe(raw: np.ndarray) -> EnsembleWeights | None:
    if raw.max() <= 0:
        return None
    return EnsembleWeights(*map(float, raw))


def _default_probe(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.clip(np.array([DEFAULT_PROBE[p] for p in PARAMS]), lo, hi)


def _random_schedule(spec: TuneSpec) -> np.ndarray:
    lo, hi = spec.box()
    rng = np.random.default_rng([spec.seed, 0x7E])
    probes = lo + (hi - lo) * rng.random((spec.budget, len(PARAMS)))
    probes[0] = _default_probe(lo, hi)
    return probes


def tune(spec: TuneSpec, validation: ValidationSet, model: PredictorModel) -> TuneResult:
    """Evaluate ``spec.budget`` probes; probe 0 is always the (clipped) default weights."""
    objective = _Objective(validation, model)
    trace: list[tuple[tuple[float, float, float], float]] = []

    def evaluate(raw: np.ndarray) -> float:
        w = _safe(raw)
        value = objective(w) if w is not None else float("-inf")
        trace.append((tuple(float(x) for x in raw), value))
        return value

    lo, hi = spec.box()
    if spec.method == "random":
        for raw in _random_schedule(spec):
            evaluate(raw)
    elif spec.method == "coordinate":
        _coordinate(spec, evaluate, lo, hi)
    else:
        _bayes_like(spec, evaluate, lo, hi)

    best_raw, best = max(trace, key=lambda t: t[1])
    best_w = _safe(np.array(best_raw))
    if best_w is None:
        best_w = EnsembleWeights()
    return TuneResult(best_w.normalized(), best, trace, spec.alpha)


def _coordinate(spec: TuneSpec, evaluate, lo: np.ndarray, hi: np.ndarray) -> None:
    """Cyclic coordinate search over a 5-point grid per axis, halving the step each sweep."""
    current = _default_probe(lo, hi)
    best = evaluate(current)
    step = (hi - lo) / 2.0
    used = 1
    while used < spec.budget:
        improved = False
        for d in range(len(PARAMS)):
            for delta in (-1.0, -0.5, 0.5, 1.0):
                if used >= spec.budget:
                    return
                probe = current.copy()
                probe[d] = np.clip(probe[d] + delta * step[d], lo[d], hi[d])
                value = evaluate(probe)
                used += 1
                if value > best:
                    best, current, improved = value, probe, True
        if not improved:
            step = step / 2.0
            if np.all(step < 1e-6):
                step = (hi - lo) / 2.0


def _bayes_like(spec: TuneSpec, evaluate, lo: np.ndarray, hi: np.ndarray) -> None:
    """Random warm-up, then maximize a quadratic surrogate fit to the trace.

    Each step proposes the best of a fixed batch of random points under the
    least-squares quadratic fit; one in four steps is a pure random probe.
    """
    rng = np.random.default_rng([spec.seed, 0xBA7E5])
    dim = len(PARAMS)
    n_warm = min(spec.budget, 2 * (dim + 1) * (dim + 2) // 2)
    xs, ys = [], []
    for i in range(n_warm):
        raw = _default_probe(lo, hi) if i == 0 else lo + (hi - lo) * rng.random(dim)
        xs.append(raw)
        ys.append(evaluate(raw))
    for i in range(n_warm, spec.budget):
        pool = lo + (hi - lo) * rng.random((256, dim))
        if i % 4 == 3:
            raw = pool[0]
        else:
            X = np.array(xs)
            y = np.array(ys)
            finite = np.isfinite(y)
            coef, *_ = np.linalg.lstsq(_quad_features(X[finite]), y[finite], rcond=None)
            raw = pool[int(np.argmax(_quad_features(pool) @ coef))]
        xs.append(raw)
        ys.append(evaluate(raw))


def _quad_features(X: np.ndarray) -> np.ndarray:
    cols = [np.ones(len(X))]
    d = X.shape[1]
    for i in range(d):
        cols.append(X[:, i])
    for i in range(d):
        for j in range(i, d):
            cols.append(X[:, i] * X[:, j])
    return np.stack(cols, axis=1)
