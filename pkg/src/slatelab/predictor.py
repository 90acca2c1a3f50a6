"""Multi-head logistic predictor trained with per-sample weighted BCE.

Every objective gets its own weight table over the shared hashed feature
space plus a bias.  Training runs mini-batch Adagrad over the samples with
positive weight only, so zero-weight samples cannot influence the result.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DegenerateLabelsError, InputError, MissingHeadError
from .features import DEFAULT_DIM, FeatureBatch, FeatureVector
from .labels import OBJECTIVES, TrainingSample

MODEL_VERSION = 1
_MAGIC = b"SLPM\x01"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 4
    l2: float = 1e-4
    batch_size: int = 256
    optimizer: str = "adagrad"
    dim: int = DEFAULT_DIM
    require_both_classes: bool = True

    def __post_init__(self):
        if self.optimizer not in ("adagrad", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0 or self.l2 < 0:
            raise ConfigError("invalid training hyperparameters")

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        if set(data) - known:
            raise ConfigError(f"unknown train keys: {sorted(set(data) - known)}")
        return cls(**data)


@dataclass
class Head:
    weights: np.ndarray
    bias: float = 0.0

    def logits(self, batch: FeatureBatch) -> np.ndarray:
        return (self.weights[batch.ids] * batch.values).sum(axis=1) + self.bias


@dataclass
class PredictorModel:
    heads: dict[str, Head]
    hyper: TrainConfig = field(default_factory=TrainConfig)
    history: list[dict] = field(default_factory=list, compare=False)

    @property
    def dim(self) -> int:
        return self.hyper.dim

    def head(self, objective: str) -> Head:
        try:
            return self.heads[objective]
        except KeyError:
            raise MissingHeadError(objective) from None

    @classmethod
    def zeros(cls, objectives: Iterable[str] = OBJECTIVES, hyper: TrainConfig | None = None):
        hyper = hyper or TrainConfig()
        return cls({o: Head(np.zeros(hyper.dim)) for o in objectives}, hyper)

    # -- persistence ---------------------------------------------------

    def to_dict(self) -> dict:
        heads = {}
        for name in sorted(self.heads):
            h = self.heads[name]
            nz = np.flatnonzero(h.weights)
            heads[name] = {"bias": float(h.bias), "ids": nz.tolist(),
                           "weights": h.weights[nz].tolist()}
        return {"v": MODEL_VERSION, "hyper": asdict(self.hyper), "heads": heads}

    @classmethod
    def from_dict(cls, data: Mapping) -> "PredictorModel":
        if data.get("v") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {data.get('v')!r}")
        hyper = TrainConfig.from_dict(data["hyper"])
        heads = {}
        for name, h in data["heads"].items():
            w = np.zeros(hyper.dim)
            w[np.asarray(h["ids"], dtype=np.int64)] = h["weights"]
            heads[name] = Head(w, float(h["bias"]))
        return cls(heads, hyper)

    def to_bytes(self) -> bytes:
        header = {"v": MODEL_VERSION, "hyper": asdict(self.hyper), "heads": []}
        chunks = []
        for name in sorted(self.heads):
            h = self.heads[name]
            nz = np.flatnonzero(h.weights).astype("<i8")
            header["heads"].append({"name": name, "bias": float(h.bias), "nnz": int(nz.size)})
            chunks.append(nz.tobytes() + h.weights[nz].astype("<f8").tobytes())
        head_bytes = json.dumps(header, sort_keys=True).encode()
        return _MAGIC + struct.pack("<I", len(head_bytes)) + head_bytes + b"".join(chunks)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PredictorModel":
        if not blob.startswith(_MAGIC):
            raise ValueError("not a slatelab model file")
        off = len(_MAGIC)
        (hlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        header = json.loads(blob[off: off + hlen])
        off += hlen
        hyper = TrainConfig.from_dict(header["hyper"])
        heads = {}
        for h in header["heads"]:
            nnz = h["nnz"]
            ids = np.frombuffer(blob, "<i8", nnz, off)
            off += 8 * nnz
            vals = np.frombuffer(blob, "<f8", nnz, off)
            off += 8 * nnz
            w = np.zeros(hyper.dim)
            w[ids] = vals
            heads[h["name"]] = Head(w, h["bias"])
        return cls(heads, hyper)

    def save(self, path: str | Path, fmt: str = "json") -> None:
        path = Path(path)
        if fmt == "json":
            path.write_text(json.dumps(self.to_dict(), sort_keys=True))
        elif fmt == "binary":
            path.write_bytes(self.to_bytes())
        else:
            raise ConfigError(f"unknown model format {fmt!r}")

    @classmethod
    def load(cls, path: str | Path) -> "PredictorModel":
        blob = Path(path).read_bytes()
        if blob.startswith(_MAGIC):
            return cls.from_bytes(blob)
        return cls.from_dict(json.loads(blob))


@dataclass(frozen=True)
class ObjectiveScores:
    vtr: float | None = None
    cvr: float | None = None
    sdr: float | None = None
    ctr: float | None = None
    sdr_star: float | None = None
    cvr_star: float | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise InputError(f"{f.name}={v} is not a probability")

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}


_P_EPS = 1e-15


def sigmoid(x):
    # kept strictly inside (0, 1) so downstream logs and ranks stay finite
    out = 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))
    return np.clip(out, _P_EPS, 1.0 - _P_EPS)


def predict_batch(model: PredictorModel, batch: FeatureBatch,
                  objectives: Sequence[str] | None = None) -> dict[str, np.ndarray]:
    objectives = tuple(model.heads) if objectives is None else objectives
    return {o: sigmoid(model.head(o).logits(batch)) for o in objectives}


def predict(model: PredictorModel, features: FeatureVector,
            objectives: Sequence[str] | None = None) -> ObjectiveScores:
    batch = FeatureBatch.from_vectors([features], width=max(1, len(features.ids)))
    out = predict_batch(model, batch, objectives)
    return ObjectiveScores(**{k: float(v[0]) for k, v in out.items()})


# ---------------------------------------------------------------------------
# loss


def weighted_bce(y: np.ndarray, p: np.ndarray, z: np.ndarray) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.sum(z * (y * np.log(p) + (1 - y) * np.log(1 - p))))


def loss_and_grad(head: Head, batch: FeatureBatch, y: np.ndarray, z: np.ndarray,
                  l2: float = 0.0) -> tuple[float, np.ndarray, float]:
    """Loss sum_i z_i * BCE(y_i, sigmoid(s_i)) + l2/2 * |w|^2 and its dense gradient."""
    s = head.logits(batch)
    p = sigmoid(s)
    # log(1+e^s) - y*s is the numerically stable BCE on logits
    loss = float(np.sum(z * (np.logaddexp(0.0, s) - y * s))) + 0.5 * l2 * float(head.weights @ head.weights)
    g = z * (p - y)
    grad = np.zeros_like(head.weights)
    np.add.at(grad, batch.ids.ravel(), (g[:, None] * batch.values).ravel())
    grad += l2 * head.weights
    return loss, grad, float(g.sum())


# ---------------------------------------------------------------------------
# training


def _arrays(samples: Sequence[TrainingSample], width: int):
    batch = FeatureBatch.from_vectors([s.features for s in samples], width)
    y = np.array([s.label for s in samples], dtype=np.float64)
    z = np.array([s.weight for s in samples], dtype=np.float64)
    return batch, y, z


def train_head(batch: FeatureBatch, y: np.ndarray, z: np.ndarray, hyper: TrainConfig,
               rng: np.random.Generator, objective: str = "") -> tuple[Head, list[dict]]:
    keep = z > 0
    batch, y, z = batch.take(keep), y[keep], z[keep]
    if hyper.require_both_classes and (y.min(initial=1) > 0 or y.max(initial=0) < 1):
        raise DegenerateLabelsError(
            f"objective {objective!r} needs positive and negative samples with weight > 0",
            objective)
    head = Head(np.zeros(hyper.dim))
    acc = np.zeros(hyper.dim)
    acc_b = 0.0
    lr, l2, eps = hyper.learning_rate, hyper.l2, 1e-8
    n = len(y)
    history = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start: start + hyper.batch_size]
            ids, vals = batch.ids[idx], batch.values[idx]
            s = (head.weights[ids] * vals).sum(axis=1) + head.bias
            g = z[idx] * (sigmoid(s) - y[idx])
            uniq, inv = np.unique(ids.ravel(), return_inverse=True)
            gw = np.bincount(inv, weights=(g[:, None] * vals).ravel(), minlength=uniq.size)
            gw += l2 * head.weights[uniq]
            gb = float(g.sum())
            if hyper.optimizer == "adagrad":
                acc[uniq] += gw * gw
                head.weights[uniq] -= lr * gw / np.sqrt(acc[uniq] + eps)
                acc_b += gb * gb
                head.bias -= lr * gb / math.sqrt(acc_b + eps)
            else:
                head.weights[uniq] -= lr * gw
                head.bias -= lr * gb
        p = sigmoid(head.logits(batch))
        history.append({"objective": objective, "epoch": epoch + 1, "samples": n,
                        "loss": float(weighted_bce(y, p, z) / max(z.sum(), 1e-12))})
    return head, history


def train(samples: Sequence[TrainingSample], hyper: TrainConfig | None = None, seed: int = 0,
          objectives: Sequence[str] | None = None) -> PredictorModel:
    """Fit one head per objective present in ``samples`` (or listed in ``objectives``)."""
    by_obj: dict[str, list[TrainingSample]] = {}
    for s in samples:
        by_obj.setdefault(s.objective, []).append(s)
    width = max((len(s.features.ids) for s in samples), default=1) or 1
    wanted = [o for o in OBJECTIVES if o in by_obj] if objectives is None else list(objectives)
    return train_arrays({o: _arrays(by_obj.get(o, []), width) for o in wanted}, hyper, seed)


def train_arrays(data: Mapping[str, tuple[FeatureBatch, np.ndarray, np.ndarray]],
                 hyper: TrainConfig | None = None, seed: int = 0) -> PredictorModel:
    """Fit one head per ``objective -> (batch, labels, weights)`` entry."""
    hyper = hyper or TrainConfig()
    heads, history = {}, []
    for obj in [o for o in OBJECTIVES if o in data]:
        batch, y, z = data[obj]
        rng = np.random.default_rng([seed, OBJECTIVES.index(obj)])
        heads[obj], hist = train_head(batch, y, z, hyper, rng, obj)
        history.extend(hist)
    return PredictorModel(heads, hyper, history)


# ---------------------------------------------------------------------------
# AUC


def auc(scores: Sequence[float], labels: Sequence[int], weights: Sequence[float] | None = None) -> float:
    """Weighted probability that a random positive outscores a random negative (ties 1/2)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    w = np.ones(len(s)) if weights is None else np.asarray(weights, dtype=np.float64)
    if not (len(s) == len(y) == len(w)):
        raise InputError("scores, labels and weights differ in length")
    keep = w > 0
    s, y, w = s[keep], y[keep], w[keep]
    pos = y == 1
    w_pos, w_neg = w[pos].sum(), w[~pos].sum()
    if w_pos <= 0 or w_neg <= 0:
        raise DegenerateLabelsError("AUC needs weighted positives and negatives")
    order = np.argsort(s, kind="mergesort")
    s, pos, w = s[order], pos[order], w[order]
    uniq, start = np.unique(s, return_index=True)
    wp = np.add.reduceat(np.where(pos, w, 0.0), start)
    wn = np.add.reduceat(np.where(pos, 0.0, w), start)
    neg_below = np.concatenate([[0.0], np.cumsum(wn)[:-1]])
    return float(np.sum(wp * (neg_below + 0.5 * wn)) / (w_pos * w_neg))
