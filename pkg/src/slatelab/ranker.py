"""Point-wise ranking: additive ensemble, immediate E-stage value and
cross-stage look-ahead value."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, InputError, MissingHeadError
from .predictor import ObjectiveScores


@dataclass(frozen=True)
class EnsembleWeights:
    w_vtr: float = 1.0
    w_cvr: float = 1.0
    w_sdr: float = 1.0

    def __post_init__(self):
        ws = self.as_tuple()
        if min(ws) < 0:
            raise ConfigError("ensemble weights must be non-negative")
        if max(ws) <= 0:
            raise ConfigError("at least one ensemble weight must be positive")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_vtr, self.w_cvr, self.w_sdr)

    def normalized(self) -> "EnsembleWeights":
        total = sum(self.as_tuple())
        return EnsembleWeights(*(w / total for w in self.as_tuple()))

    @classmethod
    def of(cls, value) -> "EnsembleWeights":
        if isinstance(value, EnsembleWeights):
            return value
        if isinstance(value, Mapping):
            return cls(**value)
        return cls(*value)


@dataclass(frozen=True)
class RankingConfig:
    n: int = 50
    m: int = 5
    K: int = 5
    lookahead_enabled: bool = False
    lookahead_coefficient: float = 1.0

    def __post_init__(self):
        if not 1 <= self.m <= self.n:
            raise ConfigError("need 1 <= m <= n")
        if not 1 <= self.K <= self.n:
            raise ConfigError("need 1 <= K <= n")
        if self.lookahead_coefficient < 0:
            raise ConfigError("lookahead_coefficient must be non-negative")


@dataclass(frozen=True)
class ScoredCandidate:
    item_id: int
    scores: ObjectiveScores
    value: float
    lookahead_value: float = 0.0


def item_value(scores: ObjectiveScores | Mapping[str, float], weights: EnsembleWeights) -> float:
    s = scores.as_dict() if isinstance(scores, ObjectiveScores) else scores
    try:
        return weights.w_vtr * s["vtr"] + weights.w_cvr * s["cvr"] + weights.w_sdr * s["sdr"]
    except KeyError as exc:
        raise MissingHeadError(exc.args[0]) from None


def item_values(scores: Mapping[str, np.ndarray], weights: EnsembleWeights) -> np.ndarray:
    """Vectorized :func:`item_value`; heads with zero weight may be absent."""
    total = 0.0
    for name, w in zip(("vtr", "cvr", "sdr"), weights.as_tuple()):
        if w == 0:
            continue
        if name not in scores:
            raise MissingHeadError(name)
        total = total + w * np.asarray(scores[name], dtype=np.float64)
    return np.asarray(total, dtype=np.float64)


def top_k(item_ids: Sequence[int], values: Sequence[float], k: int) -> list[int]:
    """Positions of the k largest values, ties to the smaller item id."""
    ids = np.asarray(item_ids)
    vals = np.asarray(values, dtype=np.float64)
    if ids.shape != vals.shape:
        raise InputError("item_ids and values differ in length")
    if len(ids) == 0:
        raise InputError("no candidates")
    if not 1 <= k <= len(ids):
        raise InputError(f"k={k} outside [1, {len(ids)}]")
    return np.lexsort((ids, -vals))[:k].tolist()


def rank_pointwise(item_ids: Sequence[int], scores: Mapping[str, np.ndarray],
                   weights: EnsembleWeights, k: int) -> list[int]:
    """Top-k item ids by ensemble value (descending), ties by ascending id."""
    idx = top_k(item_ids, item_values(scores, weights), k)
    return [int(item_ids[i]) for i in idx]


def lookahead_value(ctr, sdr_star, cvr_star):
    """Expected downstream F-stage conversion of showing an E-stage item."""
    return ctr * sdr_star * cvr_star


def estage_values(scores: Mapping[str, np.ndarray], config: RankingConfig) -> np.ndarray:
    """``cvr_e`` plus, when enabled, the coefficient times the look-ahead value."""
    if "cvr_e" not in scores:
        raise MissingHeadError("cvr_e")
    value = np.asarray(scores["cvr_e"], dtype=np.float64)
    if config.lookahead_enabled:
        for head in ("ctr", "sdr_star", "cvr_star"):
            if head not in scores:
                raise MissingHeadError(head)
        vf = lookahead_value(np.asarray(scores["ctr"]), np.asarray(scores["sdr_star"]),
                             np.asarray(scores["cvr_star"]))
        value = value + config.lookahead_coefficient * vf
    return value


def rank_estage(item_ids: Sequence[int], scores: Mapping[str, np.ndarray],
                config: RankingConfig) -> list[int]:
    idx = top_k(item_ids, estage_values(scores, config), min(config.K, len(item_ids)))
    return [int(item_ids[i]) for i in idx]
