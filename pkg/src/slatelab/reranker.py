"""Slate evaluation by exposure-discounted value, exact enumeration and beam search.

A slate's value is ``V = sum_i p[i] * v[i]`` where ``p[i]`` is the product of
the swipe-down probabilities of the items placed before position ``i``.
Ties between slates are broken toward the lexicographically smallest item-id
sequence everywhere, so results are reproducible.

All three evaluators accumulate ``V`` with the same floating-point recurrence
(``V += p * v``; ``p *= sdr``) so that equal slates get bit-equal values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Mapping, Sequence

import numpy as np

from .errors import CapExceededError, ConfigError, InputError
from .predictor import ObjectiveScores
from .ranker import EnsembleWeights, item_value

DEFAULT_CAP = 10**6


@dataclass(frozen=True)
class BeamConfig:
    beam_width: int = 25
    m: int = 5
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.beam_width < 1 or self.m < 1:
            raise ConfigError("beam_width and m must be >= 1")


@dataclass(frozen=True)
class SlateEvaluation:
    permutation: tuple[int, ...]
    exposure_probs: tuple[float, ...]
    sequence_value: float


def exposure_probs(sdr_by_position: Sequence[float]) -> list[float]:
    out = []
    p = 1.0
    for s in sdr_by_position:
        if not 0.0 <= s <= 1.0:
            raise InputError(f"sdr {s} outside [0, 1]")
        out.append(p)
        p = p * s
    return out


def _values(items: Sequence[int], scores: Mapping[int, ObjectiveScores],
            weights: EnsembleWeights) -> tuple[np.ndarray, np.ndarray]:
    try:
        v = np.array([item_value(scores[i], weights) for i in items], dtype=np.float64)
        sdr = np.array([scores[i].sdr for i in items], dtype=np.float64)
    except KeyError as exc:
        raise InputError(f"item {exc.args[0]} has no scores") from None
    return v, sdr


def sequence_value(permutation: Sequence[int], scores: Mapping[int, ObjectiveScores],
                   weights: EnsembleWeights) -> SlateEvaluation:
    perm = tuple(int(i) for i in permutation)
    if len(set(perm)) != len(perm):
        raise InputError("duplicate items in permutation")
    v, sdr = _values(perm, scores, weights)
    p = exposure_probs(sdr.tolist())
    total = 0.0
    for pi, vi in zip(p, v.tolist()):
        total = total + pi * vi
    return SlateEvaluation(perm, tuple(p), total)


def _evaluation(ids: np.ndarray, order: Sequence[int], v: np.ndarray, sdr: np.ndarray) -> SlateEvaluation:
    p = exposure_probs(sdr[list(order)].tolist())
    total = 0.0
    for pi, vi in zip(p, v[list(order)].tolist()):
        total = total + pi * vi
    return SlateEvaluation(tuple(int(ids[i]) for i in order), tuple(p), total)


def _sorted_inputs(candidates: Sequence[int], v: np.ndarray, sdr: np.ndarray):
    ids = np.asarray(candidates, dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise InputError("duplicate candidates")
    if np.any((sdr < 0) | (sdr > 1)):
        raise InputError("sdr outside [0, 1]")
    order = np.argsort(ids, kind="stable")
    return ids[order], np.asarray(v, dtype=np.float64)[order], np.asarray(sdr, dtype=np.float64)[order]


def brute_force_arrays(candidates: Sequence[int], v: np.ndarray, sdr: np.ndarray, m: int,
                       cap: int = DEFAULT_CAP) -> SlateEvaluation:
    ids, v, sdr = _sorted_inputs(candidates, v, sdr)
    n = len(ids)
    if not 1 <= m <= n:
        raise InputError(f"m={m} outside [1, {n}]")
    count = math.perm(n, m)
    if count > cap:
        raise CapExceededError(
            f"{count} permutations exceed cap {cap}; use beam_search instead")
    # itertools yields index tuples in lexicographic order, and indices follow id order
    perms = np.fromiter((i for perm in permutations(range(n), m) for i in perm),
                        dtype=np.int64, count=count * m).reshape(count, m)
    total = np.zeros(count)
    p = np.ones(count)
    for k in range(m):
        col = perms[:, k]
        total = total + p * v[col]
        p = p * sdr[col]
    best = int(np.argmax(total))
    return _evaluation(ids, perms[best].tolist(), v, sdr)


def beam_search_arrays(candidates: Sequence[int], v: np.ndarray, sdr: np.ndarray, m: int,
                       beam_width: int) -> SlateEvaluation:
    ids, v, sdr = _sorted_inputs(candidates, v, sdr)
    n = len(ids)
    if not 1 <= m <= n:
        raise InputError(f"m={m} outside [1, {n}]")
    if beam_width < 1:
        raise InputError("beam_width must be >= 1")
    prefixes = np.zeros((1, 0), dtype=np.int64)
    used = np.zeros((1, n), dtype=bool)
    totals = np.zeros(1)
    probs = np.ones(1)
    cand = np.arange(n)
    for _ in range(m):
        b = len(totals)
        new_totals = totals[:, None] + probs[:, None] * v[None, :]
        new_probs = probs[:, None] * sdr[None, :]
        new_totals = np.where(used, -np.inf, new_totals)
        # lexicographic rank of each prefix among the current beams
        if prefixes.shape[1]:
            lex = np.empty(b, dtype=np.int64)
            lex[np.lexsort(prefixes.T[::-1])] = np.arange(b)
        else:
            lex = np.zeros(b, dtype=np.int64)
        flat_t = new_totals.ravel()
        order = np.lexsort((np.tile(cand, b), np.repeat(lex, n), -flat_t))
        valid = int(np.isfinite(flat_t).sum())
        keep = order[: min(beam_width, valid)]
        rows, cols = np.divmod(keep, n)
        prefixes = np.concatenate([prefixes[rows], cols[:, None]], axis=1)
        used = used[rows].copy()
        used[np.arange(len(rows)), cols] = True
        totals = flat_t[keep]
        probs = new_probs.ravel()[keep]
    return _evaluation(ids, prefixes[0].tolist(), v, sdr)


def brute_force_best(candidates: Sequence[int], m: int, scores: Mapping[int, ObjectiveScores],
                     weights: EnsembleWeights, cap: int = DEFAULT_CAP) -> SlateEvaluation:
    """Exact best slate over all ordered m-subsets."""
    v, sdr = _values(candidates, scores, weights)
    return brute_force_arrays(candidates, v, sdr, m, cap)


def beam_search(candidates: Sequence[int], config: BeamConfig,
                scores: Mapping[int, ObjectiveScores], weights: EnsembleWeights) -> SlateEvaluation:
    """Grow slates one position at a time keeping the ``beam_width`` best prefixes."""
    if len(candidates) < config.m:
        raise InputError(f"need at least m={config.m} candidates")
    v, sdr = _values(candidates, scores, weights)
    return beam_search_arrays(candidates, v, sdr, config.m, config.beam_width)


def partial_sequence_count(n: int, m: int) -> int:
    """Largest number of distinct prefixes alive at any beam step."""
    return math.perm(n, m)
