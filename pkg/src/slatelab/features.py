"""Hashed sparse features shared by every prediction head.

Feature ids are ``blake2b-64(namespace + "=" + value) mod (dim - 1) + 1``;
id 0 is reserved for padding and always carries value 0.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .worldsim import World

DEFAULT_DIM = 1 << 18

# column layout of a feature row
USER, CATEGORY, ITEM, INVOLVEMENT, USER_CATEGORY, TRIGGER_CATEGORY, MATCH, POSITION = range(8)
ESTAGE_WIDTH = 5
WIDTH = 8


@lru_cache(maxsize=None)
def feature_id(namespace: str, value: object, dim: int = DEFAULT_DIM) -> int:
    digest = hashlib.blake2b(f"{namespace}={value}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") % (dim - 1) + 1


@dataclass(frozen=True)
class FeatureVector:
    ids: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.values):
            raise ValueError("ids and values differ in length")

    def to_list(self) -> list:
        return [list(self.ids), list(self.values)]

    @classmethod
    def from_list(cls, data) -> "FeatureVector":
        return cls(tuple(int(i) for i in data[0]), tuple(float(v) for v in data[1]))


@dataclass(frozen=True)
class FeatureBatch:
    ids: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return self.ids.shape[0]

    def take(self, index) -> "FeatureBatch":
        return FeatureBatch(self.ids[index], self.values[index])

    @classmethod
    def from_vectors(cls, vectors, width: int = WIDTH) -> "FeatureBatch":
        n = len(vectors)
        ids = np.zeros((n, width), dtype=np.int64)
        vals = np.zeros((n, width), dtype=np.float64)
        for r, fv in enumerate(vectors):
            k = len(fv.ids)
            ids[r, :k] = fv.ids
            vals[r, :k] = fv.values
        return cls(ids, vals)


class Featurizer:
    """Precomputes per-entity feature ids for one world."""

    def __init__(self, world: World, dim: int = DEFAULT_DIM, max_position: int = 64):
        self.world = world
        self.dim = dim
        self.user_ids = np.array([feature_id("user", u.user_id, dim) for u in world.users])
        cat_ids = np.array([feature_id("cat", c.category_id, dim) for c in world.categories])
        tcat_ids = np.array([feature_id("tcat", c.category_id, dim) for c in world.categories])
        a = world.arrays
        self.item_cat = cat_ids[a.item_category]
        self.item_tcat = tcat_ids[a.item_category]
        self.item_item = np.array([feature_id("item", i.item_id, dim) for i in world.items])
        self.item_inv = np.array([feature_id("inv", i.involvement, dim) for i in world.items])
        self.user_cat = np.array([[feature_id("ucat", f"{u.user_id}:{c.category_id}", dim)
                                   for c in world.categories] for u in world.users])
        self.match_ids = np.array([feature_id("match", 0, dim), feature_id("match", 1, dim)])
        self.pos_ids = np.array([0] + [feature_id("pos", p, dim) for p in range(1, max_position + 1)])

    def _base(self, user_id: int, items: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = len(items)
        ids = np.zeros((n, WIDTH), dtype=np.int64)
        vals = np.zeros((n, WIDTH), dtype=np.float64)
        ids[:, USER] = self.user_ids[user_id]
        ids[:, CATEGORY] = self.item_cat[items]
        ids[:, ITEM] = self.item_item[items]
        ids[:, INVOLVEMENT] = self.item_inv[items]
        ids[:, USER_CATEGORY] = self.user_cat[user_id, self.world.arrays.item_category[items]]
        vals[:, :ESTAGE_WIDTH] = 1.0
        return ids, vals

    def estage(self, user_id: int, items) -> FeatureBatch:
        items = np.asarray(items, dtype=np.int64)
        return FeatureBatch(*self._base(user_id, items))

    def fstage(self, user_id: int, trigger_item_id: int, items, positions=1) -> FeatureBatch:
        items = np.asarray(items, dtype=np.int64)
        ids, vals = self._base(user_id, items)
        cats = self.world.arrays.item_category
        match = (cats[items] == cats[trigger_item_id]).astype(np.int64)
        ids[:, TRIGGER_CATEGORY] = self.item_tcat[trigger_item_id]
        ids[:, MATCH] = self.match_ids[match]
        ids[:, POSITION] = self.pos_ids[np.broadcast_to(np.asarray(positions), items.shape)]
        vals[:, ESTAGE_WIDTH:] = 1.0
        return FeatureBatch(ids, vals)

    @staticmethod
    def vectors(batch: FeatureBatch) -> list[FeatureVector]:
        out = []
        for ids, vals in zip(batch.ids.tolist(), batch.values.tolist()):
            k = sum(1 for v in vals if v != 0.0)
            out.append(FeatureVector(tuple(ids[:k]), tuple(vals[:k])))
        return out
