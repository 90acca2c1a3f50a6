"""Scorers and policy bundles plugged into the session simulator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import MATCH, TRIGGER_CATEGORY, Featurizer
from .predictor import PredictorModel, predict_batch
from .ranker import EnsembleWeights, RankingConfig, estage_values, item_values, top_k
from .reranker import beam_search_arrays
from .worldsim import SlotContext, World, true_scores


class ModelScorer:
    """Scores candidates with a trained model.

    F-stage candidates are scored at position 1 (scores are treated as
    position-independent).  The E-stage immediate value is ``ctr * cvr`` with
    the cvr head evaluated as if the candidate were its own trigger.
    """

    def __init__(self, model: PredictorModel, featurizer: Featurizer):
        self.model = model
        self.featurizer = featurizer
        self.fheads = tuple(h for h in ("vtr", "cvr", "sdr") if h in model.heads)
        self.eheads = tuple(h for h in ("ctr", "sdr_star", "cvr_star") if h in model.heads)

    def fstage(self, user_id: int, trigger_item_id: int, candidates: np.ndarray) -> dict:
        batch = self.featurizer.fstage(user_id, trigger_item_id, candidates, 1)
        return predict_batch(self.model, batch, self.fheads)

    def estage(self, user_id: int, candidates: np.ndarray) -> dict:
        scores = predict_batch(self.model, self.featurizer.estage(user_id, candidates), self.eheads)
        f = self.featurizer
        batch = f.fstage(user_id, int(candidates[0]), candidates, 1)
        batch.ids[:, TRIGGER_CATEGORY] = f.item_tcat[candidates]
        batch.ids[:, MATCH] = f.match_ids[1]
        cvr = predict_batch(self.model, batch, ("cvr",))["cvr"]
        scores["cvr_e"] = scores["ctr"] * cvr
        return scores


class OracleScorer:
    """Ground-truth probabilities from the simulator, same interface as ModelScorer."""

    def __init__(self, world: World, vtr_threshold: float, m: int = 5):
        self.world = world
        self.vtr_threshold = vtr_threshold
        self.m = m

    def fstage(self, user_id: int, trigger_item_id: int, candidates: np.ndarray) -> dict:
        cats = self.world.arrays.item_category
        tcat = cats[trigger_item_id]
        vtr, cvr, sdr = [], [], []
        for item in np.asarray(candidates).tolist():
            views = 1 if cats[item] == tcat else 0
            tp = true_scores(self.world, user_id, item, SlotContext("F", views))
            vtr.append(tp.vtr(self.vtr_threshold))
            cvr.append(tp.cvr)
            sdr.append(tp.sdr)
        return {"vtr": np.array(vtr), "cvr": np.array(cvr), "sdr": np.array(sdr)}

    def cvr_star(self, user_id: int, item_id: int) -> float:
        """P(at least one F-stage conversion) for a same-category slate of average items."""
        world = self.world
        cfg = world.config
        cat = world.categories[world.items[item_id].category_id]
        user = world.user(user_id)
        a = user.latent_affinity[cat.category_id]
        exit_noconv = min(1.0, max(0.0, cat.exit_without_conversion
                                   * (1.0 + cfg.exit_patience_gain * (0.5 - user.patience))
                                   * (1.0 + cfg.exit_affinity_gain * (0.5 - a))))
        reach, none = 1.0, 1.0
        for k in range(1, self.m + 1):
            bonus = min(cat.fstage_comparison_bonus * k, cfg.comparison_bonus_cap)
            cvr = min(1.0, cat.base_cvr + cfg.cvr_gain * 0.5 * a + bonus)
            none *= 1.0 - reach * cvr
            reach *= (1.0 - cvr) * (1.0 - exit_noconv)
        return 1.0 - none

    def estage(self, user_id: int, candidates: np.ndarray) -> dict:
        ctr, sdr_star, cvr_e, cvr_star = [], [], [], []
        for item in np.asarray(candidates).tolist():
            tp = true_scores(self.world, user_id, item, SlotContext("E"))
            ctr.append(tp.ctr)
            sdr_star.append(tp.sdr_star)
            cvr_e.append(tp.ctr * tp.cvr)
            cvr_star.append(self.cvr_star(user_id, item))
        return {"ctr": np.array(ctr), "sdr_star": np.array(sdr_star),
                "cvr_e": np.array(cvr_e), "cvr_star": np.array(cvr_star)}


@dataclass
class RankingPolicy:
    """Point-wise ranking with optional beam re-ranking and E-stage look-ahead."""

    ranking: RankingConfig
    weights: EnsembleWeights
    scorer: ModelScorer | OracleScorer
    rerank: bool = False
    beam_width: int = 25
    decisions: list | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.ranking.K

    @property
    def m(self) -> int:
        return self.ranking.m

    @property
    def n(self) -> int:
        return self.ranking.n

    def rank_estage(self, world: World, user_id: int, candidates: np.ndarray) -> list[int]:
        scores = self.scorer.estage(user_id, candidates)
        values = estage_values(scores, self.ranking)
        return [int(candidates[i]) for i in top_k(candidates, values, min(self.k, len(candidates)))]

    def rank_fstage(self, world: World, user_id: int, trigger_item_id: int,
                    candidates: np.ndarray) -> list[int]:
        scores = self.scorer.fstage(user_id, trigger_item_id, candidates)
        values = item_values(scores, self.weights)
        pointwise = [int(candidates[i]) for i in top_k(candidates, values, self.m)]
        if not self.rerank:
            slate = pointwise
        else:
            sdr = scores["sdr"] if "sdr" in scores else np.ones(len(candidates))
            slate = list(beam_search_arrays(candidates, values, sdr, self.m,
                                            self.beam_width).permutation)
        if self.decisions is not None:
            self.decisions.append({"user_id": user_id, "trigger_item_id": trigger_item_id,
                                   "pointwise": pointwise, "reranked": slate})
        return slate


@dataclass
class RandomPolicy:
    """Exploration traffic: E-stage in retrieval order, F-stage a seeded shuffle."""

    ranking: RankingConfig
    seed: int = 0

    @property
    def k(self) -> int:
        return self.ranking.K

    @property
    def m(self) -> int:
        return self.ranking.m

    @property
    def n(self) -> int:
        return self.ranking.n

    def rank_estage(self, world: World, user_id: int, candidates: np.ndarray) -> list[int]:
        return [int(c) for c in candidates[: self.k]]

    def rank_fstage(self, world: World, user_id: int, trigger_item_id: int,
                    candidates: np.ndarray) -> list[int]:
        rng = np.random.default_rng([self.seed, user_id, trigger_item_id, int(candidates[0])])
        return [int(c) for c in rng.permutation(candidates)[: self.m]]


def oracle_slot_cvr(world: World, log) -> list[float]:
    """True conversion probability of every exposed slot of a logged session."""
    if not log.exposed_slots:
        return []
    cats = world.arrays.item_category
    views = {int(cats[log.trigger_item_id]): 1}
    out = []
    for s in log.exposed_slots:
        c = int(cats[s.item_id])
        out.append(true_scores(world, log.user_id, s.item_id,
                               SlotContext("F", views.get(c, 0))).cvr)
        views[c] = views.get(c, 0) + 1
    return out

