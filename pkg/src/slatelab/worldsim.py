"""Synthetic population and E-stage -> F-stage session simulator.

A session is one homepage (E-stage) list.  The user scans it in order and
clicks at most one item; the click opens the item detail page, where the
user may convert and may swipe down into the immersive F-stage flow.  The
F-stage shows up to ``m`` items one at a time.  Each exposed slot realizes a
view time, a conversion and a swipe-down decision conditioned on the
conversion; the first non-swipe ends exposure.

All randomness is drawn from per-session streams keyed by
``(seed, user_id, day, session_index)`` so that two policies evaluated on the
same seed see the same uniforms (common random numbers).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .errors import ConfigError, ContractError

SCHEMA_VERSION = 1

STANDARD = "standard"
HIGH_INVOLVEMENT = "high_involvement"


@dataclass(frozen=True)
class WorldConfig:
    n_users: int = 600
    n_categories: int = 8
    items_per_category: int = 60
    day_count: int = 2
    high_involvement_fraction: float = 0.375
    # relative jitter of per-category parameters; 0 makes categories identical
    category_jitter: float = 0.2
    # 0 gives every user affinity 0.5 for every category
    affinity_spread: float = 1.0
    # blends item appeal toward (1 - quality): eye-catching items that sell worse
    appeal_quality_tradeoff: float = 0.0

    base_cvr: float = 0.03
    high_involvement_base_cvr: float = 0.015
    cvr_gain: float = 0.25
    comparison_bonus: float = 0.03
    comparison_bonus_cap: float = 0.12

    view_log_mu: float = 1.6
    view_log_sigma: float = 0.8
    conversion_view_shift: float = 1.8
    view_appeal_gain: float = 1.0
    view_affinity_gain: float = 0.5

    exit_after_conversion: float = 0.62
    exit_without_conversion: float = 0.2
    exit_patience_gain: float = 1.0
    exit_appeal_gain: float = 1.0
    exit_affinity_gain: float = 0.0

    ctr_base: float = 0.04
    ctr_affinity_gain: float = 0.15
    ctr_appeal_gain: float = 0.08
    entry_base: float = 0.6
    entry_patience_gain: float = 0.4

    fstage_same_category_fraction: float = 0.8

    return_propensity_min: float = 0.3
    return_propensity_max: float = 0.8
    satisfaction_beta: float = 0.5
    satisfaction_ipv_weight: float = 0.1
    satisfaction_purchase_weight: float = 1.0
    sessions_per_day: int = 1

    def validate(self, m: int = 1) -> None:
        if self.n_users < 1 or self.n_categories < 1:
            raise ConfigError("world needs at least one user and one category")
        if self.items_per_category < m + 1:
            raise ConfigError(
                f"items_per_category={self.items_per_category} must be >= m+1={m + 1}"
            )
        if self.sessions_per_day < 1 or self.day_count < 1:
            raise ConfigError("sessions_per_day and day_count must be >= 1")
        probs = {
            "high_involvement_fraction": self.high_involvement_fraction,
            "base_cvr": self.base_cvr,
            "high_involvement_base_cvr": self.high_involvement_base_cvr,
            "exit_after_conversion": self.exit_after_conversion,
            "exit_without_conversion": self.exit_without_conversion,
            "ctr_base": self.ctr_base,
            "entry_base": self.entry_base,
            "fstage_same_category_fraction": self.fstage_same_category_fraction,
            "return_propensity_min": self.return_propensity_min,
            "return_propensity_max": self.return_propensity_max,
            "affinity_spread": self.affinity_spread,
            "category_jitter": self.category_jitter,
            "appeal_quality_tradeoff": self.appeal_quality_tradeoff,
        }
        for name, value in probs.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name}={value} outside [0, 1]")
        if self.return_propensity_min > self.return_propensity_max:
            raise ConfigError("return_propensity_min exceeds return_propensity_max")
        for name in ("exit_patience_gain", "exit_appeal_gain", "exit_affinity_gain"):
            if not 0.0 <= getattr(self, name) <= 2.0:
                raise ConfigError(f"{name} must lie in [0, 2]")
        for name in ("cvr_gain", "comparison_bonus", "comparison_bonus_cap",
                     "ctr_affinity_gain", "ctr_appeal_gain", "view_appeal_gain",
                     "view_affinity_gain", "satisfaction_ipv_weight",
                     "satisfaction_purchase_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.view_log_sigma <= 0 or self.conversion_view_shift <= 0:
            raise ConfigError("view_log_sigma and conversion_view_shift must be positive")
        if self.exit_after_conversion <= self.exit_without_conversion:
            raise ConfigError("exit_after_conversion must exceed exit_without_conversion")

    @classmethod
    def from_dict(cls, data: dict) -> "WorldConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown world config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class CategoryParams:
    category_id: int
    involvement: str
    base_cvr: float
    view_log_mu: float
    view_log_sigma: float
    conversion_view_shift: float
    exit_after_conversion: float
    exit_without_conversion: float
    fstage_comparison_bonus: float


@dataclass(frozen=True)
class Item:
    item_id: int
    category_id: int
    quality: float
    appeal: float
    involvement: str


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    latent_affinity: tuple[float, ...]
    patience: float
    return_propensity: float


@dataclass(frozen=True)
class World:
    users: tuple[UserProfile, ...]
    items: tuple[Item, ...]
    categories: tuple[CategoryParams, ...]
    seed: int
    day_count: int
    config: WorldConfig

    @cached_property
    def arrays(self) -> "WorldArrays":
        return WorldArrays.from_world(self)

    def user(self, user_id: int) -> UserProfile:
        if not 0 <= user_id < len(self.users):
            raise LookupError(f"unknown user_id {user_id}")
        return self.users[user_id]

    def item(self, item_id: int) -> Item:
        if not 0 <= item_id < len(self.items):
            raise LookupError(f"unknown item_id {item_id}")
        return self.items[item_id]

    def to_dict(self) -> dict:
        return {
            "v": SCHEMA_VERSION,
            "seed": self.seed,
            "day_count": self.day_count,
            "config": asdict(self.config),
            "categories": [asdict(c) for c in self.categories],
            "items": [asdict(i) for i in self.items],
            "users": [
                {**asdict(u), "latent_affinity": list(u.latent_affinity)} for u in self.users
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "World":
        return cls(
            users=tuple(
                UserProfile(**{**u, "latent_affinity": tuple(u["latent_affinity"])})
                for u in data["users"]
            ),
            items=tuple(Item(**i) for i in data["items"]),
            categories=tuple(CategoryParams(**c) for c in data["categories"]),
            seed=data["seed"],
            day_count=data["day_count"],
            config=WorldConfig.from_dict(data["config"]),
        )


@dataclass(frozen=True)
class WorldArrays:
    """Columnar view of a world, used by vectorized scoring and sampling."""

    item_category: np.ndarray
    item_quality: np.ndarray
    item_appeal: np.ndarray
    item_high: np.ndarray
    category_items: tuple[np.ndarray, ...]
    user_affinity: np.ndarray
    user_patience: np.ndarray
    user_return: np.ndarray
    cat_base_cvr: np.ndarray
    cat_mu: np.ndarray
    cat_sigma: np.ndarray
    cat_shift: np.ndarray
    cat_exit_conv: np.ndarray
    cat_exit_noconv: np.ndarray
    cat_bonus: np.ndarray

    @classmethod
    def from_world(cls, world: World) -> "WorldArrays":
        cats = world.categories
        item_category = np.array([i.category_id for i in world.items], dtype=np.int64)
        return cls(
            item_category=item_category,
            item_quality=np.array([i.quality for i in world.items]),
            item_appeal=np.array([i.appeal for i in world.items]),
            item_high=np.array([i.involvement == HIGH_INVOLVEMENT for i in world.items]),
            category_items=tuple(
                np.flatnonzero(item_category == c.category_id) for c in cats
            ),
            user_affinity=np.array([u.latent_affinity for u in world.users]),
            user_patience=np.array([u.patience for u in world.users]),
            user_return=np.array([u.return_propensity for u in world.users]),
            cat_base_cvr=np.array([c.base_cvr for c in cats]),
            cat_mu=np.array([c.view_log_mu for c in cats]),
            cat_sigma=np.array([c.view_log_sigma for c in cats]),
            cat_shift=np.array([c.conversion_view_shift for c in cats]),
            cat_exit_conv=np.array([c.exit_after_conversion for c in cats]),
            cat_exit_noconv=np.array([c.exit_without_conversion for c in cats]),
            cat_bonus=np.array([c.fstage_comparison_bonus for c in cats]),
        )


def _clip01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def generate_world(config: WorldConfig, seed: int, m: int = 1) -> World:
    """Draw a population from ``config``; identical (config, seed) give identical worlds."""
    config.validate(m)
    rng = np.random.default_rng([seed, 0x57051D])
    n_cat = config.n_categories
    n_high = int(round(config.high_involvement_fraction * n_cat))
    high = set(rng.permutation(n_cat)[:n_high].tolist())
    jit = config.category_jitter

    def jitter(value: float) -> float:
        return value * (1.0 + jit * (2.0 * rng.random() - 1.0))

    categories = []
    for c in range(n_cat):
        is_high = c in high
        base = config.high_involvement_base_cvr if is_high else config.base_cvr
        exit_noconv = _clip01(jitter(config.exit_without_conversion))
        exit_conv = _clip01(jitter(config.exit_after_conversion))
        if exit_conv <= exit_noconv:
            exit_conv = config.exit_after_conversion
            exit_noconv = config.exit_without_conversion
        categories.append(CategoryParams(
            category_id=c,
            involvement=HIGH_INVOLVEMENT if is_high else STANDARD,
            base_cvr=_clip01(jitter(base)),
            view_log_mu=jitter(config.view_log_mu),
            view_log_sigma=config.view_log_sigma,
            conversion_view_shift=config.conversion_view_shift,
            exit_after_conversion=exit_conv,
            exit_without_conversion=exit_noconv,
            fstage_comparison_bonus=config.comparison_bonus if is_high else 0.0,
        ))

    items = []
    tradeoff = config.appeal_quality_tradeoff
    for c in range(n_cat):
        for _ in range(config.items_per_category):
            quality = float(rng.random())
            appeal = float(rng.random())
            items.append(Item(
                item_id=len(items),
                category_id=c,
                quality=quality,
                appeal=(1.0 - tradeoff) * appeal + tradeoff * (1.0 - quality),
                involvement=categories[c].involvement,
            ))

    users = []
    lo, hi = config.return_propensity_min, config.return_propensity_max
    for u in range(config.n_users):
        raw = rng.random(n_cat)
        affinity = 0.5 + config.affinity_spread * (raw - 0.5)
        users.append(UserProfile(
            user_id=u,
            latent_affinity=tuple(float(a) for a in affinity),
            patience=float(rng.random()),
            return_propensity=float(lo + (hi - lo) * rng.random()),
        ))

    return World(
        users=tuple(users),
        items=tuple(items),
        categories=tuple(categories),
        seed=seed,
        day_count=config.day_count,
        config=config,
    )


# ---------------------------------------------------------------------------
# ground-truth behavior


@dataclass(frozen=True)
class SlotContext:
    stage: str = "F"
    same_category_views: int = 0


@dataclass(frozen=True)
class TrueBehaviorProbs:
    cvr: float
    sdr: float
    ctr: float
    sdr_star: float
    view_log_mu: float
    view_log_sigma: float
    conversion_view_shift: float
    exit_after_conversion: float
    exit_without_conversion: float

    def vtr(self, threshold: float) -> float:
        """P(view time > threshold) under the conversion mixture of log-normals."""
        if threshold <= 0:
            return 1.0
        z = math.log(threshold)
        s = self.view_log_sigma * math.sqrt(2.0)
        p_plain = 0.5 * math.erfc((z - self.view_log_mu) / s)
        p_conv = 0.5 * math.erfc((z - self.view_log_mu - self.conversion_view_shift) / s)
        return self.cvr * p_conv + (1.0 - self.cvr) * p_plain


def true_scores(
    world: World, user_id: int, item_id: int, context: SlotContext | None = None
) -> TrueBehaviorProbs:
    user = world.user(user_id)
    item = world.item(item_id)
    cat = world.categories[item.category_id]
    cfg = world.config
    ctx = context or SlotContext()
    a = user.latent_affinity[item.category_id]

    bonus = 0.0
    if cat.fstage_comparison_bonus > 0 and ctx.same_category_views > 0:
        bonus = min(cat.fstage_comparison_bonus * ctx.same_category_views,
                    cfg.comparison_bonus_cap)
    cvr = _clip01(cat.base_cvr + cfg.cvr_gain * item.quality * a + bonus)

    exit_noconv = _clip01(
        cat.exit_without_conversion
        * (1.0 + cfg.exit_patience_gain * (0.5 - user.patience))
        * (1.0 + cfg.exit_appeal_gain * (0.5 - item.appeal))
        * (1.0 + cfg.exit_affinity_gain * (0.5 - a))
    )
    exit_conv = cat.exit_after_conversion
    sdr = cvr * (1.0 - exit_conv) + (1.0 - cvr) * (1.0 - exit_noconv)

    ctr = _clip01(cfg.ctr_base + cfg.ctr_affinity_gain * a + cfg.ctr_appeal_gain * item.appeal)
    sdr_star = _clip01(cfg.entry_base + cfg.entry_patience_gain * (user.patience - 0.5))
    mu = (cat.view_log_mu + cfg.view_appeal_gain * (item.appeal - 0.5)
          + cfg.view_affinity_gain * (a - 0.5))
    return TrueBehaviorProbs(
        cvr=cvr,
        sdr=_clip01(sdr),
        ctr=ctr,
        sdr_star=sdr_star,
        view_log_mu=mu,
        view_log_sigma=cat.view_log_sigma,
        conversion_view_shift=cat.conversion_view_shift,
        exit_after_conversion=exit_conv,
        exit_without_conversion=exit_noconv,
    )


# ---------------------------------------------------------------------------
# session records


@dataclass(frozen=True)
class SlotOutcome:
    position: int
    item_id: int
    view_time: float
    converted: int
    swiped_down: int
    exposed: int


@dataclass(frozen=True)
class SessionLog:
    user_id: int
    day: int
    session_index: int
    estage_items: tuple[int, ...]
    clicked_position: int | None
    trigger_item_id: int | None
    clicked: int
    estage_converted: int
    entered_fstage: int
    fstage_slots: tuple[SlotOutcome, ...] = ()
    # 1-based position of the last exposed slot when the user left; None when
    # the user swiped past the end of the returned list
    exited_at: int | None = None

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.user_id, self.day, self.session_index)

    @property
    def exposed_slots(self) -> tuple[SlotOutcome, ...]:
        return tuple(s for s in self.fstage_slots if s.exposed)

    @property
    def impressions(self) -> tuple[int, ...]:
        """E-stage items the user examined (cascade: up to and including the click)."""
        if self.clicked_position is None:
            return self.estage_items
        return self.estage_items[: self.clicked_position]

    def to_dict(self) -> dict:
        return {
            "v": SCHEMA_VERSION,
            "user_id": self.user_id,
            "day": self.day,
            "session_index": self.session_index,
            "estage_items": list(self.estage_items),
            "clicked_position": self.clicked_position,
            "trigger_item_id": self.trigger_item_id,
            "estage_outcome": {
                "clicked": self.clicked,
                "converted": self.estage_converted,
                "entered_fstage": self.entered_fstage,
            },
            "fstage_slots": [
                [s.position, s.item_id, s.view_time, s.converted, s.swiped_down, s.exposed]
                for s in self.fstage_slots
            ],
            "exited_at": self.exited_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionLog":
        if data.get("v") != SCHEMA_VERSION:
            raise ValueError(f"unsupported session log version {data.get('v')!r}")
        outcome = data["estage_outcome"]
        return cls(
            user_id=data["user_id"],
            day=data["day"],
            session_index=data["session_index"],
            estage_items=tuple(data["estage_items"]),
            clicked_position=data["clicked_position"],
            trigger_item_id=data["trigger_item_id"],
            clicked=outcome["clicked"],
            estage_converted=outcome["converted"],
            entered_fstage=outcome["entered_fstage"],
            fstage_slots=tuple(SlotOutcome(*row) for row in data["fstage_slots"]),
            exited_at=data["exited_at"],
        )


# ---------------------------------------------------------------------------
# randomness


class SessionStream:
    """Randomness for one session.

    Candidate retrieval and user behavior use separate generators; behavior
    uniforms are drawn up front in fixed-size blocks so that the uniform
    consumed at a given (stage, position) does not depend on the policy.
    """

    def __init__(self, seed: int, user_id: int, day: int, session_index: int,
                 k: int, m: int, n: int):
        key = [seed, user_id, day, session_index]
        self.key = tuple(key)
        self.k, self.m, self.n = k, m, n
        self._cand = np.random.default_rng(key + [1])
        behav = np.random.default_rng(key + [2])
        u = behav.random(k + 2 + 2 * m).tolist()
        self.e_click = u[:k]
        self.e_convert = u[k]
        self.f_entry = u[k + 1]
        self.f_convert = u[k + 2: k + 2 + m]
        self.f_swipe = u[k + 2 + m:]
        self.f_view = behav.standard_normal(m).tolist()
        self._estage: np.ndarray | None = None

    def estage_candidates(self, world: World) -> np.ndarray:
        if self._estage is None:
            n = min(self.n, len(world.items))
            self._estage = self._cand.choice(len(world.items), size=n, replace=False)
        return self._estage

    def fstage_candidates(self, world: World, trigger_item_id: int) -> np.ndarray:
        """Stand-in for retrieval: mostly same-category items, the rest from elsewhere."""
        arrays = world.arrays
        rng = np.random.default_rng(list(self.key) + [3, trigger_item_id])
        cat = arrays.item_category[trigger_item_id]
        same = arrays.category_items[cat]
        same = same[same != trigger_item_id]
        n = min(self.n, len(world.items) - 1)
        n_same = min(len(same), int(round(world.config.fstage_same_category_fraction * n)))
        picked = rng.choice(same, size=n_same, replace=False)
        if n > n_same:
            others = np.flatnonzero(
                (arrays.item_category != cat) & (np.arange(len(world.items)) != trigger_item_id)
            )
            extra = rng.choice(others, size=min(n - n_same, len(others)), replace=False)
            picked = np.concatenate([picked, extra])
        return picked


def session_stream(seed: int, user_id: int, day: int, session_index: int,
                   k: int, m: int, n: int) -> SessionStream:
    return SessionStream(seed, user_id, day, session_index, k, m, n)


# ---------------------------------------------------------------------------
# simulation


def simulate_session(
    world: World,
    user_id: int,
    ranked_estage: Sequence[int],
    fstage_ranker: Callable[[int], Sequence[int]],
    stream: SessionStream,
) -> SessionLog:
    if len(ranked_estage) == 0:
        raise ValueError("ranked_estage must be non-empty")
    ranked_estage = tuple(int(i) for i in ranked_estage)
    day, session_index = stream.key[2], stream.key[3]
    n_u = len(stream.e_click)

    trigger = None
    clicked_position = None
    for pos, item_id in enumerate(ranked_estage):
        if pos >= n_u:
            break
        if stream.e_click[pos] < true_scores(world, user_id, item_id, SlotContext("E")).ctr:
            trigger = item_id
            clicked_position = pos + 1
            break
    if trigger is None:
        return SessionLog(user_id, day, session_index, ranked_estage, None, None, 0, 0, 0)

    probs = true_scores(world, user_id, trigger, SlotContext("E"))
    e_conv = int(stream.e_convert < probs.cvr)
    if stream.f_entry >= probs.sdr_star:
        return SessionLog(user_id, day, session_index, ranked_estage, clicked_position,
                          trigger, 1, e_conv, 0)

    slate = [int(i) for i in fstage_ranker(trigger)]
    if len(slate) != stream.m:
        raise ContractError(f"fstage_ranker returned {len(slate)} items, expected {stream.m}")

    views_by_cat: dict[int, int] = {world.items[trigger].category_id: 1}
    slots = []
    exited_at = None
    for k, item_id in enumerate(slate):
        if exited_at is not None:
            slots.append(SlotOutcome(k + 1, item_id, 0.0, 0, 0, 0))
            continue
        cat = world.items[item_id].category_id
        tp = true_scores(world, user_id, item_id,
                         SlotContext("F", views_by_cat.get(cat, 0)))
        conv = int(stream.f_convert[k] < tp.cvr)
        log_t = tp.view_log_mu + tp.conversion_view_shift * conv + tp.view_log_sigma * stream.f_view[k]
        p_swipe = 1.0 - (tp.exit_after_conversion if conv else tp.exit_without_conversion)
        swiped = int(stream.f_swipe[k] < p_swipe)
        slots.append(SlotOutcome(k + 1, item_id, math.exp(log_t), conv, swiped, 1))
        views_by_cat[cat] = views_by_cat.get(cat, 0) + 1
        if not swiped:
            exited_at = k + 1
    return SessionLog(user_id, day, session_index, ranked_estage, clicked_position,
                      trigger, 1, e_conv, 1, tuple(slots), exited_at)


class Policy(Protocol):
    """What simulate_day needs from a policy bundle."""

    k: int
    m: int
    n: int

    def rank_estage(self, world: World, user_id: int, candidates: np.ndarray) -> Sequence[int]:
        ...

    def rank_fstage(self, world: World, user_id: int, trigger_item_id: int,
                    candidates: np.ndarray) -> Sequence[int]:
        ...


def satisfaction(world: World, logs: Iterable[SessionLog]) -> dict[int, float]:
    """Per-user blend of IPV (E clicks + F views over 2s) and purchases."""
    cfg = world.config
    out: dict[int, float] = {}
    for log in logs:
        ipv = log.clicked + sum(1 for s in log.fstage_slots if s.exposed and s.view_time > 2.0)
        buys = log.estage_converted + sum(s.converted for s in log.fstage_slots)
        out[log.user_id] = out.get(log.user_id, 0.0) + (
            cfg.satisfaction_ipv_weight * ipv + cfg.satisfaction_purchase_weight * buys
        )
    return out


def activity_probability(return_propensity: float, beta: float, sat: float) -> float:
    if return_propensity >= 1.0:
        return 1.0
    if return_propensity <= 0.0:
        return 0.0
    logit = math.log(return_propensity / (1.0 - return_propensity))
    return 1.0 / (1.0 + math.exp(-(logit + beta * sat)))


def run_policy_session(world: World, policy: Policy, user_id: int,
                       stream: SessionStream) -> SessionLog:
    candidates = stream.estage_candidates(world)
    ranked = list(policy.rank_estage(world, user_id, candidates))[: policy.k]
    return simulate_session(
        world, user_id, ranked,
        lambda trig: policy.rank_fstage(world, user_id, trig,
                                        stream.fstage_candidates(world, trig)),
        stream,
    )


def simulate_day(
    world: World,
    policy: Policy,
    day: int,
    seed: int,
    previous_logs: Sequence[SessionLog] = (),
    beta: float | None = None,
) -> tuple[list[SessionLog], frozenset[int]]:
    """One day of traffic; returns logs in (user_id, session_index) order and the active set."""
    if day < 1:
        raise ValueError("day must be >= 1")
    cfg = world.config
    beta = cfg.satisfaction_beta if beta is None else beta
    sat = satisfaction(world, previous_logs) if previous_logs else {}
    draws = np.random.default_rng([seed, day, 0xDA4]).random(len(world.users)).tolist()
    logs: list[SessionLog] = []
    active = []
    for user in world.users:
        p = activity_probability(user.return_propensity, beta, sat.get(user.user_id, 0.0))
        if draws[user.user_id] >= p:
            continue
        active.append(user.user_id)
        for s in range(cfg.sessions_per_day):
            stream = SessionStream(seed, user.user_id, day, s, policy.k, policy.m, policy.n)
            logs.append(run_policy_session(world, policy, user.user_id, stream))
    return logs, frozenset(active)


@dataclass
class DayResult:
    day: int
    logs: list[SessionLog] = field(default_factory=list)
    active: frozenset[int] = frozenset()


def simulate_days(world: World, policy: Policy, days: int, seed: int,
                  beta: float | None = None) -> list[DayResult]:
    results: list[DayResult] = []
    previous: list[SessionLog] = []
    for day in range(1, days + 1):
        logs, active = simulate_day(world, policy, day, seed, previous, beta)
        results.append(DayResult(day, logs, active))
        previous = logs
    return results


# ---------------------------------------------------------------------------
# bulk slot sampling


def sample_slot_outcomes(world: World, n_slots: int, rng: np.random.Generator,
                         max_views: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Draw (view_time, converted) for random exposed F-stage slots.

    Vectorized twin of the per-slot law used by simulate_session: random
    (user, item) pairs, an optional random same-category view count in
    ``[0, max_views]``, conversion, then the conversion-shifted log-normal view
    time.  Used for large-sample calibration checks.
    """
    a = world.arrays
    cfg = world.config
    users = rng.integers(0, len(world.users), n_slots)
    items = rng.integers(0, len(world.items), n_slots)
    cats = a.item_category[items]
    aff = a.user_affinity[users, cats]
    views = rng.integers(0, max_views + 1, n_slots) if max_views > 0 else np.zeros(n_slots)
    bonus = np.minimum(a.cat_bonus[cats] * views, cfg.comparison_bonus_cap)
    cvr = np.clip(a.cat_base_cvr[cats] + cfg.cvr_gain * a.item_quality[items] * aff + bonus, 0, 1)
    conv = (rng.random(n_slots) < cvr).astype(np.int64)
    mu = (a.cat_mu[cats] + cfg.view_appeal_gain * (a.item_appeal[items] - 0.5)
          + cfg.view_affinity_gain * (aff - 0.5))
    log_t = mu + a.cat_shift[cats] * conv + a.cat_sigma[cats] * rng.standard_normal(n_slots)
    return np.exp(log_t), conv
