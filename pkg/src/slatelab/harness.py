"""Experiment wiring: config files, per-seed replicates, paired A/B runs.

One replicate for seed ``s`` is: generate the world, log exploration traffic
with a random policy, build labels and train a model per arm, optionally tune
the ensemble weights on the last logging day, then simulate the arm's policy
for ``eval_days`` and measure it.  Both arms of a comparison see the same
evaluation seed, so their sessions share candidate sets and behavior draws.
"""
from __future__ import annotations

import copy
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .features import Featurizer
from .labels import LabelSpec, build_training_set, training_arrays, validation_set
from .metrics import LiftTable, MetricReport, compare, hitrate_at_k, session_metrics
from .policies import ModelScorer, OracleScorer, RandomPolicy, RankingPolicy
from .predictor import PredictorModel, TrainConfig, train, train_arrays
from .ranker import EnsembleWeights, RankingConfig
from .reranker import BeamConfig
from .tuner import TuneResult, TuneSpec, tune
from .worldsim import SessionLog, World, WorldConfig, generate_world, simulate_days

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

PREDICTORS = ("model", "oracle")


@dataclass(frozen=True)
class SimulationConfig:
    logging_days: int = 3
    logging_sessions_per_day: int = 4
    eval_days: int = 2

    def __post_init__(self):
        if self.logging_days < 2:
            raise ConfigError("logging_days must be >= 2 (the last day is held out)")
        if self.eval_days < 1 or self.logging_sessions_per_day < 1:
            raise ConfigError("eval_days and logging_sessions_per_day must be >= 1")


@dataclass(frozen=True)
class ArmConfig:
    """A named policy bundle."""

    name: str
    weights: EnsembleWeights = EnsembleWeights()
    labels: Mapping[str, Any] = field(default_factory=dict)
    rerank: bool = False
    lookahead: bool = False
    alpha: float | None = None
    tuned: bool = False
    predictor: str = "model"

    def __post_init__(self):
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"arm {self.name!r}: predictor must be one of {PREDICTORS}")
        unknown = set(self.labels) - {f.name for f in fields(LabelSpec)}
        if unknown:
            raise ConfigError(f"arm {self.name!r}: unknown label fields {sorted(unknown)}")

    def label_spec(self, base: LabelSpec) -> LabelSpec:
        return replace(base, **self.labels)

    def ranking(self, base: RankingConfig) -> RankingConfig:
        coef = base.lookahead_coefficient if self.alpha is None else self.alpha
        return replace(base, lookahead_enabled=self.lookahead, lookahead_coefficient=coef)

    @classmethod
    def from_dict(cls, name: str, data: Mapping) -> "ArmConfig":
        data = dict(data)
        allowed = {f.name for f in fields(cls)} - {"name"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"arm {name!r}: unknown keys {sorted(unknown)}")
        if "weights" in data:
            try:
                data["weights"] = EnsembleWeights.of(data["weights"])
            except TypeError as exc:
                raise ConfigError(f"arm {name!r}: bad weights: {exc}") from None
        return cls(name=name, **data)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    world: WorldConfig = WorldConfig()
    labels: LabelSpec = LabelSpec()
    train: TrainConfig = TrainConfig()
    ranking: RankingConfig = RankingConfig()
    beam: BeamConfig = BeamConfig()
    tune: TuneSpec = TuneSpec()
    simulation: SimulationConfig = SimulationConfig()
    arms: Mapping[str, ArmConfig] = field(default_factory=dict)
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs/experiment"
    model_format: str = "json"
    comparisons: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.beam.m != self.ranking.m:
            raise ConfigError("beam.m must equal ranking.m")
        if self.model_format not in ("json", "binary"):
            raise ConfigError("model_format must be 'json' or 'binary'")
        for a, b in self.comparisons:
            self.arm(a)
            self.arm(b)
        self.world.validate(self.ranking.m)

    def arm(self, name: str) -> ArmConfig:
        try:
            return self.arms[name]
        except KeyError:
            raise ConfigError(f"unknown arm {name!r}; declared: {sorted(self.arms)}") from None

    def with_seeds(self, seeds: Sequence[int]) -> "ExperimentConfig":
        return replace(self, seeds=tuple(int(s) for s in seeds))


# ---------------------------------------------------------------------------
# config files


def _deep_merge(base: dict, top: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in top.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def packaged_config_path(name: str) -> Path:
    return Path(str(resources.files("slatelab") / "configs" / name))


def _resolve(ref: str, relative_to: Path | None) -> Path:
    candidates = []
    if relative_to is not None:
        candidates.append(relative_to / ref)
    candidates.append(Path(ref))
    candidates.append(packaged_config_path(ref if ref.endswith(".toml") else ref + ".toml"))
    for c in candidates:
        if c.is_file():
            return c
    raise ConfigError(f"config {ref!r} not found")


def load_config_dict(path: str | Path, _seen: tuple = ()) -> dict:
    """Read a TOML config, following ``extends`` chains.

    Tables merge recursively with child keys winning, except ``arms``, which a
    child replaces wholesale when it declares any.
    """
    path = _resolve(str(path), None)
    if path.resolve() in _seen:
        raise ConfigError(f"circular extends through {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    parent = data.pop("extends", None)
    if parent is None:
        return data
    base = load_config_dict(_resolve(parent, path.parent), _seen + (path.resolve(),))
    if "arms" in data:
        base.pop("arms", None)
    return _deep_merge(base, data)


def _build(cls, data: Mapping | None, what: str):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"[{what}] unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{what}] {exc}") from None


def config_from_dict(data: Mapping) -> ExperimentConfig:
    data = dict(data)
    allowed = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    try:
        world = WorldConfig.from_dict(data.get("world", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[world] {exc}") from None
    tune_data = dict(data.get("tune", {}))
    if "search_space" in tune_data:
        tune_data["search_space"] = {k: tuple(float(x) for x in v)
                                     for k, v in tune_data["search_space"].items()}
    beam_data = dict(data.get("beam", {}))
    ranking = _build(RankingConfig, data.get("ranking"), "ranking")
    beam_data.setdefault("m", ranking.m)
    arms = {}
    for name, spec in data.get("arms", {}).items():
        try:
            arms[name] = ArmConfig.from_dict(name, spec)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        return ExperimentConfig(
            name=data.get("name", "experiment"),
            world=world,
            labels=_build(LabelSpec, data.get("labels"), "labels"),
            train=_build(TrainConfig, data.get("train"), "train"),
            ranking=ranking,
            beam=_build(BeamConfig, beam_data, "beam"),
            tune=_build(TuneSpec, tune_data, "tune"),
            simulation=_build(SimulationConfig, data.get("simulation"), "simulation"),
            arms=arms,
            seeds=tuple(int(s) for s in data.get("seeds", (0,))),
            output_dir=data.get("output_dir", "runs/experiment"),
            model_format=data.get("model_format", "json"),
            comparisons=tuple(tuple(c) for c in data.get("comparisons", ())),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    return config_from_dict(load_config_dict(path))


def config_to_dict(config: ExperimentConfig) -> dict:
    """Plain-data view used for hashing and for the persisted config copy."""
    out = {
        "name": config.name,
        "world": asdict(config.world),
        "labels": asdict(config.labels),
        "train": asdict(config.train),
        "ranking": asdict(config.ranking),
        "beam": asdict(config.beam),
        "tune": {"search_space": {k: list(v) for k, v in sorted(config.tune.search_space.items())},
                 "budget": config.tune.budget, "method": config.tune.method,
                 "seed": config.tune.seed},
        "simulation": asdict(config.simulation),
        "arms": {n: {**{k: v for k, v in asdict(a).items() if k != "name"},
                     "weights": list(a.weights.as_tuple()), "labels": dict(a.labels)}
                 for n, a in sorted(config.arms.items())},
        "seeds": list(config.seeds),
        "output_dir": config.output_dir,
        "model_format": config.model_format,
        "comparisons": [list(c) for c in config.comparisons],
    }
    return out


# ---------------------------------------------------------------------------
# seeds


def logging_seed(seed: int) -> int:
    return 2 * seed + 1


def eval_seed(seed: int, arm: str | None = None) -> int:
    """Shared evaluation seed; ``arm`` salts it to switch common random numbers off."""
    base = 2 * seed
    if arm is None:
        return base
    return base + (zlib.crc32(arm.encode()) << 20)


# ---------------------------------------------------------------------------
# replicate pieces


def make_world(config: ExperimentConfig, seed: int) -> World:
    return generate_world(config.world, seed, config.ranking.m)


def logging_logs(world: World, config: ExperimentConfig, seed: int) -> list[list[SessionLog]]:
    """Exploration traffic, one list of logs per day."""
    sim = config.simulation
    logged = replace(world, config=replace(world.config,
                                           sessions_per_day=sim.logging_sessions_per_day))
    policy = RandomPolicy(config.ranking, seed=logging_seed(seed))
    return [r.logs for r in simulate_days(logged, policy, sim.logging_days, logging_seed(seed))]


def train_model(world: World, train_logs: Sequence[SessionLog], spec: LabelSpec,
                hyper: TrainConfig, seed: int) -> PredictorModel:
    featurizer = Featurizer(world, hyper.dim)
    samples = build_training_set(train_logs, spec, featurizer)
    return train(samples, hyper, seed)


@dataclass
class ArmOutcome:
    """Everything measured for one arm on one seed."""

    arm: str
    seed: int
    report: MetricReport
    weights: EnsembleWeights
    alpha: float
    hitrate: dict[int, float] = field(default_factory=dict)
    decisions: int = 0
    tune_default: float | None = None
    tune_best: float | None = None

    def to_dict(self) -> dict:
        return {"arm": self.arm, "seed": self.seed, "report": self.report.to_dict(),
                "weights": list(self.weights.as_tuple()), "alpha": self.alpha,
                "hitrate": {str(k): v for k, v in self.hitrate.items()},
                "decisions": self.decisions, "tune_default": self.tune_default,
                "tune_best": self.tune_best}


class Replicate:
    """Lazily built, cached state for one seed shared by all arms."""

    def __init__(self, config: ExperimentConfig, seed: int):
        self.config = config
        self.seed = seed
        self.world = make_world(config, seed)
        self.featurizer = Featurizer(self.world, config.train.dim)
        self._logging: list[list[SessionLog]] | None = None
        self._models: dict[LabelSpec, PredictorModel] = {}
        self._tuned: dict[tuple, TuneResult] = {}

    @property
    def logging(self) -> list[list[SessionLog]]:
        if self._logging is None:
            self._logging = logging_logs(self.world, self.config, self.seed)
        return self._logging

    @property
    def train_logs(self) -> list[SessionLog]:
        return [log for day in self.logging[:-1] for log in day]

    @property
    def validation_logs(self) -> list[SessionLog]:
        return self.logging[-1]

    def model(self, spec: LabelSpec) -> PredictorModel:
        if spec not in self._models:
            data = training_arrays(self.train_logs, spec, self.featurizer)
            self._models[spec] = train_arrays(data, self.config.train, self.seed)
        return self._models[spec]

    def tuned(self, spec: LabelSpec) -> TuneResult:
        if spec not in self._tuned:
            vset = validation_set(self.validation_logs, spec, self.featurizer)
            tspec = replace(self.config.tune, seed=self.config.tune.seed + self.seed)
            self._tuned[spec] = tune(tspec, vset, self.model(spec))
        return self._tuned[spec]

    def policy(self, arm: ArmConfig, decisions: list | None = None
               ) -> tuple[RankingPolicy, TuneResult | None]:
        spec = arm.label_spec(self.config.labels)
        ranking = arm.ranking(self.config.ranking)
        if arm.predictor == "oracle":
            scorer = OracleScorer(self.world, spec.vtr_threshold, ranking.m)
        else:
            scorer = ModelScorer(self.model(spec), self.featurizer)
        weights, result = arm.weights, None
        if arm.tuned:
            if arm.predictor == "oracle":
                raise ConfigError(f"arm {arm.name!r}: tuning needs a trained model")
            result = self.tuned(spec)
            weights = result.best_weights
        policy = RankingPolicy(ranking, weights, scorer, arm.rerank,
                               self.config.beam.beam_width, decisions)
        return policy, result

    def evaluate(self, arm: ArmConfig, crn: bool = True) -> tuple[ArmOutcome, list[SessionLog], list]:
        decisions: list = []
        policy, result = self.policy(arm, decisions)
        seed = eval_seed(self.seed, None if crn else arm.name)
        days = simulate_days(self.world, policy, self.config.simulation.eval_days, seed)
        logs = [log for d in days for log in d.logs]
        m = policy.m
        hit = {}
        if decisions:
            for k in (1, m):
                hit[k] = float(np.mean([hitrate_at_k(d["reranked"], d["pointwise"], k)
                                        for d in decisions]))
        outcome = ArmOutcome(
            arm.name, self.seed, session_metrics(logs, self.world), policy.weights,
            policy.ranking.lookahead_coefficient, hit, len(decisions),
            result.trace[0][1] if result else None,
            result.best_objective if result else None)
        return outcome, logs, decisions


_REPLICATES: dict[tuple[str, int], Replicate] = {}
_REPLICATE_CACHE_SIZE = 4  # a replicate holds logs and models, so keep only a few


def replicate(config: ExperimentConfig, seed: int) -> Replicate:
    """Process-wide cache so that arms and comparisons reuse logging data and models."""
    key = (json.dumps(config_to_dict(replace(config, arms={}, comparisons=(), seeds=(0,),
                                             output_dir=""))), seed)
    rep = _REPLICATES.pop(key, None) or Replicate(config, seed)
    _REPLICATES[key] = rep
    while len(_REPLICATES) > _REPLICATE_CACHE_SIZE:
        del _REPLICATES[next(iter(_REPLICATES))]
    return rep


def _seed_job(args) -> list[ArmOutcome]:
    config, seed, arm_names, crn = args
    rep = replicate(config, seed)
    return [rep.evaluate(config.arm(name), crn)[0] for name in arm_names]


def run_arms(config: ExperimentConfig, arm_names: Sequence[str], jobs: int = 1,
             crn: bool = True) -> dict[str, list[ArmOutcome]]:
    """Outcomes per arm, one per seed, in ``config.seeds`` order."""
    for name in arm_names:
        config.arm(name)
    names = list(dict.fromkeys(arm_names))
    tasks = [(config, s, names, crn) for s in config.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_seed_job, tasks))
    else:
        per_seed = [_seed_job(t) for t in tasks]
    return {name: [row[i] for row in per_seed] for i, name in enumerate(names)}


@dataclass
class ExperimentResult:
    arm_a: str
    arm_b: str
    lift: LiftTable
    outcomes_a: list[ArmOutcome]
    outcomes_b: list[ArmOutcome]

    def values(self, arm: str, metric: str) -> np.ndarray:
        rows = self.outcomes_a if arm == self.arm_a else self.outcomes_b
        return np.array([o.report.metric(metric) for o in rows])

    def to_dict(self) -> dict:
        return {"arm_a": self.arm_a, "arm_b": self.arm_b, "lift": self.lift.to_dict(),
                "outcomes_a": [o.to_dict() for o in self.outcomes_a],
                "outcomes_b": [o.to_dict() for o in self.outcomes_b]}


def dumps(data) -> str:
    return json.dumps(data, sort_keys=True, indent=1) + "\n"


def run_experiment(config: ExperimentConfig, arm_a: str, arm_b: str,
                   out_dir: str | Path | None = None, jobs: int = 1,
                   crn: bool = True) -> ExperimentResult:
    """Paired A/B over ``config.seeds``; lifts are (A - B) / B per seed."""
    config.arm(arm_a)
    config.arm(arm_b)
    outcomes = run_arms(config, [arm_a, arm_b], jobs, crn)
    table = compare([o.report for o in outcomes[arm_a]], [o.report for o in outcomes[arm_b]],
                    label=f"{arm_a} vs {arm_b}")
    result = ExperimentResult(arm_a, arm_b, table, outcomes[arm_a], outcomes[arm_b])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{arm_a}_vs_{arm_b}"
        (out / f"{stem}.json").write_text(dumps(result.to_dict()))
        (out / f"{stem}.txt").write_text(table.to_text())
    return result
