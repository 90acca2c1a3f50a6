"""Command-line entry point: staged pipeline over files plus paired experiments.

Layout under ``--out``::

    config.json
    seed_<s>/world.json
    seed_<s>/logging.jsonl
    seed_<s>/arms/<arm>/{train.jsonl, model.json|model.bin, train_metrics.jsonl,
                         weights.json, tune_trace.jsonl, rank.jsonl, rerank.jsonl,
                         eval_logs.jsonl, metrics.json}
    report.json, report.txt

Exit codes: 0 ok, 1 I/O error, 2 config error, 3 missing upstream artifact,
4 oracle failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DependencyError
from .features import Featurizer
from .harness import (ArmConfig, ExperimentConfig, config_to_dict, dumps, eval_seed,
                      load_config, logging_logs, logging_seed, make_world, run_experiment)
from .labels import TrainingSample, build_training_set, validation_set
from .metrics import compare, hitrate_at_k, session_metrics
from .policies import ModelScorer, OracleScorer, RankingPolicy
from .predictor import PredictorModel, train
from .ranker import EnsembleWeights, item_values, top_k
from .reranker import beam_search_arrays
from .tuner import tune
from .worldsim import SessionLog, SessionStream, World, simulate_days

STAGES = ("gen-world", "simulate", "build-labels", "train", "tune", "rank", "rerank", "report")


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    with path.open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


class Pipeline:
    """File-backed stages for one configuration; every stage loops over seeds."""

    def __init__(self, config: ExperimentConfig, out: Path, jobs: int = 1):
        self.config = config
        self.out = out
        self.jobs = jobs

    # -- paths and loaders ---------------------------------------------

    def seed_dir(self, seed: int) -> Path:
        return self.out / f"seed_{seed}"

    def arm_dir(self, seed: int, arm: str) -> Path:
        return self.seed_dir(seed) / "arms" / arm

    def model_path(self, seed: int, arm: str) -> Path:
        suffix = "bin" if self.config.model_format == "binary" else "json"
        return self.arm_dir(seed, arm) / f"model.{suffix}"

    @staticmethod
    def _need(path: Path, step: str) -> Path:
        if not path.is_file():
            raise DependencyError(step, str(path))
        return path

    def world(self, seed: int) -> World:
        path = self._need(self.seed_dir(seed) / "world.json", "gen-world")
        return World.from_dict(json.loads(path.read_text()))

    def logging(self, seed: int) -> list[list[SessionLog]]:
        path = self._need(self.seed_dir(seed) / "logging.jsonl", "simulate")
        days: dict[int, list[SessionLog]] = {}
        for row in _read_jsonl(path):
            log = SessionLog.from_dict(row)
            days.setdefault(log.day, []).append(log)
        return [days[d] for d in sorted(days)]

    def model(self, seed: int, arm: str) -> PredictorModel:
        return PredictorModel.load(self._need(self.model_path(seed, arm), "train"))

    def weights(self, seed: int, arm: str) -> dict:
        path = self._need(self.arm_dir(seed, arm) / "weights.json", "tune")
        return json.loads(path.read_text())

    def policy(self, seed: int, arm: ArmConfig, world: World, decisions=None) -> RankingPolicy:
        spec = arm.label_spec(self.config.labels)
        ranking = arm.ranking(self.config.ranking)
        w = self.weights(seed, arm.name)
        if arm.predictor == "oracle":
            scorer = OracleScorer(world, spec.vtr_threshold, ranking.m)
        else:
            scorer = ModelScorer(self.model(seed, arm.name), Featurizer(world, self.config.train.dim))
        return RankingPolicy(ranking, EnsembleWeights(*w["weights"]), scorer, arm.rerank,
                             self.config.beam.beam_width, decisions)

    # -- stages ----------------------------------------------------------

    def gen_world(self, seed: int, arm: ArmConfig | None = None) -> None:
        d = self.seed_dir(seed)
        d.mkdir(parents=True, exist_ok=True)
        (d / "world.json").write_text(json.dumps(make_world(self.config, seed).to_dict(),
                                                 sort_keys=True))

    def simulate(self, seed: int, arm: ArmConfig | None = None) -> None:
        world = self.world(seed)
        if arm is None:
            days = logging_logs(world, self.config, seed)
            _write_jsonl(self.seed_dir(seed) / "logging.jsonl",
                         (log.to_dict() for day in days for log in day))
            return
        decisions: list = []
        policy = self.policy(seed, arm, world, decisions)
        results = simulate_days(world, policy, self.config.simulation.eval_days, eval_seed(seed))
        logs = [log for r in results for log in r.logs]
        d = self.arm_dir(seed, arm.name)
        _write_jsonl(d / "eval_logs.jsonl", (log.to_dict() for log in logs))
        report = session_metrics(logs, world)
        (d / "metrics.json").write_text(dumps({"seed": seed, "arm": arm.name,
                                               "decisions": len(decisions),
                                               "report": report.to_dict()}))

    def build_labels(self, seed: int, arm: ArmConfig) -> None:
        world = self.world(seed)
        train_logs = [log for day in self.logging(seed)[:-1] for log in day]
        spec = arm.label_spec(self.config.labels)
        samples = build_training_set(train_logs, spec, Featurizer(world, self.config.train.dim))
        d = self.arm_dir(seed, arm.name)
        d.mkdir(parents=True, exist_ok=True)
        _write_jsonl(d / "train.jsonl", (s.to_dict() for s in samples))

    def train(self, seed: int, arm: ArmConfig) -> None:
        if arm.predictor == "oracle":
            return
        path = self._need(self.arm_dir(seed, arm.name) / "train.jsonl", "build-labels")
        samples = [TrainingSample.from_dict(r) for r in _read_jsonl(path)]
        model = train(samples, self.config.train, seed)
        model.save(self.model_path(seed, arm.name), self.config.model_format)
        _write_jsonl(self.arm_dir(seed, arm.name) / "train_metrics.jsonl", model.history)

    def tune(self, seed: int, arm: ArmConfig) -> None:
        d = self.arm_dir(seed, arm.name)
        d.mkdir(parents=True, exist_ok=True)
        ranking = arm.ranking(self.config.ranking)
        out = {"arm": arm.name, "tuned": arm.tuned, "weights": list(arm.weights.as_tuple()),
               "alpha": ranking.lookahead_coefficient}
        if arm.tuned:
            if arm.predictor == "oracle":
                raise ConfigError(f"arm {arm.name!r}: tuning needs a trained model")
            world = self.world(seed)
            model = self.model(seed, arm.name)
            spec = arm.label_spec(self.config.labels)
            vset = validation_set(self.logging(seed)[-1], spec,
                                  Featurizer(world, self.config.train.dim))
            tspec = replace(self.config.tune, seed=self.config.tune.seed + seed)
            result = tune(tspec, vset, model)
            out["weights"] = list(result.best_weights.as_tuple())
            out["objective"] = result.best_objective
            out["default_objective"] = result.trace[0][1]
            (d / "tune_trace.jsonl").write_text(result.trace_jsonl())
        (d / "weights.json").write_text(dumps(out))

    def _requests(self, seed: int, world: World) -> list[tuple[int, int, np.ndarray]]:
        """F-stage requests replayed from the held-out logging day."""
        r = self.config.ranking
        out = []
        for log in self.logging(seed)[-1]:
            if not log.entered_fstage:
                continue
            stream = SessionStream(logging_seed(seed), log.user_id, log.day, log.session_index,
                                   r.K, r.m, r.n)
            out.append((log.user_id, log.trigger_item_id,
                        stream.fstage_candidates(world, log.trigger_item_id)))
        return out

    def rank(self, seed: int, arm: ArmConfig) -> None:
        world = self.world(seed)
        policy = self.policy(seed, arm, world)
        rows = []
        for user, trigger, cands in self._requests(seed, world):
            scores = policy.scorer.fstage(user, trigger, cands)
            values = item_values(scores, policy.weights)
            idx = top_k(cands, values, policy.m)
            rows.append({"user_id": user, "trigger_item_id": trigger,
                         "candidates": cands.tolist(),
                         "pointwise": [int(cands[i]) for i in idx],
                         "values": values.tolist(),
                         "sdr": np.asarray(scores.get("sdr", np.ones(len(cands)))).tolist()})
        _write_jsonl(self.arm_dir(seed, arm.name) / "rank.jsonl", rows)

    def rerank(self, seed: int, arm: ArmConfig) -> None:
        path = self._need(self.arm_dir(seed, arm.name) / "rank.jsonl", "rank")
        m = self.config.ranking.m
        rows = []
        for row in _read_jsonl(path):
            ev = beam_search_arrays(row["candidates"], np.array(row["values"]),
                                    np.array(row["sdr"]), m, self.config.beam.beam_width)
            reranked = list(ev.permutation)
            rows.append({"user_id": row["user_id"], "trigger_item_id": row["trigger_item_id"],
                         "pointwise": row["pointwise"], "reranked": reranked,
                         "sequence_value": ev.sequence_value,
                         "hit": {str(k): hitrate_at_k(reranked, row["pointwise"], k)
                                 for k in range(1, m + 1)}})
        _write_jsonl(self.arm_dir(seed, arm.name) / "rerank.jsonl", rows)

    def report(self) -> dict:
        cfg = self.config
        arms = sorted(cfg.arms)
        per_arm: dict[str, list] = {a: [] for a in arms}
        hitrates: dict[str, dict[str, float]] = {}
        tuning: dict[str, list] = {}
        worlds = {s: self.world(s) for s in cfg.seeds}
        for a in arms:
            hits: dict[str, list[float]] = {}
            for s in cfg.seeds:
                path = self._need(self.arm_dir(s, a) / "eval_logs.jsonl", f"simulate --arm {a}")
                logs = [SessionLog.from_dict(r) for r in _read_jsonl(path)]
                per_arm[a].append(session_metrics(logs, worlds[s]))
                rr = self.arm_dir(s, a) / "rerank.jsonl"
                if rr.is_file():
                    for row in _read_jsonl(rr):
                        for k, v in row["hit"].items():
                            hits.setdefault(k, []).append(v)
                w = self.weights(s, a)
                if w.get("tuned"):
                    tuning.setdefault(a, []).append(
                        {"seed": s, "default": w["default_objective"], "best": w["objective"],
                         "weights": w["weights"]})
            if hits:
                hitrates[a] = {k: float(np.mean(v)) for k, v in sorted(hits.items(), key=lambda t: int(t[0]))}
        pairs = cfg.comparisons or tuple((a, arms[0]) for a in arms[1:])
        tables = [compare(per_arm[a], per_arm[b], label=f"{a} vs {b}") for a, b in pairs]
        report = {
            "name": cfg.name,
            "seeds": list(cfg.seeds),
            "arms": {a: [r.to_dict() for r in per_arm[a]] for a in arms},
            "lifts": [t.to_dict() for t in tables],
            "hitrate": hitrates,
            "tuning": tuning,
        }
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "report.json").write_text(dumps(report))
        text = [f"experiment {cfg.name}  seeds {list(cfg.seeds)}", ""]
        text += [t.to_text() for t in tables]
        for a, h in hitrates.items():
            text.append(f"hitrate {a}: " + "  ".join(f"@{k}={v:.3f}" for k, v in h.items()))
        for a, rows in tuning.items():
            gains = [r["best"] - r["default"] for r in rows]
            text.append(f"tuning {a}: mean AUC-sum gain {np.mean(gains):+.5f} over {len(rows)} seeds")
        (self.out / "report.txt").write_text("\n".join(text) + "\n")
        return report

    # -- drivers -----------------------------------------------------------

    def for_seeds(self, stage: str, arm: ArmConfig | None) -> None:
        tasks = [(self, stage, s, arm) for s in self.config.seeds]
        if self.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                list(pool.map(_stage_job, tasks))
        else:
            for t in tasks:
                _stage_job(t)

    def run_all(self) -> dict:
        self.write_config()
        self.for_seeds("gen_world", None)
        self.for_seeds("simulate", None)
        for name in sorted(self.config.arms):
            arm = self.config.arms[name]
            for stage in ("build_labels", "train", "tune", "rank", "rerank", "simulate"):
                if arm.predictor == "oracle" and stage in ("build_labels", "train"):
                    continue
                self.for_seeds(stage, arm)
        return self.report()

    def write_config(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "config.json").write_text(dumps(config_to_dict(self.config)))


def _stage_job(args) -> None:
    pipeline, stage, seed, arm = args
    getattr(pipeline, stage)(seed, arm)


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment TOML file or packaged config name")
    common.add_argument("--out", help="output directory (default: the config's output_dir)")
    common.add_argument("--seed-offset", type=int, default=0, help="added to every replicate seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes over seeds")
    common.add_argument("--arm", help="restrict a stage to one arm")

    p = argparse.ArgumentParser(prog="slatelab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    sub.add_parser("run", parents=[common], help="run every stage for every arm, then report")
    exp = sub.add_parser("experiment", parents=[common], help="paired multi-seed A/B comparisons")
    exp.add_argument("--a", dest="arm_a", help="treatment arm (default: all config comparisons)")
    exp.add_argument("--b", dest="arm_b", help="baseline arm")
    exp.add_argument("--no-crn", action="store_true", help="give each arm its own random numbers")
    oc = sub.add_parser("oracle-check", parents=[common], help="run the brute-force oracle suites")
    oc.add_argument("--quick", action="store_true", help="smaller instance counts")
    return p


def _config(args) -> tuple[ExperimentConfig, Path]:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed_offset:
        cfg = cfg.with_seeds([s + args.seed_offset for s in cfg.seeds])
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg, Path(args.out or cfg.output_dir)


def _arms(cfg: ExperimentConfig, name: str | None) -> list[ArmConfig]:
    if name is not None:
        return [cfg.arm(name)]
    return [cfg.arms[a] for a in sorted(cfg.arms)]


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "oracle-check":
            from .oracles import run_all
            results = run_all(quick=args.quick)
            for r in results:
                print(r.line())
            return 0 if all(r.passed for r in results) else 4
        cfg, out = _config(args)
        pipe = Pipeline(cfg, out, args.jobs)
        cmd = args.command
        if cmd == "run":
            pipe.run_all()
            print((out / "report.txt").read_text(), end="")
        elif cmd == "experiment":
            pairs = ([(args.arm_a, args.arm_b)] if args.arm_a else list(cfg.comparisons))
            if not pairs or any(b is None for _, b in pairs):
                raise ConfigError("give --a and --b or declare comparisons in the config")
            for a, b in pairs:
                res = run_experiment(cfg, a, b, out, args.jobs, crn=not args.no_crn)
                print(res.lift.to_text())
        elif cmd == "gen-world":
            pipe.write_config()
            pipe.for_seeds("gen_world", None)
        elif cmd == "simulate":
            pipe.for_seeds("simulate", cfg.arm(args.arm) if args.arm else None)
        elif cmd == "report":
            pipe.report()
            print((out / "report.txt").read_text(), end="")
        else:
            stage = cmd.replace("-", "_")
            for arm in _arms(cfg, args.arm):
                if arm.predictor == "oracle" and stage in ("build_labels", "train"):
                    continue
                pipe.for_seeds(stage, arm)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
