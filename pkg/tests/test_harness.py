import hashlib
import json
from dataclasses import replace

import numpy as np
import pytest

from slatelab import cli
from slatelab.errors import ConfigError
from slatelab.harness import (
    ArmConfig,
    config_from_dict,
    config_to_dict,
    dumps,
    eval_seed,
    load_config,
    load_config_dict,
    run_arms,
    run_experiment,
)
from slatelab.metrics import compare
from slatelab.oracles import run_all
from slatelab.ranker import EnsembleWeights
from slatelab.worldsim import World


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- configuration ---------------------------------------------------------------------


@pytest.mark.parametrize("name", ["calibration", "greedy_trap", "cross_stage", "cross_stage_null"])
def test_packaged_configs_load(name):
    cfg = load_config(name)
    assert cfg.name == name and cfg.seeds
    for a, b in cfg.comparisons:
        assert a in cfg.arms and b in cfg.arms


def test_child_arms_replace_parent_arms():
    assert set(load_config("greedy_trap").arms) == {"msc_on", "msc_off"}
    assert load_config("greedy_trap").world.exit_after_conversion == 0.9
    assert load_config("greedy_trap").world.n_users == load_config("calibration").world.n_users


def test_config_round_trip(tiny_config):
    again = config_from_dict(json.loads(json.dumps(config_to_dict(tiny_config))))
    assert again == tiny_config


def test_config_errors(tiny_config):
    with pytest.raises(ConfigError):
        tiny_config.arm("nope")
    with pytest.raises(ConfigError):
        tiny_config.with_seeds([])
    data = load_config_dict("calibration")
    with pytest.raises(ConfigError):
        config_from_dict({**data, "comparisons": [["vtr5", "ghost"]]})
    with pytest.raises(ConfigError):
        config_from_dict({**data, "world": {**data["world"], "n_usres": 3}})
    with pytest.raises(ConfigError):
        ArmConfig.from_dict("x", {"weights": [1, 1, 1], "colour": "red"})
    with pytest.raises(ConfigError):
        ArmConfig.from_dict("x", {"predictor": "crystal_ball"})
    with pytest.raises(ConfigError):
        config_from_dict({**data, "simulation": {"logging_days": 1}})


def test_tuning_an_oracle_arm_is_rejected(tiny_config):
    cfg = replace(tiny_config, arms={**tiny_config.arms,
                                     "bad": ArmConfig("bad", tuned=True, predictor="oracle")})
    with pytest.raises(ConfigError):
        run_arms(cfg.with_seeds([0]), ["bad"])


def test_eval_seeds():
    assert eval_seed(3) == eval_seed(3)
    assert eval_seed(3, "a") != eval_seed(3, "b")


# -- in-process experiments ---------------------------------------------------------------


def test_same_arm_zero_lift_and_rerun_identical(tiny_config, tmp_path):
    a = run_experiment(tiny_config, "sdr_raw", "sdr_raw", tmp_path / "one")
    for row in a.lift.rows:
        assert row.mean_lift in (None, 0.0)
    run_experiment(tiny_config, "msc1", "tuned", tmp_path / "one")
    run_experiment(tiny_config, "msc1", "tuned", tmp_path / "two")
    for name in ("msc1_vs_tuned.json", "msc1_vs_tuned.txt"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_results_independent_of_jobs(tiny_config):
    one = run_arms(tiny_config, ["single_obj", "msc1"], jobs=1)
    two = run_arms(tiny_config, ["single_obj", "msc1"], jobs=2)
    assert dumps({k: [o.to_dict() for o in v] for k, v in one.items()}) == \
        dumps({k: [o.to_dict() for o in v] for k, v in two.items()})


def test_unwritable_output_dir(tiny_config, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        run_experiment(tiny_config.with_seeds([0]), "sdr_raw", "single_obj", blocker / "sub")


def test_common_random_numbers_shrink_the_interval(tiny_config):
    cfg = replace(tiny_config, arms={
        "a": ArmConfig("a", EnsembleWeights(0, 1, 0), predictor="oracle"),
        "b": ArmConfig("b", EnsembleWeights(1, 1, 0), predictor="oracle"),
    }, comparisons=()).with_seeds(range(30))
    cfg = replace(cfg, world=replace(cfg.world, n_users=200))

    def width(crn):
        out = run_arms(cfg, ["a", "b"], crn=crn)
        row = compare([o.report for o in out["a"]], [o.report for o in out["b"]], ("ipv",)).row("ipv")
        return row.ci_high - row.ci_low

    assert width(True) < width(False)


# -- staged CLI ---------------------------------------------------------------------------


def test_report_on_empty_directory_is_dependency_error(tiny_config_path, tmp_path, capsys):
    assert cli.main(["report", "--config", str(tiny_config_path), "--out", str(tmp_path)]) == 3
    assert "gen-world" in capsys.readouterr().err


def test_stage_before_upstream(tiny_config_path, tmp_path, capsys):
    cfg, out = str(tiny_config_path), str(tmp_path)
    assert cli.main(["gen-world", "--config", cfg, "--out", out]) == 0
    assert cli.main(["build-labels", "--config", cfg, "--out", out]) == 3
    assert "'simulate'" in capsys.readouterr().err


def test_config_errors_exit_2(tiny_config_path, tmp_path):
    assert cli.main(["gen-world", "--out", str(tmp_path)]) == 2
    assert cli.main(["train", "--config", str(tiny_config_path), "--out", str(tmp_path), "--arm", "x"]) == 2
    assert cli.main(["gen-world", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) in (1, 2)


def test_gen_world_twice_same_hash(tiny_config_path, tmp_path):
    args = ["gen-world", "--config", str(tiny_config_path), "--out", str(tmp_path)]
    cli.main(args)
    first = _sha(tmp_path / "seed_0" / "world.json")
    cli.main(args)
    assert _sha(tmp_path / "seed_0" / "world.json") == first
    World.from_dict(json.loads((tmp_path / "seed_0" / "world.json").read_text()))


def test_seed_offset(tiny_config_path, tmp_path):
    cli.main(["gen-world", "--config", str(tiny_config_path), "--out", str(tmp_path), "--seed-offset", "5"])
    assert sorted(p.name for p in tmp_path.glob("seed_*")) == ["seed_5", "seed_6"]


@pytest.fixture(scope="module")
def staged(tiny_config_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("staged")
    assert cli.main(["run", "--config", str(tiny_config_path), "--out", str(out)]) == 0
    return out


def test_staged_matches_in_process(staged, tiny_config):
    outcomes = run_arms(tiny_config, sorted(tiny_config.arms))
    for arm, rows in outcomes.items():
        for o in rows:
            saved = json.loads((staged / f"seed_{o.seed}" / "arms" / arm / "metrics.json").read_text())
            assert saved["report"] == o.report.to_dict()
            w = json.loads((staged / f"seed_{o.seed}" / "arms" / arm / "weights.json").read_text())
            np.testing.assert_allclose(w["weights"], o.weights.as_tuple(), rtol=0, atol=0)


def test_stage_rerun_is_byte_identical(staged, tiny_config_path):
    arm = staged / "seed_0" / "arms" / "msc1"
    before = {p.name: _sha(p) for p in arm.iterdir()}
    for stage in ("build-labels", "train", "tune", "rank", "rerank"):
        assert cli.main([stage, "--config", str(tiny_config_path), "--out", str(staged), "--arm", "msc1"]) == 0
    assert cli.main(["simulate", "--config", str(tiny_config_path), "--out", str(staged), "--arm", "msc1"]) == 0
    assert {p.name: _sha(p) for p in arm.iterdir()} == before


def test_arm_directories_are_isolated(staged):
    for arm_dir in (staged / "seed_0" / "arms").iterdir():
        names = {p.name for p in arm_dir.iterdir()}
        assert {"weights.json", "rank.jsonl", "rerank.jsonl", "eval_logs.jsonl", "metrics.json"} <= names
    assert not (staged / "seed_0" / "arms" / "oracle_la" / "model.json").exists()


def test_staged_artifacts(staged):
    report = json.loads((staged / "report.json").read_text())
    assert [t["label"] for t in report["lifts"]] == ["sdr_raw vs single_obj", "msc1 vs tuned"]
    row = json.loads((staged / "seed_0" / "arms" / "msc1" / "rerank.jsonl").read_text().splitlines()[0])
    assert sorted(row["hit"]) == ["1", "2", "3", "4"] and len(row["reranked"]) == 4
    model = json.loads((staged / "seed_0" / "arms" / "tuned" / "model.json").read_text())
    assert model["v"] == 1 and set(model["heads"]) >= {"vtr", "cvr", "sdr"}
    trace = (staged / "seed_0" / "arms" / "tuned" / "tune_trace.jsonl").read_text().splitlines()
    assert len(trace) == 12
    first = json.loads((staged / "seed_0" / "logging.jsonl").read_text().splitlines()[0])
    assert first["v"] == 1
    assert "DAU proxy" in (staged / "report.txt").read_text()


def test_binary_model_format(tiny_config, tmp_path):
    cfg = replace(tiny_config, model_format="binary", arms={"s": replace(tiny_config.arm("sdr_raw"), name="s")},
                  comparisons=()).with_seeds([0])
    pipe = cli.Pipeline(cfg, tmp_path)
    pipe.run_all()
    assert (tmp_path / "seed_0" / "arms" / "s" / "model.bin").read_bytes()[:4] == b"SLPM"


# -- oracle suites ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def oracle_results():
    return {r.name: r for r in run_all(quick=True)}


@pytest.mark.parametrize("suite", ["beam_equals_brute_force", "brute_force_matches_reference",
                                   "beam_quality_B25", "auc_pairwise", "spearman_rank_pearson",
                                   "bce_gradient_fd", "exposure_probs", "hitrate_set_overlap"])
def test_oracle_suite_passes(oracle_results, suite):
    assert oracle_results[suite].passed, oracle_results[suite].line()


def test_oracle_check_exit_code(oracle_results, capsys):
    code = cli.main(["oracle-check", "--quick"])
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == len(oracle_results)
    assert code == (0 if all(r.passed for r in oracle_results.values()) else 4)
