from dataclasses import replace
from pathlib import Path

import pytest

from slatelab.harness import load_config
from slatelab.ranker import RankingConfig
from slatelab.worldsim import WorldConfig, generate_world

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def tiny_config_path() -> Path:
    return DATA / "tiny.toml"


@pytest.fixture(scope="session")
def tiny_config(tiny_config_path):
    return load_config(tiny_config_path)


@pytest.fixture(scope="session")
def calibration():
    return load_config("calibration")


@pytest.fixture(scope="session")
def small_world():
    cfg = WorldConfig(n_users=40, n_categories=4, items_per_category=10)
    return generate_world(cfg, seed=3, m=4)


@pytest.fixture(scope="session")
def calibration_world(calibration):
    return generate_world(calibration.world, seed=0, m=calibration.ranking.m)


def ranking_config(**kw) -> RankingConfig:
    return replace(RankingConfig(n=10, m=4, K=4), **kw)


VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line, then assert it."""

    def record(criterion: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}"
        VERDICTS.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
