"""Shared helpers: in-process stub analyses and fixture games.

Building an analysis in-process (StubModel + ingest_response) gives tests
the exact numbers the stub subprocess would produce, without the spawn cost.
Subprocess paths are exercised where the wire protocol itself is the thing
under test.
"""

from __future__ import annotations

import pytest

from goscreen import board
from goscreen.engine import AnalysisQuery, TurnAnalysis, ingest_response
from goscreen.fixtures import noisy_human_game, perfect_player_game
from goscreen.sgf import GameRecord
from goscreen.stub import StubModel, derive_model_seed

FIXTURE_SEED = 7
FIXTURE_VISITS = 200


def record_query(record: GameRecord, *, visits: int, include_final: bool = True, include_policy: bool = True, query_id: str = "t") -> AnalysisQuery:
    n = len(record.moves)
    return AnalysisQuery(
        id=query_id,
        moves=[(m.color, board.to_engine_coord(m.point, record.size)) for m in record.moves],
        initial_stones=[(c, board.to_engine_coord(p, record.size)) for c, p in record.setup_stones],
        rules="tromp-taylor",
        komi=record.komi,
        board_size=record.size,
        analyze_turns=list(range(n + 1 if include_final else max(n, 1))),
        max_visits=visits,
        include_policy=include_policy,
    )


def analyze_with_model(record: GameRecord, model: StubModel, *, visits: int = FIXTURE_VISITS, include_final: bool = True) -> list[TurnAnalysis]:
    """What analyze_game would return against the stub, computed in-process."""
    query = record_query(record, visits=visits, include_final=include_final)
    return [ingest_response(resp, query) for resp in model.respond(query.to_wire())]


def fixture_model(seed: int = FIXTURE_SEED, label: str = "net") -> StubModel:
    return StubModel(derive_model_seed(seed, label))


@pytest.fixture(scope="session")
def perfect_game() -> GameRecord:
    return perfect_player_game(FIXTURE_SEED)


@pytest.fixture(scope="session")
def noisy_game() -> GameRecord:
    return noisy_human_game(FIXTURE_SEED)


@pytest.fixture(scope="session")
def perfect_analyses(perfect_game) -> list[TurnAnalysis]:
    return analyze_with_model(perfect_game, fixture_model())


@pytest.fixture(scope="session")
def noisy_analyses(noisy_game) -> list[TurnAnalysis]:
    return analyze_with_model(noisy_game, fixture_model())


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """One visible pass/fail line per acceptance criterion."""
    outcome = yield
    result = outcome.get_result()
    if result.when != "call" or "test_acceptance" not in str(item.fspath):
        return
    label = item.name.replace("test_", "").replace("_", " ")
    status = "PASS" if result.passed else "FAIL"
    print(f"\n[acceptance] {label}: {status}", flush=True)
