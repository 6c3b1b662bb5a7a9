"""Screening report suite: indicator rules, determinism, symmetry, goldens."""

import copy
import json
import re
from pathlib import Path

import pytest

from goscreen.board import BLACK, WHITE, Move
from goscreen.engine import CandidateMove, TurnAnalysis
from goscreen.fixtures import perfect_player_game
from goscreen.metrics import PlayerSummary
from goscreen.report import (
    CLEAN,
    INCONCLUSIVE,
    SUSPICIOUS,
    Indicator,
    SuspicionReport,
    Thresholds,
    build_indicators,
    build_report,
    emit_plot_specs,
    emit_report,
    suspicion_level,
)

from conftest import FIXTURE_SEED, analyze_with_model, fixture_model

GOLDEN_DIR = Path(__file__).parent / "data" / "golden"


def summary(
    color=WHITE,
    average_effect=-0.2,
    winrate98_turn=None,
    pre=-0.05,
    post=None,
    post_moves=0,
    top1=0.6,
    measured=50,
) -> PlayerSummary:
    return PlayerSummary(
        color=color,
        average_effect=average_effect,
        effect_stddev=0.2,
        cma_series=[average_effect] * measured,
        hit_rate=0.6,
        hits=30,
        positions=measured,
        top_k_match_rate={1: top1, 3: min(1.0, top1 + 0.3), 5: min(1.0, top1 + 0.4)},
        winrate98_turn=winrate98_turn,
        avg_effect_pre98=pre,
        avg_effect_post98=post,
        moves_post98=post_moves,
        kl_mean=0.05,
        kl_max=0.2,
        moves_measured=measured,
    )


def rising_winrates(n=120, pin_from=60):
    return [min(0.5 + 0.012 * i, 0.999) for i in range(pin_from)] + [0.99] * (n - pin_from)


def verdicts(indicators):
    return {i.name: i.verdict for i in indicators}


def test_engine_like_player_trips_all_indicators():
    t = Thresholds()
    s = summary(average_effect=-0.2, winrate98_turn=60, pre=-0.02, post=-0.5, post_moves=12, top1=0.62)
    out = build_indicators(s, rising_winrates(), volatility=1.2, thresholds=t)
    assert verdicts(out) == {
        "one-sided-winrate": SUSPICIOUS,
        "average-effect": SUSPICIOUS,
        "post98-sag": SUSPICIOUS,
        "top1-match": SUSPICIOUS,
        "effect-vs-volatility": SUSPICIOUS,
    }


def test_human_player_reads_clean():
    t = Thresholds()
    s = summary(average_effect=-0.9, winrate98_turn=None, top1=0.1)
    swingy = [0.5, 0.7, 0.4, 0.65, 0.3, 0.6, 0.45] * 10
    out = build_indicators(s, swingy, volatility=1.2, thresholds=t)
    assert verdicts(out)["one-sided-winrate"] == CLEAN
    assert verdicts(out)["average-effect"] == CLEAN
    assert verdicts(out)["post98-sag"] == INCONCLUSIVE
    assert verdicts(out)["top1-match"] == CLEAN
    assert verdicts(out)["effect-vs-volatility"] == CLEAN


def test_sag_inconclusive_when_winrate_not_pinned():
    t = Thresholds()
    s = summary(winrate98_turn=60, pre=-0.02, post=-0.5, post_moves=12)
    wobble = rising_winrates()
    wobble[80] = 0.62  # the win rate falls away after pinning
    out = build_indicators(s, wobble, volatility=1.2, thresholds=t)
    assert verdicts(out)["post98-sag"] == INCONCLUSIVE


def test_sag_inconclusive_with_few_post_moves():
    t = Thresholds()
    s = summary(winrate98_turn=110, pre=-0.02, post=-0.9, post_moves=2)
    out = build_indicators(s, rising_winrates(pin_from=110), volatility=1.2, thresholds=t)
    assert verdicts(out)["post98-sag"] == INCONCLUSIVE


def test_never_reaching_gate_is_inconclusive():
    t = Thresholds()
    out = build_indicators(summary(), [0.5, 0.45, 0.4, 0.35] * 20, volatility=1.2, thresholds=t)
    assert verdicts(out)["one-sided-winrate"] == INCONCLUSIVE


def test_insufficient_data_marks_everything_inconclusive():
    t = Thresholds()
    s = summary(measured=5)
    out = build_indicators(s, rising_winrates(), volatility=1.2, thresholds=t)
    assert all(i.verdict == INCONCLUSIVE for i in out)
    assert all("insufficient data" in i.narrative for i in out)
    out = build_indicators(None, rising_winrates(), volatility=None, thresholds=t)
    assert all(i.verdict == INCONCLUSIVE for i in out)


def test_ten_move_game_is_inconclusive():
    record = perfect_player_game(FIXTURE_SEED, n_moves=10)
    analyses = analyze_with_model(record, fixture_model(), visits=60)
    report = build_report(record, analyses)
    for color in (BLACK, WHITE):
        assert all(i.verdict == INCONCLUSIVE for i in report.players[color].indicators)
        assert report.players[color].level == "none"


# --- suspicion rule table -----------------------------------------------------


def fake_indicator(step, verdict):
    return Indicator(name=f"i{step}-{verdict}", step=step, value=0.0, threshold=0.0, direction="above", verdict=verdict, narrative="")


def test_rule_table():
    # five suspicious spanning all steps -> strong
    level, trace = suspicion_level([fake_indicator(s, SUSPICIOUS) for s in (1, 2, 2, 3, 3)])
    assert level == "strong"
    assert any("strong" in line for line in trace)
    # one suspicious -> none
    level, _ = suspicion_level([fake_indicator(1, SUSPICIOUS), fake_indicator(2, CLEAN)])
    assert level == "none"
    # two suspicious from the same step -> weak
    level, _ = suspicion_level([fake_indicator(2, SUSPICIOUS), fake_indicator(2, SUSPICIOUS), fake_indicator(1, CLEAN)])
    assert level == "weak"
    # three suspicious missing a step -> weak, not strong
    level, _ = suspicion_level([fake_indicator(2, SUSPICIOUS), fake_indicator(2, SUSPICIOUS), fake_indicator(3, SUSPICIOUS)])
    assert level == "weak"


def test_monotonicity_worse_effects_never_raise_suspicion():
    t = Thresholds()
    order = {"none": 0, "weak": 1, "strong": 2}
    winrates = rising_winrates()
    for base_effect in (-0.1, -0.3, -0.34, -0.5):
        for shift in (0.0, 0.1, 0.4, 1.0):
            baseline = summary(average_effect=base_effect, winrate98_turn=60, pre=base_effect, post=base_effect - 0.4, post_moves=10)
            worse = summary(
                average_effect=base_effect - shift,
                winrate98_turn=60,
                pre=base_effect - shift,
                post=base_effect - 0.4 - shift,
                post_moves=10,
            )
            level_base, _ = suspicion_level(build_indicators(baseline, winrates, 1.2, t))
            level_worse, _ = suspicion_level(build_indicators(worse, winrates, 1.2, t))
            assert order[level_worse] <= order[level_base]


# --- report assembly ----------------------------------------------------------


def test_fixture_reports_discriminate(perfect_game, perfect_analyses, noisy_game, noisy_analyses):
    report = build_report(perfect_game, perfect_analyses)
    assert report.players[WHITE].level == "strong"
    assert report.players[BLACK].level == "none"
    noisy_report = build_report(noisy_game, noisy_analyses)
    assert noisy_report.players[WHITE].level == "none"
    assert noisy_report.players[BLACK].level == "none"


def test_series_lengths_match_analyzed_turns(perfect_game, perfect_analyses):
    report = build_report(perfect_game, perfect_analyses)
    n_positions = len(perfect_analyses)
    win_rows = report.series["win_rate"]
    assert len(win_rows) == 2 * n_positions  # one row per position per player
    n_moves = len(perfect_game.moves)
    per_player = report.series["score_means"]
    assert len(per_player[BLACK]) + len(per_player[WHITE]) == n_moves
    assert len(report.series["effect_cma"]) == n_moves  # every move measured here


def test_emit_deterministic_and_round_trips(perfect_game, perfect_analyses):
    report = build_report(perfect_game, perfect_analyses, source="fixture.sgf", network="net", visits=200)
    assert emit_report(report, "json") == emit_report(report, "json")
    assert emit_report(report, "text") == emit_report(report, "text")
    parsed = SuspicionReport.from_json(json.loads(emit_report(report, "json")))
    assert parsed == report


def test_text_report_names_each_indicator_once(perfect_game, perfect_analyses):
    report = build_report(perfect_game, perfect_analyses)
    text = emit_report(report, "text").decode()
    for section in report.players.values():
        for indicator in section.indicators:
            # once per player section
            assert len(re.findall(rf"\b{re.escape(indicator.name)}\b", text)) == 2
    assert "hard evidence" not in text  # caveat is our own wording
    assert report.caveat in text


def test_handicap_banner(perfect_game, perfect_analyses):
    record = copy.copy(perfect_game)
    record.handicap = 2
    report = build_report(record, perfect_analyses)
    assert report.game["handicap_banner"] is True
    assert b"handicap" in emit_report(report, "text")


def test_timing_stats_descriptive_only(perfect_game, perfect_analyses):
    times = [float(5 + (i % 3)) for i in range(len(perfect_game.moves))]
    report = build_report(perfect_game, perfect_analyses, move_times=times)
    assert report.timing is not None
    assert set(report.timing) == {BLACK, WHITE}
    assert report.timing[BLACK]["count"] == 55
    # indicators identical with and without timing
    without = build_report(perfect_game, perfect_analyses)
    assert [i.to_json() for i in report.players[WHITE].indicators] == [
        i.to_json() for i in without.players[WHITE].indicators
    ]


def test_color_swap_symmetry(perfect_game, perfect_analyses):
    flipped_record = copy.copy(perfect_game)
    flipped_record.moves = [Move(WHITE if m.color == BLACK else BLACK, m.point) for m in perfect_game.moves]
    flipped_record.player_names = {
        BLACK: perfect_game.player_names.get(WHITE, ""),
        WHITE: perfect_game.player_names.get(BLACK, ""),
    }
    flipped_analyses = [
        TurnAnalysis(
            turn_index=a.turn_index,
            to_move=WHITE if a.to_move == BLACK else BLACK,
            root_winrate=1.0 - a.root_winrate,
            root_score_mean=-a.root_score_mean,
            total_visits=a.total_visits,
            candidates=[CandidateMove(c.move, c.visits, 1.0 - c.winrate, -c.score_mean, c.prior, c.pv) for c in a.candidates],
            raw_policy=a.raw_policy,
        )
        for a in perfect_analyses
    ]
    original = build_report(perfect_game, perfect_analyses).to_json()
    flipped = build_report(flipped_record, flipped_analyses).to_json()

    def neutral(payload, color):
        section = copy.deepcopy(payload["players"][color])
        if section["summary"]:
            section["summary"]["color"] = "?"
        return section

    assert neutral(original, BLACK) == neutral(flipped, WHITE)
    assert neutral(original, WHITE) == neutral(flipped, BLACK)
    # series swap exactly
    original_w = [r for r in original["series"]["win_rate"] if r["player"] == WHITE]
    flipped_b = [r for r in flipped["series"]["win_rate"] if r["player"] == BLACK]
    assert [r["winrate"] for r in original_w] == [r["winrate"] for r in flipped_b]
    assert original["series"]["score_means"][WHITE] == flipped["series"]["score_means"][BLACK]


# --- thresholds file ----------------------------------------------------------


def test_thresholds_file_round_trip(tmp_path):
    path = tmp_path / "thresholds.cfg"
    path.write_text("# screening knobs\navg_effect_floor = -0.5\nmin_moves = 30\n", encoding="utf-8")
    t = Thresholds.from_file(path)
    assert t.avg_effect_floor == -0.5
    assert t.min_moves == 30
    assert t.top1_match == 0.55  # untouched default

    bad = tmp_path / "bad.cfg"
    bad.write_text("not_a_knob = 1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        Thresholds.from_file(bad)


# --- golden plot specs ----------------------------------------------------------


def golden_report():
    record = perfect_player_game(11, n_moves=40)
    analyses = analyze_with_model(record, fixture_model(11), visits=80)
    return build_report(record, analyses, source="golden.sgf", network="net", visits=80)


def test_plot_specs_match_goldens(tmp_path):
    report = golden_report()
    written = emit_plot_specs(report, tmp_path)
    assert sorted(p.name for p in written) == sorted(p.name for p in GOLDEN_DIR.iterdir())
    for path in written:
        golden = (GOLDEN_DIR / path.name).read_bytes()
        assert path.read_bytes() == golden, f"{path.name} deviates from its golden copy"


def test_plot_spec_row_counts(perfect_game, perfect_analyses, tmp_path):
    report = build_report(perfect_game, perfect_analyses)
    written = {p.name: p for p in emit_plot_specs(report, tmp_path)}
    spec = json.loads(written["win_rate.vl.json"].read_text())
    assert len(spec["data"]["values"]) == 2 * len(perfect_analyses)
    assert {"score_means_black.vl.json", "score_means_white.vl.json"} <= set(written)
    csv_rows = written["win_rate.csv"].read_text().splitlines()
    assert len(csv_rows) - 1 == len(spec["data"]["values"])
