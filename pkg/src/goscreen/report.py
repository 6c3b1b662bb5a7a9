"""Assemble per-game suspicion evidence and emit reports and plot data.

The screening runs the three-step check an arbiter would: the shape of the
win-rate graph, the development of each player's average effect (including
behavior once the win rate pins near certainty), and how the player's choices
compare to the engine's recommendations. Every threshold here is an
implementer-chosen default, shipped in a config file and echoed into the
output; none comes from a calibrated study. Verdicts are suspicion levels
with an evidence trace, never an accusation.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

from .board import BLACK, WHITE
from .engine import TurnAnalysis
from .metrics import NoMovesForColor, PlayerSummary, player_summary, turn_metrics
from .sgf import GameRecord

REPORT_SCHEMA = "goscreen-report/1"
VEGA_SCHEMA = "https://vega.github.io/schema/vega-lite/v5.json"

CAVEAT = (
    "These indicators are statistical evidence only, not proof: honest games can "
    "trip them and assisted games can evade them. Any action needs a human "
    "arbiter weighing this report."
)

SUSPICIOUS = "suspicious"
CLEAN = "clean"
INCONCLUSIVE = "inconclusive"

COLOR_NAMES = {BLACK: "black", WHITE: "white"}


@dataclass
class Thresholds:
    """Screening knobs; defaults are documented implementer choices."""

    min_moves: int = 20  # fewer measured moves than this -> everything inconclusive
    winrate_gate: float = 0.60  # drawdown is tracked after the win rate first hits this
    drawdown_limit: float = 0.05  # max tolerated win-rate drawdown for a one-sided game
    avg_effect_floor: float = -0.35  # average effect at or above this is engine-like
    win_threshold: float = 0.98  # the "game is decided" win rate
    pinned_slack: float = 0.005  # how far below the threshold still counts as pinned
    post98_sag: float = 0.30  # points of average-effect degradation after pinning
    post98_min_moves: int = 5  # measured moves needed after pinning to judge the sag
    top1_match: float = 0.55  # share of moves matching the engine's top pick
    volatility_ratio: float = 0.25  # |avg effect| / candidate spread at or below this
    volatility_floor: float = 0.05  # spreads smaller than this make the ratio meaningless

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_file(cls, path: str | Path) -> "Thresholds":
        known = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, text = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown threshold {key!r}")
            text = text.strip()
            values[key] = int(text) if known[key] == "int" else float(text)
        return cls(**values)


@dataclass
class Indicator:
    name: str
    step: int  # 1 win-rate shape, 2 effect development, 3 engine comparison
    value: float | None
    threshold: float
    direction: str  # "above" or "below": which side of the threshold is suspicious
    verdict: str
    narrative: str

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "Indicator":
        return cls(**data)


def _verdict(value: float | None, threshold: float, direction: str) -> str:
    if value is None:
        return INCONCLUSIVE
    if direction == "above":
        return SUSPICIOUS if value >= threshold else CLEAN
    return SUSPICIOUS if value <= threshold else CLEAN


def _drawdown_after_gate(winrates: Sequence[float], gate: float) -> float | None:
    peak = None
    drawdown = None
    for value in winrates:
        if peak is None:
            if value >= gate:
                peak = value
                drawdown = 0.0
            continue
        peak = max(peak, value)
        drawdown = max(drawdown, peak - value)
    return drawdown


def build_indicators(
    summary: PlayerSummary | None,
    player_winrates: Sequence[float],
    volatility: float | None,
    thresholds: Thresholds,
) -> list[Indicator]:
    """The five screening indicators for one player.

    `player_winrates` is the full position series in this player's
    perspective; `volatility` is the mean spread between the engine's best
    and median candidate score means on this player's turns.
    """
    t = thresholds
    out: list[Indicator] = []

    drawdown = _drawdown_after_gate(player_winrates, t.winrate_gate)
    out.append(
        Indicator(
            name="one-sided-winrate",
            step=1,
            value=drawdown,
            threshold=t.drawdown_limit,
            direction="below",
            verdict=_verdict(drawdown, t.drawdown_limit, "below"),
            narrative=(
                f"win rate never reached {t.winrate_gate:.0%}"
                if drawdown is None
                else f"largest win-rate drawdown after first reaching {t.winrate_gate:.0%} was {drawdown:.1%}"
            ),
        )
    )

    avg = summary.average_effect if summary else None
    out.append(
        Indicator(
            name="average-effect",
            step=2,
            value=avg,
            threshold=t.avg_effect_floor,
            direction="above",
            verdict=_verdict(avg, t.avg_effect_floor, "above"),
            narrative=(
                "no measured moves"
                if avg is None
                else f"average effect {avg:.3f} points per move (engine-like at or above {t.avg_effect_floor})"
            ),
        )
    )

    sag = None
    sag_narrative = "win rate never pinned at the threshold"
    if summary is not None and summary.winrate98_turn is not None and summary.avg_effect_post98 is not None:
        tail = player_winrates[summary.winrate98_turn :]
        pinned = min(tail) >= t.win_threshold - t.pinned_slack if tail else False
        if summary.moves_post98 < t.post98_min_moves:
            sag_narrative = f"only {summary.moves_post98} measured moves after pinning (need {t.post98_min_moves})"
        elif not pinned:
            sag_narrative = "win rate did not stay pinned after crossing the threshold"
        else:
            sag = summary.avg_effect_pre98 - summary.avg_effect_post98
            sag_narrative = (
                f"average effect degraded by {sag:.3f} points after the win rate pinned "
                f"at {t.win_threshold:.0%} (turn {summary.winrate98_turn}) while staying pinned"
            )
    out.append(
        Indicator(
            name="post98-sag",
            step=2,
            value=sag,
            threshold=t.post98_sag,
            direction="above",
            verdict=_verdict(sag, t.post98_sag, "above"),
            narrative=sag_narrative,
        )
    )

    top1 = summary.top_k_match_rate.get(1) if summary else None
    out.append(
        Indicator(
            name="top1-match",
            step=3,
            value=top1,
            threshold=t.top1_match,
            direction="above",
            verdict=_verdict(top1, t.top1_match, "above"),
            narrative=("no ranked moves" if top1 is None else f"{top1:.1%} of moves were the engine's top pick"),
        )
    )

    ratio = None
    ratio_narrative = "candidate spread too small to judge"
    if summary is not None and volatility is not None and volatility >= t.volatility_floor:
        ratio = abs(summary.average_effect) / volatility
        ratio_narrative = (
            f"|average effect| is {ratio:.2f} of the best-to-median candidate spread "
            f"({volatility:.2f} points): low ratios mean near-optimal play in a volatile game"
        )
    out.append(
        Indicator(
            name="effect-vs-volatility",
            step=3,
            value=ratio,
            threshold=t.volatility_ratio,
            direction="below",
            verdict=_verdict(ratio, t.volatility_ratio, "below"),
            narrative=ratio_narrative,
        )
    )

    measured = summary.moves_measured if summary is not None else 0
    if measured < t.min_moves:
        for indicator in out:
            indicator.verdict = INCONCLUSIVE
            indicator.narrative = (
                f"insufficient data: {measured} measured moves (minimum {t.min_moves}); " + indicator.narrative
            )
    return out


def suspicion_level(indicators: Sequence[Indicator]) -> tuple[str, list[str]]:
    """Deterministic rule table over indicator verdicts.

    strong: at least three suspicious indicators covering all three steps;
    weak: at least two suspicious; none otherwise.
    """
    trace = []
    flagged = [i for i in indicators if i.verdict == SUSPICIOUS]
    for indicator in flagged:
        trace.append(f"step {indicator.step} indicator suspicious: {indicator.narrative}")
    steps = {i.step for i in flagged}
    if len(flagged) >= 3 and steps >= {1, 2, 3}:
        level = "strong"
        trace.append(f"{len(flagged)} suspicious indicators covering steps 1-3 -> strong")
    elif len(flagged) >= 2:
        level = "weak"
        trace.append(f"{len(flagged)} suspicious indicators (steps {sorted(steps)}) -> weak")
    else:
        level = "none"
        trace.append(f"{len(flagged)} suspicious indicator(s) -> none")
    return level, trace


@dataclass
class PlayerSection:
    color: str
    summary: PlayerSummary | None
    indicators: list[Indicator]
    level: str
    trace: list[str]


@dataclass
class SuspicionReport:
    game: dict
    players: dict[str, PlayerSection]
    series: dict
    thresholds: Thresholds
    warnings: list[str] = field(default_factory=list)
    timing: dict | None = None
    caveat: str = CAVEAT
    schema: str = REPORT_SCHEMA

    def to_json(self) -> dict:
        players = {}
        for color, section in self.players.items():
            players[color] = {
                "summary": _summary_to_json(section.summary),
                "indicators": [i.to_json() for i in section.indicators],
                "suspicion": {"level": section.level, "trace": section.trace},
            }
        return {
            "schema": self.schema,
            "game": self.game,
            "players": players,
            "series": self.series,
            "thresholds": self.thresholds.to_json(),
            "warnings": self.warnings,
            "timing": self.timing,
            "caveat": self.caveat,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SuspicionReport":
        players = {}
        for color, payload in data["players"].items():
            players[color] = PlayerSection(
                color=color,
                summary=_summary_from_json(payload["summary"]),
                indicators=[Indicator.from_json(i) for i in payload["indicators"]],
                level=payload["suspicion"]["level"],
                trace=list(payload["suspicion"]["trace"]),
            )
        return cls(
            game=data["game"],
            players=players,
            series=data["series"],
            thresholds=Thresholds(**data["thresholds"]),
            warnings=list(data["warnings"]),
            timing=data.get("timing"),
            caveat=data["caveat"],
            schema=data["schema"],
        )


def _summary_to_json(summary: PlayerSummary | None) -> dict | None:
    if summary is None:
        return None
    out = asdict(summary)
    out["top_k_match_rate"] = {str(k): v for k, v in summary.top_k_match_rate.items()}
    return out


def _summary_from_json(data: dict | None) -> PlayerSummary | None:
    if data is None:
        return None
    data = dict(data)
    data["top_k_match_rate"] = {int(k): v for k, v in data["top_k_match_rate"].items()}
    return PlayerSummary(**data)


def _timing_stats(move_times: Sequence[float | None] | None, movers: Sequence[str]) -> dict | None:
    if move_times is None:
        return None
    out = {}
    for color in (BLACK, WHITE):
        own = [t for t, m in zip(move_times, movers) if m == color and t is not None]
        if not own:
            continue
        out[color] = {
            "count": len(own),
            "mean": sum(own) / len(own),
            "stddev": statistics.pstdev(own) if len(own) > 1 else 0.0,
            "min": min(own),
            "max": max(own),
        }
    return out or None


def build_report(
    record: GameRecord,
    analyses: Sequence[TurnAnalysis],
    thresholds: Thresholds | None = None,
    *,
    source: str = "",
    network: str = "net",
    visits: int = 0,
    move_times: Sequence[float] | None = None,
) -> SuspicionReport:
    """Screen one analyzed game into a full per-player evidence report."""
    thresholds = thresholds or Thresholds()
    analyses = sorted(analyses, key=lambda a: a.turn_index)
    rows, warnings = turn_metrics(record, analyses)

    win_rows = []
    for analysis in analyses:
        for color in (BLACK, WHITE):
            value = analysis.root_winrate if color == BLACK else 1.0 - analysis.root_winrate
            win_rows.append({"turn": analysis.turn_index, "player": color, "winrate": value})

    score_series = {}
    cma_rows = []
    players = {}
    for color in (BLACK, WHITE):
        own = [r for r in rows if r.mover == color]
        score_series[color] = [
            {
                "turn": r.turn_index,
                "best": r.best_score_mean,
                "actual": r.actual_score_mean,
                "average": r.avg_score_mean,
                "median": r.median_score_mean,
            }
            for r in own
        ]
        try:
            summary = player_summary(rows, color, win_threshold=thresholds.win_threshold)
        except NoMovesForColor:
            summary = None
        if summary is not None:
            measured = [r for r in own if r.effect is not None]
            for r, cma in zip(measured, summary.cma_series):
                cma_rows.append({"turn": r.turn_index, "player": color, "effect": r.effect, "cma": cma})
        volatility = (
            sum(r.best_score_mean - r.median_score_mean for r in own) / len(own) if own else None
        )
        winrates = [a.root_winrate if color == BLACK else 1.0 - a.root_winrate for a in analyses]
        indicators = build_indicators(summary, winrates, volatility, thresholds)
        level, trace = suspicion_level(indicators)
        players[color] = PlayerSection(color=color, summary=summary, indicators=indicators, level=level, trace=trace)

    game = {
        "source": source,
        "size": record.size,
        "komi": record.komi,
        "handicap": record.handicap,
        "handicap_banner": record.handicap > 0 or bool(record.setup_stones),
        "players": {c: record.player_names.get(c, "") for c in (BLACK, WHITE)},
        "result": record.result,
        "moves": len(record.moves),
        "analyzed_positions": len(analyses),
        "network": network,
        "visits": visits,
    }
    series = {
        "win_rate": win_rows,
        "score_means": score_series,
        "effect_cma": cma_rows,
    }
    return SuspicionReport(
        game=game,
        players=players,
        series=series,
        thresholds=thresholds,
        warnings=warnings,
        timing=_timing_stats(move_times, [m.color for m in record.moves]),
    )


def emit_report(report: SuspicionReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n").encode("utf-8")
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")

    lines = []
    game = report.game
    lines.append("goscreen suspicion report")
    lines.append("=" * 60)
    source = game.get("source") or "(unnamed game)"
    lines.append(f"game: {source}")
    lines.append(
        f"board {game['size']}x{game['size']}, komi {game['komi']}, "
        f"{game['moves']} moves, result {game.get('result') or 'unknown'}"
    )
    lines.append(f"engine network: {game['network']} at {game['visits']} visits")
    if game.get("handicap_banner"):
        lines.append(
            "NOTE: handicap/setup stones present; score-mean behavior differs in "
            "handicap games, weigh the indicators accordingly."
        )
    for color in (BLACK, WHITE):
        section = report.players[color]
        name = game["players"].get(color) or COLOR_NAMES[color]
        lines.append("")
        lines.append(f"--- {COLOR_NAMES[color]} ({name}) ---")
        if section.summary is not None:
            s = section.summary
            lines.append(
                f"moves measured: {s.moves_measured}; average effect {s.average_effect:.4f} "
                f"(stddev {s.effect_stddev:.4f})"
            )
            match = ", ".join(f"top-{k} {v:.1%}" for k, v in sorted(s.top_k_match_rate.items()))
            lines.append(f"engine match: {match}; search hit rate {s.hit_rate:.1%} over {s.positions} positions")
            if s.winrate98_turn is not None:
                post = f"{s.avg_effect_post98:.4f}" if s.avg_effect_post98 is not None else "n/a"
                lines.append(
                    f"win rate pinned at turn {s.winrate98_turn}: average effect before {s.avg_effect_pre98:.4f}, "
                    f"after {post}"
                )
        else:
            lines.append("no measurable moves for this player")
        lines.append("indicators:")
        for indicator in section.indicators:
            value = "n/a" if indicator.value is None else f"{indicator.value:.4f}"
            lines.append(
                f"  [{indicator.verdict:>12}] {indicator.name} (step {indicator.step}): "
                f"{value} vs {indicator.threshold} ({indicator.direction}) - {indicator.narrative}"
            )
        lines.append(f"suspicion level: {section.level}")
        for entry in section.trace:
            lines.append(f"  * {entry}")
    if report.timing:
        lines.append("")
        lines.append("move timing (descriptive only, no indicator uses it):")
        for color, stats in sorted(report.timing.items()):
            lines.append(
                f"  {COLOR_NAMES.get(color, color)}: n={stats['count']} mean={stats['mean']:.2f}s "
                f"stddev={stats['stddev']:.2f}s range {stats['min']:.2f}-{stats['max']:.2f}s"
            )
    if report.warnings:
        lines.append("")
        lines.append("warnings:")
        for warning in report.warnings:
            lines.append(f"  - {warning}")
    lines.append("")
    lines.append(report.caveat)
    return ("\n".join(lines) + "\n").encode("utf-8")


def _vega_spec(description: str, rows: list[dict], encoding: dict, mark) -> dict:
    return {
        "$schema": VEGA_SCHEMA,
        "description": description,
        "width": 640,
        "height": 260,
        "data": {"values": rows},
        "mark": mark,
        "encoding": encoding,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    path.write_text(buffer.getvalue(), encoding="utf-8")


def emit_plot_specs(report: SuspicionReport, out_dir: str | Path) -> list[Path]:
    """One Vega-Lite document per figure family, data inline, plus CSV twins."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    win_rows = report.series["win_rate"]
    spec = _vega_spec(
        "win rate by turn, each player's perspective",
        win_rows,
        {
            "x": {"field": "turn", "type": "quantitative"},
            "y": {"field": "winrate", "type": "quantitative", "scale": {"domain": [0, 1]}},
            "color": {"field": "player", "type": "nominal"},
        },
        "line",
    )
    _write_json(out / "win_rate.vl.json", spec)
    _write_csv(out / "win_rate.csv", ["turn", "player", "winrate"], win_rows)
    written += [out / "win_rate.vl.json", out / "win_rate.csv"]

    for color in (BLACK, WHITE):
        rows = report.series["score_means"][color]
        folded = []
        for row in rows:
            for series_name in ("best", "actual", "average", "median"):
                if row[series_name] is None:
                    continue
                folded.append({"turn": row["turn"], "series": series_name, "points": row[series_name]})
        name = f"score_means_{COLOR_NAMES[color]}"
        spec = _vega_spec(
            f"candidate score means on {COLOR_NAMES[color]}'s turns (mover perspective)",
            folded,
            {
                "x": {"field": "turn", "type": "quantitative"},
                "y": {"field": "points", "type": "quantitative"},
                "color": {"field": "series", "type": "nominal"},
            },
            "line",
        )
        _write_json(out / f"{name}.vl.json", spec)
        _write_csv(out / f"{name}.csv", ["turn", "best", "actual", "average", "median"], rows)
        written += [out / f"{name}.vl.json", out / f"{name}.csv"]

    cma_rows = report.series["effect_cma"]
    spec = _vega_spec(
        "cumulative moving average of move effects per player",
        cma_rows,
        {
            "x": {"field": "turn", "type": "quantitative"},
            "y": {"field": "cma", "type": "quantitative"},
            "color": {"field": "player", "type": "nominal"},
        },
        "line",
    )
    _write_json(out / "effect_cma.vl.json", spec)
    _write_csv(out / "effect_cma.csv", ["turn", "player", "effect", "cma"], cma_rows)
    written += [out / "effect_cma.vl.json", out / "effect_cma.csv"]
    return written
