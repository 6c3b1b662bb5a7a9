"""Go game analysis toolkit: replay records, attach engine search statistics,
and derive move-effect and search-gap measures for strength benchmarks and
per-game screening reports."""

__version__ = "0.1.0"

from .board import BLACK, WHITE, BoardState, IllegalMoveError, Move, apply_move, replay
from .engine import (
    AnalysisCache,
    AnalysisQuery,
    CandidateMove,
    EngineHandle,
    TurnAnalysis,
    analyze_game,
    start_engine,
    stub_command,
)
from .metrics import (
    PlayerSummary,
    TurnMetrics,
    effect,
    hit_rate,
    player_summary,
    search_gap_kl,
    strength_bench,
    turn_metrics,
)
from .report import SuspicionReport, Thresholds, build_indicators, build_report, emit_plot_specs, emit_report, suspicion_level
from .sgf import GameRecord, ParseError, parse_sgf, write_sgf

__all__ = [
    "BLACK",
    "WHITE",
    "BoardState",
    "IllegalMoveError",
    "Move",
    "apply_move",
    "replay",
    "AnalysisCache",
    "AnalysisQuery",
    "CandidateMove",
    "EngineHandle",
    "TurnAnalysis",
    "analyze_game",
    "start_engine",
    "stub_command",
    "PlayerSummary",
    "TurnMetrics",
    "effect",
    "hit_rate",
    "player_summary",
    "search_gap_kl",
    "strength_bench",
    "turn_metrics",
    "SuspicionReport",
    "Thresholds",
    "build_indicators",
    "build_report",
    "emit_plot_specs",
    "emit_report",
    "suspicion_level",
    "GameRecord",
    "ParseError",
    "parse_sgf",
    "write_sgf",
]
