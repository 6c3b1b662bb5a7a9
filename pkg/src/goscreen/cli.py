"""Command-line driver: analyze | report | strength | calibrate.

Every command takes multiple inputs where that makes sense and writes
per-game subdirectories, so whole tournaments can be processed in one call.
Engines start lazily: a fully cached run never spawns the subprocess, which
also makes "rerun hits the cache" trivially observable.
"""

from __future__ import annotations

import argparse
import csv
import json
import shlex
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import board, metrics, plots
from .engine import (
    DEFAULT_RULES,
    AnalysisCache,
    EngineError,
    EngineHandle,
    MissingAnalysis,
    analyze_game,
    start_engine,
    stub_command,
)
from .report import Thresholds, build_report, emit_plot_specs, emit_report
from .sgf import GameRecord, ParseError, parse_sgf
from .stub import derive_model_seed

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2


@dataclass
class Config:
    engine: str | None = None
    stub: bool = False
    stub_shape: str = "default"
    stub_jitter: float = 0.0
    network_label: str = "net"
    rules: str = DEFAULT_RULES
    visits: int = 1600
    komi_override: float | None = None
    cache_dir: str = "analysis-cache"
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 1
    score_field: str = "scoreLead"
    leniency: bool = False
    figures: bool = True
    thresholds: Thresholds = field(default_factory=Thresholds)


_CONFIG_KEYS = {
    "engine": str,
    "stub": bool,
    "stub_shape": str,
    "stub_jitter": float,
    "network_label": str,
    "rules": str,
    "visits": int,
    "komi_override": float,
    "cache_dir": str,
    "out_dir": str,
    "seed": int,
    "jobs": int,
    "score_field": str,
    "leniency": bool,
    "thresholds": str,
}


def load_config_file(path: str | Path) -> dict:
    """Read `key = value` lines; # starts a comment. Flags override these."""
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, _, text = line.partition("=")
        key = key.strip()
        text = text.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        kind = _CONFIG_KEYS[key]
        if kind is bool:
            out[key] = text.lower() in ("1", "true", "yes", "on")
        elif kind is int:
            out[key] = int(text)
        elif kind is float:
            out[key] = float(text)
        else:
            out[key] = text
    return out


def build_config(args: argparse.Namespace) -> Config:
    config = Config()
    file_values = load_config_file(args.config) if args.config else {}
    thresholds_path = file_values.pop("thresholds", None)
    for key, value in file_values.items():
        setattr(config, key, value)
    for key in ("engine", "stub_shape", "network_label", "rules", "cache_dir", "komi_override"):
        value = getattr(args, key.replace("-", "_"), None)
        if isinstance(value, list):  # strength keeps --network-label repeatable
            continue
        if value is not None:
            setattr(config, key, value)
    if getattr(args, "out", None) is not None:
        config.out_dir = args.out
    for key in ("visits", "seed", "stub_jitter", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(config, key, value)
    if getattr(args, "stub", False):
        config.stub = True
    if getattr(args, "leniency", False):
        config.leniency = True
    if getattr(args, "no_figures", False):
        config.figures = False
    if getattr(args, "thresholds", None) is not None:
        thresholds_path = args.thresholds
    if thresholds_path:
        config.thresholds = Thresholds.from_file(thresholds_path)
    return config


class EnginePool:
    """Lazily started engines, one per network label, shared across workers."""

    def __init__(self, config: Config):
        self.config = config
        self.handles: dict[str, EngineHandle] = {}
        self._lock = threading.Lock()

    def get(self, label: str) -> EngineHandle:
        with self._lock:
            if label in self.handles:
                return self.handles[label]
            config = self.config
            if config.stub:
                cmd, env = stub_command(derive_model_seed(config.seed, label), shape=config.stub_shape, jitter=config.stub_jitter)
            elif config.engine:
                if self.handles:
                    raise MissingAnalysis("a live engine serves a single network label; analyze per network instead")
                cmd, env = shlex.split(config.engine), None
            else:
                raise MissingAnalysis(
                    f"no cached analysis for network {label!r} and no engine configured; "
                    "run `goscreen analyze` with --engine or --stub first"
                )
            handle = start_engine(cmd, name=label, env=env)
            self.handles[label] = handle
            return handle

    def close(self) -> None:
        with self._lock:
            for handle in self.handles.values():
                handle.close()
            self.handles.clear()


def load_record(path: Path, config: Config) -> tuple[GameRecord, list[str]]:
    record, warnings = parse_sgf(path.read_bytes())
    if config.leniency:
        result = board.replay(record, lenient=True)
        warnings = warnings + result.warnings
        record.moves = result.moves
    return record, warnings


def analyses_for(record: GameRecord, pool: EnginePool, cache: AnalysisCache, label: str, *, include_final: bool, query_id: str | None = None):
    config = pool.config
    kwargs = dict(
        max_visits=config.visits,
        rules=config.rules,
        komi=config.komi_override,
        include_final=include_final,
        cache=cache,
        network=label,
        score_field=config.score_field,
        query_id=query_id,
    )
    try:
        return analyze_game(None, record, **kwargs)
    except MissingAnalysis:
        return analyze_game(pool.get(label), record, **kwargs)


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def cmd_analyze(args: argparse.Namespace) -> int:
    config = build_config(args)
    cache = AnalysisCache(config.cache_dir)
    pool = EnginePool(config)

    def one_game(name: str) -> bool:
        path = Path(name)
        try:
            record, warnings = load_record(path, config)
            for warning in warnings:
                _info(f"{path}: warning: {warning}")
            analyses = analyses_for(record, pool, cache, config.network_label, include_final=args.include_final)
            _info(f"{path}: {len(analyses)} positions analyzed (network {config.network_label}, {config.visits} visits)")
            return True
        except (OSError, ParseError, board.IllegalMoveError, EngineError) as err:
            _info(f"{path}: error: {err}")
            return False

    try:
        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as workers:
                outcomes = list(workers.map(one_game, args.games))
        else:
            outcomes = [one_game(name) for name in args.games]
    finally:
        pool.close()
    failures = sum(1 for ok in outcomes if not ok)
    if failures == len(args.games):
        return EXIT_FATAL
    return EXIT_PARTIAL if failures else EXIT_OK


def _read_move_times(path: str | None) -> list[float] | None:
    if path is None:
        return None
    by_turn: dict[int, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            by_turn[int(row["turn"])] = float(row["seconds"])
    if not by_turn:
        return None
    return [by_turn.get(turn) for turn in range(max(by_turn) + 1)]


def _game_out_dir(base: Path, stem: str, used: set[str]) -> Path:
    candidate = stem
    suffix = 2
    while candidate in used:
        candidate = f"{stem}-{suffix}"
        suffix += 1
    used.add(candidate)
    return base / candidate


def cmd_report(args: argparse.Namespace) -> int:
    config = build_config(args)
    cache = AnalysisCache(config.cache_dir)
    pool = EnginePool(config)
    move_times = _read_move_times(args.move_times)
    out_base = Path(config.out_dir)
    used: set[str] = set()
    failures = 0
    try:
        for name in args.games:
            path = Path(name)
            out_dir = _game_out_dir(out_base, path.stem, used)
            try:
                record, warnings = load_record(path, config)
                analyses = analyses_for(record, pool, cache, config.network_label, include_final=True)
                report = build_report(
                    record,
                    analyses,
                    config.thresholds,
                    source=str(path),
                    network=config.network_label,
                    visits=config.visits,
                    move_times=move_times,
                )
                report.warnings = warnings + report.warnings
                out_dir.mkdir(parents=True, exist_ok=True)
                (out_dir / "report.json").write_bytes(emit_report(report, "json"))
                (out_dir / "report.txt").write_bytes(emit_report(report, "text"))
                emit_plot_specs(report, out_dir)
                if config.figures:
                    plots.render_report_figures(report, out_dir)
                for color in ("B", "W"):
                    _info(f"{path}: {color} suspicion {report.players[color].level}")
                _info(f"{path}: report written to {out_dir}")
            except MissingAnalysis as err:
                _info(f"{path}: error: {err}")
                return EXIT_FATAL
            except (OSError, ParseError, board.IllegalMoveError, EngineError, metrics.MetricError) as err:
                failures += 1
                _info(f"{path}: error: {err}")
    finally:
        pool.close()
    if failures == len(args.games):
        return EXIT_FATAL
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_strength(args: argparse.Namespace) -> int:
    config = build_config(args)
    cache = AnalysisCache(config.cache_dir)
    pool = EnginePool(config)
    labels = args.network_label or [config.network_label]
    corpus = sorted(Path(args.corpus).glob("*.sgf"))
    if not corpus:
        _info(f"no .sgf files under {args.corpus}")
        return EXIT_FATAL
    failures = 0
    per_network: dict[str, list] = {}
    try:
        records = []
        for path in corpus:
            try:
                record, _warnings = load_record(path, config)
                records.append((path, record))
            except (OSError, ParseError) as err:
                failures += 1
                _info(f"{path}: error: {err}")
        if not records:
            return EXIT_FATAL
        for label in labels:
            games = []
            for path, record in records:
                analyses = analyses_for(record, pool, cache, label, include_final=False)
                games.append((str(path), analyses))
            if args.sample:
                per_network[label] = metrics.sample_positions(games, config.seed)
                _info(f"{label}: sampled one position from each of {len(games)} games (seed {config.seed})")
            else:
                per_network[label] = [a for _name, analyses in games for a in analyses]
    except EngineError as err:
        _info(f"error: {err}")
        return EXIT_FATAL
    finally:
        pool.close()

    bench = metrics.strength_bench(per_network)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with (out_dir / "strength.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["network", "hit_rate", "hits", "positions", "kl_mean", "kl_max"])
        for row in bench:
            writer.writerow(
                [row.network, f"{row.hit_rate:.4f}", row.hits, row.positions, f"{row.kl_mean:.6f}", f"{row.kl_max:.6f}"]
            )
    with (out_dir / "kl_histogram.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["network", "bin_lo", "bin_hi", "count"])
        for row in bench:
            for lo, hi, count in row.histogram:
                writer.writerow([row.network, f"{lo:.6f}", f"{hi:.6f}", count])
    hist_rows = [
        {"network": row.network, "bin_lo": lo, "bin_hi": hi, "count": count}
        for row in bench
        for lo, hi, count in row.histogram
    ]
    spec = {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "description": "search-gap KL distribution per network",
        "width": 480,
        "height": 260,
        "data": {"values": hist_rows},
        "mark": "bar",
        "encoding": {
            "x": {"field": "bin_lo", "type": "quantitative"},
            "x2": {"field": "bin_hi"},
            "y": {"field": "count", "type": "quantitative"},
            "color": {"field": "network", "type": "nominal"},
            "opacity": {"value": 0.6},
        },
    }
    (out_dir / "kl_histogram.vl.json").write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if config.figures:
        plots.render_strength_figure(bench, out_dir / "kl_histogram.png")
    for row in bench:
        _info(f"{row.network}: hit rate {row.hit_rate:.4f} ({row.hits}/{row.positions}), KL mean {row.kl_mean:.4f}")
    _info(f"strength tables written to {out_dir}")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = build_config(args)
    pool = EnginePool(config)
    path = Path(args.game)
    try:
        record, _warnings = load_record(path, config)
        grid = [int(v) for v in args.visit_grid.split(",") if v.strip()]
        if not grid:
            _info("empty visit grid")
            return EXIT_FATAL
        handle = pool.get(config.network_label)
        rows = metrics.calibration_run(
            handle,
            record,
            args.turn,
            grid,
            args.repeats,
            rules=config.rules,
            komi=config.komi_override,
        )
    except (OSError, ParseError, EngineError, ValueError) as err:
        _info(f"{path}: error: {err}")
        return EXIT_FATAL
    finally:
        pool.close()

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "calibration.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["visits", "run", "kl"])
        for row in rows:
            writer.writerow([row.visits, row.run, f"{row.kl:.9f}"])
    spec_rows = [{"visits": r.visits, "run": r.run, "kl": r.kl} for r in rows]
    spec = {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "description": "search-gap KL of one position, repeated runs per visit budget",
        "width": 480,
        "height": 260,
        "data": {"values": spec_rows},
        "mark": "point",
        "encoding": {
            "x": {"field": "visits", "type": "quantitative", "scale": {"type": "log"}},
            "y": {"field": "kl", "type": "quantitative"},
        },
    }
    (out_dir / "calibration.vl.json").write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if config.figures:
        plots.render_calibration_figure(rows, out_dir / "calibration.png")
    _info(f"{len(rows)} calibration rows written to {out_dir}")
    return EXIT_OK


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file; flags override it")
    parser.add_argument("--engine", help="analysis engine command line (shell-quoted)")
    parser.add_argument("--stub", action="store_true", help="use the bundled deterministic stub engine")
    parser.add_argument("--stub-shape", dest="stub_shape", help="stub policy shape: default | one-hot | uniform-k:K")
    parser.add_argument("--stub-jitter", dest="stub_jitter", type=float, help="stub per-query noise (calibration spread)")
    parser.add_argument("--network-label", dest="network_label", action="append", help="network label for caching/reporting")
    parser.add_argument("--visits", type=int, help="search visit budget per position")
    parser.add_argument("--rules", help="rules string passed to the engine")
    parser.add_argument("--komi-override", dest="komi_override", type=float, help="override the record's komi")
    parser.add_argument("--cache-dir", dest="cache_dir", help="analysis cache directory")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="seed fixing stub and sampling behavior")
    parser.add_argument("--jobs", type=int, help="bounded worker pool size for batch analysis")
    parser.add_argument("--thresholds", help="thresholds file for the report indicators")
    parser.add_argument("--leniency", action="store_true", help="skip illegal recorded moves with a warning")
    parser.add_argument("--no-figures", dest="no_figures", action="store_true", help="skip PNG rendering")


def _single_label(args: argparse.Namespace) -> None:
    if args.network_label:
        args.network_label = args.network_label[-1]
    else:
        args.network_label = None


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="goscreen", description="Go game analysis metrics and screening")
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="run engine analysis for games and fill the cache")
    p_analyze.add_argument("games", nargs="+", help="SGF files")
    p_analyze.add_argument("--include-final", dest="include_final", action="store_true", help="also analyze the position after the last move")
    _add_common_flags(p_analyze)

    p_report = sub.add_parser("report", help="build suspicion reports with plot data")
    p_report.add_argument("games", nargs="+", help="SGF files")
    p_report.add_argument("--move-times", dest="move_times", help="CSV (turn,seconds) of move times; reported descriptively")
    _add_common_flags(p_report)

    p_strength = sub.add_parser("strength", help="hit-rate / KL benchmark of networks over a corpus")
    p_strength.add_argument("corpus", help="directory of SGF files")
    p_strength.add_argument("--sample", action="store_true", help="use one random position per game (seeded)")
    _add_common_flags(p_strength)

    p_cal = sub.add_parser("calibrate", help="KL of one position across visit budgets, repeated")
    p_cal.add_argument("game", help="SGF file")
    p_cal.add_argument("--turn", type=int, required=True, help="position index to analyze")
    p_cal.add_argument("--visit-grid", dest="visit_grid", default="10,100,1000", help="comma-separated visit budgets")
    p_cal.add_argument("--repeats", type=int, default=7, help="fresh runs per visit budget")
    _add_common_flags(p_cal)

    args = parser.parse_args(argv)
    if args.command != "strength":
        _single_label(args)

    try:
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "report":
            return cmd_report(args)
        if args.command == "strength":
            return cmd_strength(args)
        if args.command == "calibrate":
            return cmd_calibrate(args)
    except (ValueError, OSError) as err:
        _info(f"error: {err}")
        return EXIT_FATAL
    return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
