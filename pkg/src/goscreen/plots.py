"""Render the report's data series to PNG figures.

The Vega-Lite documents are the canonical plot artifacts; these matplotlib
renderings exist so a report directory is reviewable without any web
tooling. PNG metadata is stripped so reruns stay byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .board import BLACK, WHITE
from .metrics import CalibrationRow, NetworkStrength
from .report import COLOR_NAMES, SuspicionReport

PLAYER_STYLE = {BLACK: "#333333", WHITE: "#1f77b4"}
SERIES_STYLE = {"best": "#2ca02c", "actual": "#d62728", "average": "#7f7f7f", "median": "#9467bd"}
_PNG_KWARGS = {"dpi": 110, "metadata": {"Software": None}}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, **_PNG_KWARGS)
    plt.close(fig)
    return path


def render_report_figures(report: SuspicionReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(8, 3.2))
    for color in (BLACK, WHITE):
        rows = [r for r in report.series["win_rate"] if r["player"] == color]
        ax.plot([r["turn"] for r in rows], [r["winrate"] for r in rows],
                color=PLAYER_STYLE[color], label=COLOR_NAMES[color])
    ax.set_xlabel("turn")
    ax.set_ylabel("win rate")
    ax.set_ylim(0, 1)
    ax.axhline(report.thresholds.win_threshold, color="#bbbbbb", linewidth=0.8, linestyle="--")
    ax.legend(loc="center left", fontsize=8)
    ax.set_title("win rate by turn (each player's perspective)", fontsize=10)
    fig.tight_layout()
    written.append(_save(fig, out / "win_rate.png"))

    for color in (BLACK, WHITE):
        rows = report.series["score_means"][color]
        fig, ax = plt.subplots(figsize=(8, 3.2))
        for name in ("best", "actual", "average", "median"):
            points = [(r["turn"], r[name]) for r in rows if r[name] is not None]
            if not points:
                continue
            ax.plot([p[0] for p in points], [p[1] for p in points],
                    color=SERIES_STYLE[name], label=name, linewidth=1.0)
        ax.set_xlabel("turn")
        ax.set_ylabel("score mean (mover view)")
        ax.legend(loc="best", fontsize=8)
        ax.set_title(f"candidate score means on {COLOR_NAMES[color]}'s turns", fontsize=10)
        fig.tight_layout()
        written.append(_save(fig, out / f"score_means_{COLOR_NAMES[color]}.png"))

    fig, ax = plt.subplots(figsize=(8, 3.2))
    for color in (BLACK, WHITE):
        rows = [r for r in report.series["effect_cma"] if r["player"] == color]
        ax.plot([r["turn"] for r in rows], [r["cma"] for r in rows],
                color=PLAYER_STYLE[color], label=COLOR_NAMES[color])
    ax.set_xlabel("turn")
    ax.set_ylabel("effect CMA (points)")
    ax.axhline(0.0, color="#bbbbbb", linewidth=0.8)
    ax.legend(loc="best", fontsize=8)
    ax.set_title("cumulative moving average of move effects", fontsize=10)
    fig.tight_layout()
    written.append(_save(fig, out / "effect_cma.png"))
    return written


def render_calibration_figure(rows: list[CalibrationRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter([r.visits for r in rows], [r.kl for r in rows], s=18, alpha=0.7, color="#1f77b4")
    ax.set_xscale("log")
    ax.set_xlabel("visits")
    ax.set_ylabel("search-gap KL (nats)")
    ax.set_title("KL-divergence of one position over visit budgets", fontsize=10)
    fig.tight_layout()
    return _save(fig, path)


def render_strength_figure(bench: list[NetworkStrength], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    for strength in bench:
        edges = [lo for lo, _hi, _n in strength.histogram]
        widths = [hi - lo for lo, hi, _n in strength.histogram]
        counts = [n for _lo, _hi, n in strength.histogram]
        ax.bar(edges, counts, width=widths, align="edge", alpha=0.5, label=strength.network)
    ax.set_xlabel("search-gap KL (nats)")
    ax.set_ylabel("positions")
    ax.legend(fontsize=8)
    ax.set_title("KL-divergence distribution per network", fontsize=10)
    fig.tight_layout()
    return _save(fig, path)
