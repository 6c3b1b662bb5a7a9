"""Derived per-move measures over aligned (record, analysis) pairs.

Three families: the effect of a move (score-mean delta, reported from the
mover's perspective so both players' averages compare directly), the search
gap between the raw policy and the searched visit distribution (hit rate and
restricted KL-divergence, in nats), and per-player aggregates built on them.
Everything here is a pure function over immutable inputs.
"""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

from .board import BLACK, to_engine_coord
from .engine import AnalysisQuery, EngineHandle, TurnAnalysis

if TYPE_CHECKING:
    from .sgf import GameRecord

POLICY_FLOOR = 1e-10


class MetricError(Exception):
    pass


class MisalignedTurns(MetricError):
    pass


class MissingPolicy(MetricError):
    pass


class EmptySupport(MetricError):
    pass


class NoMovesForColor(MetricError):
    pass


@dataclass
class VisitDistribution:
    """Searched moves with probabilities proportional to their visit counts."""

    entries: list[tuple[str, float]]
    source_visits: list[tuple[str, int]]


@dataclass
class RestrictedPolicy:
    """Raw-policy probabilities renormalized over the visited support."""

    entries: list[tuple[str, float]]


@dataclass
class TurnMetrics:
    turn_index: int
    mover: str
    effect: float | None  # mover perspective; None when the next position was not analyzed
    hit: bool | None  # None when the position cannot be scored (e.g. pass without a policy slot)
    kl: float | None  # nats; None without a raw policy
    best_score_mean: float  # mover perspective, as are the three below
    actual_score_mean: float | None
    avg_score_mean: float
    median_score_mean: float
    root_winrate: float  # mover perspective
    actual_rank: int | None  # 0-based visit rank of the played move among candidates


@dataclass
class PlayerSummary:
    color: str
    average_effect: float
    effect_stddev: float
    cma_series: list[float]  # running mean, one entry per measured move
    hit_rate: float
    hits: int
    positions: int
    top_k_match_rate: dict[int, float]
    winrate98_turn: int | None
    avg_effect_pre98: float
    avg_effect_post98: float | None
    moves_post98: int
    kl_mean: float
    kl_max: float
    moves_measured: int


def effect(prev: TurnAnalysis, next: TurnAnalysis, mover: str) -> float:
    """Score-mean change caused by the move between two consecutive positions.

    Black-perspective delta for a Black move, negated for White, so a
    negative value always means the mover gave up points.
    """
    if next.turn_index != prev.turn_index + 1:
        raise MisalignedTurns(f"turns {prev.turn_index} -> {next.turn_index} are not consecutive")
    delta = next.root_score_mean - prev.root_score_mean
    return delta if mover == BLACK else -delta


def policy_size(analysis: TurnAnalysis) -> int:
    assert analysis.raw_policy is not None
    return math.isqrt(len(analysis.raw_policy) - 1)


def _policy_index(move: str, size: int) -> int:
    if move == "pass":
        return size * size
    cols = "ABCDEFGHJKLMNOPQRST"
    x = cols.index(move[0].upper())
    y = size - int(move[1:])
    return y * size + x


def top_candidate(analysis: TurnAnalysis):
    """Most-visited candidate; earlier entry wins a visit tie."""
    if not analysis.candidates:
        raise EmptySupport(f"turn {analysis.turn_index}: no searched candidates")
    return max(analysis.candidates, key=lambda c: c.visits)


def restricted_distributions(analysis: TurnAnalysis) -> tuple[VisitDistribution, RestrictedPolicy]:
    """Build the searched-move distribution and the policy restricted to it.

    Visits normalize directly (every searched move has at least one visit);
    policy values on that support are floored at POLICY_FLOOR before their
    own normalization, since the raw network may assign exact zeros.
    """
    if analysis.raw_policy is None:
        raise MissingPolicy(f"turn {analysis.turn_index}: no raw policy in analysis")
    if not analysis.candidates:
        raise EmptySupport(f"turn {analysis.turn_index}: no searched candidates")
    size = policy_size(analysis)
    visits = [(c.move, c.visits) for c in analysis.candidates]
    total_visits = sum(v for _, v in visits)
    pi = [(move, v / total_visits) for move, v in visits]
    raw = []
    for move, _ in visits:
        value = analysis.raw_policy[_policy_index(move, size)]
        raw.append(max(value, 0.0) if value > 0 else 0.0)
    floored = [max(v, POLICY_FLOOR) for v in raw]
    total = sum(floored)
    p = [(move, v / total) for (move, _), v in zip(visits, floored)]
    return VisitDistribution(entries=pi, source_visits=visits), RestrictedPolicy(entries=p)


def kl_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """Sum of p_i * ln(p_i / q_i) in nats; inputs share a support and sum to 1."""
    total = 0.0
    for pi, qi in zip(p, q):
        if pi > 0.0:
            total += pi * math.log(pi / qi)
    return total


def search_gap_kl(analysis: TurnAnalysis) -> float:
    """KL-divergence of the restricted policy from the visit distribution, in nats."""
    pi_dist, p_dist = restricted_distributions(analysis)
    value = kl_divergence([v for _, v in p_dist.entries], [v for _, v in pi_dist.entries])
    return value if value > 0.0 else 0.0


def hit_flag(analysis: TurnAnalysis) -> bool | None:
    """Does the search's top move match the raw policy's argmax?

    Returns None when the position cannot be scored (top candidate is a pass
    but the policy vector has no pass slot).
    """
    if analysis.raw_policy is None:
        raise MissingPolicy(f"turn {analysis.turn_index}: no raw policy in analysis")
    size = policy_size(analysis)
    top = top_candidate(analysis)
    if top.move == "pass" and len(analysis.raw_policy) < size * size + 1:
        return None
    best_index = max(range(len(analysis.raw_policy)), key=lambda i: (analysis.raw_policy[i], -i))
    return _policy_index(top.move, size) == best_index


def hit_rate(turns: Sequence[tuple[TurnAnalysis, str | None]]) -> tuple[float, int, int]:
    """Network self-agreement over positions: (rate, hits, positions).

    The played move does not participate; it is carried alongside for the
    match-rate aggregates computed elsewhere.
    """
    hits = 0
    positions = 0
    for analysis, _actual in turns:
        flag = hit_flag(analysis)
        if flag is None:
            continue
        positions += 1
        hits += 1 if flag else 0
    rate = hits / positions if positions else 0.0
    return rate, hits, positions


def _mover_view(value: float, mover: str) -> float:
    return value if mover == BLACK else -value


def turn_metrics(record: "GameRecord", analyses: Sequence[TurnAnalysis]) -> tuple[list[TurnMetrics], list[str]]:
    """Per-move derived quantities for every analyzed position with a move.

    Effects need the following position's analysis; the final move's effect
    is absent unless the terminal position was analyzed too.
    """
    warnings: list[str] = []
    by_turn = {a.turn_index: a for a in analyses}
    rows: list[TurnMetrics] = []
    for i, move in enumerate(record.moves):
        analysis = by_turn.get(i)
        if analysis is None:
            continue
        if not analysis.candidates:
            raise EmptySupport(f"turn {i}: no searched candidates")
        mover = move.color
        next_analysis = by_turn.get(i + 1)
        move_effect = effect(analysis, next_analysis, mover) if next_analysis is not None else None

        score_means = [_mover_view(c.score_mean, mover) for c in analysis.candidates]
        best = _mover_view(top_candidate(analysis).score_mean, mover)
        played = to_engine_coord(move.point, record.size)
        ranked = sorted(range(len(analysis.candidates)), key=lambda j: -analysis.candidates[j].visits)
        actual = None
        actual_rank = None
        for rank, j in enumerate(ranked):
            if analysis.candidates[j].move == played:
                actual = _mover_view(analysis.candidates[j].score_mean, mover)
                actual_rank = rank
                break
        if actual is None:
            warnings.append(f"turn {i}: played move {played} was not searched")

        kl = None
        hit = None
        if analysis.raw_policy is not None:
            kl = search_gap_kl(analysis)
            hit = hit_flag(analysis)

        winrate = analysis.root_winrate if mover == BLACK else 1.0 - analysis.root_winrate
        rows.append(
            TurnMetrics(
                turn_index=i,
                mover=mover,
                effect=move_effect,
                hit=hit,
                kl=kl,
                best_score_mean=best,
                actual_score_mean=actual,
                avg_score_mean=sum(score_means) / len(score_means),
                median_score_mean=statistics.median(score_means),
                root_winrate=winrate,
                actual_rank=actual_rank,
            )
        )
    return rows, warnings


def player_summary(
    rows: Sequence[TurnMetrics],
    color: str,
    win_threshold: float = 0.98,
    top_k: Sequence[int] = (1, 3, 5),
) -> PlayerSummary:
    """Aggregate one player's rows: effect statistics, match rates, 98% split."""
    own = [r for r in rows if r.mover == color]
    if not own:
        raise NoMovesForColor(f"no analyzed moves for {color}")
    measured = [r for r in own if r.effect is not None]
    if not measured:
        raise NoMovesForColor(f"no measurable effects for {color}")

    effects = [r.effect for r in measured]
    cma = []
    running = 0.0
    for i, e in enumerate(effects, start=1):
        running += e
        cma.append(running / i)

    scored = [r for r in own if r.hit is not None]
    hits = sum(1 for r in scored if r.hit)

    match = {}
    for k in top_k:
        match[k] = sum(1 for r in own if r.actual_rank is not None and r.actual_rank < k) / len(own)

    winrate98_turn = None
    for r in own:
        if r.root_winrate >= win_threshold:
            winrate98_turn = r.turn_index
            break

    if winrate98_turn is None:
        pre = effects
        post = None
        post_count = 0
    else:
        pre = [r.effect for r in measured if r.turn_index < winrate98_turn]
        post_rows = [r.effect for r in measured if r.turn_index >= winrate98_turn]
        post = sum(post_rows) / len(post_rows) if post_rows else None
        post_count = len(post_rows)

    kls = [r.kl for r in own if r.kl is not None]
    return PlayerSummary(
        color=color,
        average_effect=sum(effects) / len(effects),
        effect_stddev=statistics.pstdev(effects) if len(effects) > 1 else 0.0,
        cma_series=cma,
        hit_rate=hits / len(scored) if scored else 0.0,
        hits=hits,
        positions=len(scored),
        top_k_match_rate=match,
        winrate98_turn=winrate98_turn,
        avg_effect_pre98=sum(pre) / len(pre) if pre else 0.0,
        avg_effect_post98=post,
        moves_post98=post_count,
        kl_mean=sum(kls) / len(kls) if kls else 0.0,
        kl_max=max(kls) if kls else 0.0,
        moves_measured=len(measured),
    )


@dataclass
class CalibrationRow:
    visits: int
    run: int
    kl: float


def calibration_run(
    handle: EngineHandle,
    record: "GameRecord",
    turn_index: int,
    visit_grid: Sequence[int],
    repeats: int,
    *,
    rules: str = "tromp-taylor",
    komi: float | None = None,
    timeout: float | None = 600.0,
) -> list[CalibrationRow]:
    """Re-analyze one position at each visit budget, repeats times, fresh every run.

    The cache is never consulted: the point is the run-to-run spread of the
    search, so every (visits, run) cell is a new engine query.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if not 0 <= turn_index <= len(record.moves):
        raise ValueError(f"turn {turn_index} outside 0..{len(record.moves)}")
    moves = [(m.color, to_engine_coord(m.point, record.size)) for m in record.moves]
    stones = [(c, to_engine_coord(p, record.size)) for c, p in record.setup_stones]
    futures = []
    for visits in visit_grid:
        for run in range(repeats):
            query = AnalysisQuery(
                id=f"cal-v{visits}-r{run}",
                moves=moves,
                initial_stones=stones,
                rules=rules,
                komi=record.komi if komi is None else komi,
                board_size=record.size,
                analyze_turns=[turn_index],
                max_visits=visits,
                include_policy=True,
            )
            futures.append((visits, run, handle.submit(query)))
    rows = []
    for visits, run, future in futures:
        (analysis,) = future.result(timeout)
        rows.append(CalibrationRow(visits=visits, run=run, kl=search_gap_kl(analysis)))
    return rows


@dataclass
class NetworkStrength:
    network: str
    hit_rate: float
    hits: int
    positions: int
    kl_mean: float
    kl_max: float
    kls: list[float] = field(default_factory=list)
    histogram: list[tuple[float, float, int]] = field(default_factory=list)


def strength_bench(per_network: dict[str, Sequence[TurnAnalysis]], bins: int = 12) -> list[NetworkStrength]:
    """Per-network hit rate and KL aggregates over a shared position set.

    Histogram bins are shared across networks so their shapes compare
    directly.
    """
    if not per_network:
        raise ValueError("no networks given")
    for network, analyses in per_network.items():
        if not analyses:
            raise ValueError(f"network {network!r} has an empty position set")

    kls_by_network = {}
    for network, analyses in per_network.items():
        kls_by_network[network] = [search_gap_kl(a) for a in analyses]
    kl_ceiling = max(max(kls) for kls in kls_by_network.values())
    if kl_ceiling <= 0.0:
        kl_ceiling = 1.0
    edges = [kl_ceiling * i / bins for i in range(bins + 1)]

    out = []
    for network in per_network:
        analyses = per_network[network]
        rate, hits, positions = hit_rate([(a, None) for a in analyses])
        kls = kls_by_network[network]
        counts = [0] * bins
        for value in kls:
            slot = min(int(value / kl_ceiling * bins), bins - 1)
            counts[slot] += 1
        out.append(
            NetworkStrength(
                network=network,
                hit_rate=rate,
                hits=hits,
                positions=positions,
                kl_mean=sum(kls) / len(kls),
                kl_max=max(kls),
                kls=kls,
                histogram=[(edges[i], edges[i + 1], counts[i]) for i in range(bins)],
            )
        )
    return out


def sample_positions(games: Sequence[tuple[str, Sequence[TurnAnalysis]]], seed: int) -> list[TurnAnalysis]:
    """One random analyzed position per game, reproducible from the seed."""
    rng = random.Random(seed)
    picks = []
    for _name, analyses in games:
        if not analyses:
            continue
        picks.append(analyses[rng.randrange(len(analyses))])
    return picks
