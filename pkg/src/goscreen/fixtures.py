"""Synthetic games scripted against the stub engine's deterministic replies.

Because the stub reports a candidate's score mean as exactly the root score
of the position after that move, a builder that picks candidates by their
score drift controls a game's whole effect profile. That gives desk-scale
games with known shapes: an engine-assisted player whose moves track the top
recommendation, or an ordinary strong human whose lead changes hands.
"""

from __future__ import annotations

from typing import Callable

from . import board
from .board import BLACK, WHITE, Move
from .sgf import GameRecord, SgfNode, build_tree
from .stub import StubModel, derive_model_seed, winrate_from_score

# choice(turn, mover_winrate, candidates) -> preference-ordered candidate indices
ChoiceFn = Callable[[int, float, list[tuple[str, float]]], list[int]]


def _closest_to(target: float, candidates: list[tuple[str, float]], skip_top: bool = True) -> list[int]:
    indices = range(1, len(candidates)) if skip_top and len(candidates) > 1 else range(len(candidates))
    return sorted(indices, key=lambda i: abs(candidates[i][1] - target))


def scripted_game(
    seed: int,
    black_choice: ChoiceFn,
    white_choice: ChoiceFn,
    *,
    n_moves: int = 110,
    size: int = 19,
    komi: float = 7.5,
    players: dict[str, str] | None = None,
    network_label: str = "net",
) -> GameRecord:
    """Play out a game where each side picks among the stub's candidates.

    `seed` and `network_label` mean the same as the CLI's --seed and
    --network-label, so analyzing the finished game with `--stub` and the
    same pair reproduces exactly the numbers the builder saw.
    """
    model = StubModel(derive_model_seed(seed, network_label))
    state = board.empty_board(size)
    prefix: tuple = ()
    moves: list[Move] = []
    for turn in range(n_moves):
        to_move = BLACK if turn % 2 == 0 else WHITE
        candidates = model.candidates((), prefix, size)
        score_black = model.score((), prefix, size, komi)
        win_black = winrate_from_score(score_black, turn)
        win_mover = win_black if to_move == BLACK else 1.0 - win_black
        choose = black_choice if to_move == BLACK else white_choice
        placed = False
        for index in choose(turn, win_mover, candidates):
            coord = candidates[index][0]
            move = Move(to_move, board.from_engine_coord(coord, size))
            try:
                state = board.apply_move(state, move)
            except board.IllegalMoveError:
                continue
            prefix = prefix + ((to_move, coord),)
            moves.append(move)
            placed = True
            break
        if not placed:  # no legal candidate; end the game early with a pass pair
            break
    record = GameRecord(
        size=size,
        komi=komi,
        handicap=0,
        setup_stones=[],
        moves=moves,
        player_names=players or {},
        result=None,
        root=SgfNode(),
    )
    record.root = build_tree(record)
    return record


def perfect_player_game(seed: int, *, n_moves: int = 110, win_threshold: float = 0.98, network_label: str = "net") -> GameRecord:
    """White shadows the engine: top recommendation until the win rate pins
    at the threshold, then deliberately score-sloppy picks that keep the win.
    Black plays like a strong human, steadily giving up fractions of a point.
    """

    def white(turn: int, winrate: float, candidates: list[tuple[str, float]]) -> list[int]:
        if winrate >= win_threshold:
            return _closest_to(-0.45, candidates)
        return list(range(len(candidates)))

    def black(turn: int, winrate: float, candidates: list[tuple[str, float]]) -> list[int]:
        return _closest_to(-0.65, candidates)

    return scripted_game(
        seed,
        black,
        white,
        n_moves=n_moves,
        players={BLACK: "synthetic human", WHITE: "synthetic engine-assisted"},
        network_label=network_label,
    )


def noisy_human_game(seed: int, *, n_moves: int = 110, network_label: str = "net") -> GameRecord:
    """Two fallible humans; the lead changes hands across four phases and both
    average roughly -0.9 points per move.
    """
    quarter = max(1, n_moves // 4)

    def phase(turn: int) -> int:
        return min(turn // quarter, 3)

    def black(turn: int, winrate: float, candidates: list[tuple[str, float]]) -> list[int]:
        target = -0.5 if phase(turn) in (0, 2) else -1.3
        return _closest_to(target, candidates)

    def white(turn: int, winrate: float, candidates: list[tuple[str, float]]) -> list[int]:
        target = -1.3 if phase(turn) in (0, 2) else -0.5
        return _closest_to(target, candidates)

    return scripted_game(
        seed,
        black,
        white,
        n_moves=n_moves,
        players={BLACK: "synthetic human A", WHITE: "synthetic human B"},
        network_label=network_label,
    )
