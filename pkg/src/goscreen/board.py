"""Just enough Go rules to replay recorded games and validate move legality.

Board states are immutable values: applying a move returns a new state and
never touches the input, so replays can be shared freely across workers.
Simple ko only; superko violations in real records are rare enough to be
handled by the replay leniency flag.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable

if TYPE_CHECKING:
    from .sgf import GameRecord

EMPTY = "."
BLACK = "B"
WHITE = "W"

# Engine protocol columns skip the letter I; SGF columns do not.
ENGINE_COLS = "ABCDEFGHJKLMNOPQRST"
SGF_COLS = "abcdefghijklmnopqrs"

MIN_SIZE = 9
MAX_SIZE = 19

# (col, row) with row 0 at the top, matching SGF reading order.
Point = tuple[int, int]


def opposite(color: str) -> str:
    return WHITE if color == BLACK else BLACK


class IllegalMoveError(Exception):
    """A move violates the rules; `reason` names which one."""

    OCCUPIED = "occupied"
    SUICIDE = "suicide"
    KO = "ko"
    OFF_BOARD = "off-board"

    def __init__(self, reason: str, move: "Move", turn_index: int | None = None):
        self.reason = reason
        self.move = move
        self.turn_index = turn_index
        where = f" at turn {turn_index}" if turn_index is not None else ""
        super().__init__(f"illegal move ({reason}): {move}{where}")


class MalformedCoordinate(Exception):
    pass


@dataclass(frozen=True)
class Move:
    color: str
    point: Point | None  # None is a pass

    @property
    def is_pass(self) -> bool:
        return self.point is None

    def __str__(self) -> str:
        if self.point is None:
            return f"{self.color} pass"
        return f"{self.color} {to_engine_coord(self.point, MAX_SIZE)}"


@dataclass(frozen=True)
class BoardState:
    size: int
    grid: tuple[str, ...]  # size*size cells, row-major from the top
    to_move: str
    ko_point: Point | None
    captures_black: int  # stones captured BY Black
    captures_white: int
    turn_index: int

    def stone_at(self, point: Point) -> str:
        x, y = point
        return self.grid[y * self.size + x]

    @property
    def captures(self) -> dict[str, int]:
        return {BLACK: self.captures_black, WHITE: self.captures_white}

    def counts(self) -> dict[str, int]:
        out = {EMPTY: 0, BLACK: 0, WHITE: 0}
        for cell in self.grid:
            out[cell] += 1
        return out


def empty_board(size: int, to_move: str = BLACK) -> BoardState:
    if not MIN_SIZE <= size <= MAX_SIZE:
        raise ValueError(f"board size {size} outside supported range {MIN_SIZE}..{MAX_SIZE}")
    return BoardState(
        size=size,
        grid=(EMPTY,) * (size * size),
        to_move=to_move,
        ko_point=None,
        captures_black=0,
        captures_white=0,
        turn_index=0,
    )


def on_board(point: Point, size: int) -> bool:
    x, y = point
    return 0 <= x < size and 0 <= y < size


def neighbors(point: Point, size: int) -> list[Point]:
    x, y = point
    out = []
    if x > 0:
        out.append((x - 1, y))
    if x < size - 1:
        out.append((x + 1, y))
    if y > 0:
        out.append((x, y - 1))
    if y < size - 1:
        out.append((x, y + 1))
    return out


def group_and_liberties(grid: list[str] | tuple[str, ...], size: int, start: Point) -> tuple[set[Point], set[Point]]:
    """Flood-fill the group containing `start`; returns (stones, liberties)."""
    color = grid[start[1] * size + start[0]]
    if color == EMPTY:
        return set(), set()
    stones = {start}
    libs: set[Point] = set()
    frontier = [start]
    while frontier:
        p = frontier.pop()
        for n in neighbors(p, size):
            cell = grid[n[1] * size + n[0]]
            if cell == EMPTY:
                libs.add(n)
            elif cell == color and n not in stones:
                stones.add(n)
                frontier.append(n)
    return stones, libs


def apply_move(state: BoardState, move: Move) -> BoardState:
    """Apply one move, returning the successor state.

    Raises IllegalMoveError for occupied/suicide/ko/off-board violations.
    The mover must match state.to_move; replay() handles records that break
    alternation.
    """
    if move.color != state.to_move:
        raise ValueError(f"{move.color} played but {state.to_move} is to move")

    if move.is_pass:
        return replace(
            state,
            to_move=opposite(move.color),
            ko_point=None,
            turn_index=state.turn_index + 1,
        )

    point = move.point
    assert point is not None
    if not on_board(point, state.size):
        raise IllegalMoveError(IllegalMoveError.OFF_BOARD, move)
    if state.stone_at(point) != EMPTY:
        raise IllegalMoveError(IllegalMoveError.OCCUPIED, move)
    if state.ko_point == point:
        raise IllegalMoveError(IllegalMoveError.KO, move)

    size = state.size
    grid = list(state.grid)
    grid[point[1] * size + point[0]] = move.color

    enemy = opposite(move.color)
    captured: set[Point] = set()
    for n in neighbors(point, size):
        if grid[n[1] * size + n[0]] == enemy and n not in captured:
            stones, libs = group_and_liberties(grid, size, n)
            if not libs:
                captured |= stones
    for p in captured:
        grid[p[1] * size + p[0]] = EMPTY

    own_stones, own_libs = group_and_liberties(grid, size, point)
    if not own_libs:
        raise IllegalMoveError(IllegalMoveError.SUICIDE, move)

    ko_point = None
    if len(captured) == 1 and len(own_stones) == 1:
        (ko_candidate,) = captured
        if own_libs == {ko_candidate}:
            ko_point = ko_candidate

    return BoardState(
        size=size,
        grid=tuple(grid),
        to_move=enemy,
        ko_point=ko_point,
        captures_black=state.captures_black + (len(captured) if move.color == BLACK else 0),
        captures_white=state.captures_white + (len(captured) if move.color == WHITE else 0),
        turn_index=state.turn_index + 1,
    )


@dataclass
class ReplayResult:
    states: list[BoardState]  # s0..sn; s0 already contains setup stones
    moves: list[Move]  # the moves actually applied (== record moves unless lenient skips)
    warnings: list[str]


def initial_state(size: int, setup_stones: Iterable[tuple[str, Point]], to_move: str) -> BoardState:
    state = empty_board(size, to_move)
    grid = list(state.grid)
    for color, point in setup_stones:
        if not on_board(point, size):
            raise IllegalMoveError(IllegalMoveError.OFF_BOARD, Move(color, point))
        grid[point[1] * size + point[0]] = color
    return replace(state, grid=tuple(grid))


def replay(record: "GameRecord", lenient: bool = False) -> ReplayResult:
    """Replay a parsed record into the full state sequence s0..sn.

    With lenient=True, illegal moves are skipped with a warning and the
    remaining states keep consecutive turn indices; otherwise the error is
    re-raised with the offending turn index attached.
    """
    warnings: list[str] = []
    if record.moves:
        first_to_move = record.moves[0].color
    elif any(color == BLACK for color, _ in record.setup_stones):
        first_to_move = WHITE
    else:
        first_to_move = BLACK

    state = initial_state(record.size, record.setup_stones, first_to_move)
    states = [state]
    applied: list[Move] = []
    for i, move in enumerate(record.moves):
        if move.color != state.to_move:
            warnings.append(f"turn {i}: {move.color} played out of turn")
            state = replace(state, to_move=move.color)
        try:
            state = apply_move(state, move)
        except IllegalMoveError as err:
            if lenient:
                warnings.append(f"turn {i}: skipped illegal move ({err.reason})")
                continue
            raise IllegalMoveError(err.reason, err.move, turn_index=i) from None
        states.append(state)
        applied.append(move)
    return ReplayResult(states=states, moves=applied, warnings=warnings)


def to_engine_coord(point: Point | None, size: int) -> str:
    """(col,row) -> letter+number, e.g. (15,3) on 19x19 -> "Q16"; None -> "pass"."""
    if point is None:
        return "pass"
    x, y = point
    if not on_board(point, size):
        raise MalformedCoordinate(f"point {point} outside {size}x{size} board")
    return f"{ENGINE_COLS[x]}{size - y}"


def from_engine_coord(text: str, size: int) -> Point | None:
    if text.lower() == "pass":
        return None
    if len(text) < 2:
        raise MalformedCoordinate(f"coordinate too short: {text!r}")
    col_letter = text[0].upper()
    if col_letter not in ENGINE_COLS:
        raise MalformedCoordinate(f"bad column letter in {text!r}")
    x = ENGINE_COLS.index(col_letter)
    try:
        row_number = int(text[1:])
    except ValueError:
        raise MalformedCoordinate(f"bad row number in {text!r}") from None
    y = size - row_number
    point = (x, y)
    if not on_board(point, size):
        raise MalformedCoordinate(f"{text!r} outside {size}x{size} board")
    return point


def sgf_to_point(text: str, size: int) -> Point | None:
    """SGF letter pair -> point; "" (and "tt" on boards up to 19) is a pass."""
    if text == "" or (text == "tt" and size <= 19):
        return None
    if len(text) != 2:
        raise MalformedCoordinate(f"bad SGF coordinate: {text!r}")
    x = ord(text[0]) - ord("a")
    y = ord(text[1]) - ord("a")
    point = (x, y)
    if not on_board(point, size):
        raise MalformedCoordinate(f"SGF coordinate {text!r} outside {size}x{size} board")
    return point


def point_to_sgf(point: Point | None, size: int) -> str:
    if point is None:
        return ""
    if not on_board(point, size):
        raise MalformedCoordinate(f"point {point} outside {size}x{size} board")
    return f"{SGF_COLS[point[0]]}{SGF_COLS[point[1]]}"
