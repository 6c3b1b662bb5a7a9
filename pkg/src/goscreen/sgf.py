"""SGF FF[4] reading and writing.

The parser keeps the raw game tree (property values as the exact bytes
between brackets, escapes intact) so records round-trip losslessly, and
flattens the main line into a GameRecord for analysis. It never raises
anything but ParseError on bad input, whatever the bytes.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .board import BLACK, WHITE, MIN_SIZE, MAX_SIZE, MalformedCoordinate, Move, Point, sgf_to_point, point_to_sgf


class ParseError(Exception):
    def __init__(self, offset: int, expected: str):
        self.offset = offset
        self.expected = expected
        super().__init__(f"SGF parse error at byte {offset}: expected {expected}")


@dataclass
class SgfNode:
    """One node of the raw tree; values are undecoded bytes with escapes kept."""

    props: dict[str, list[bytes]] = field(default_factory=dict)
    children: list["SgfNode"] = field(default_factory=list)

    def get(self, ident: str) -> bytes | None:
        values = self.props.get(ident)
        return values[0] if values else None


@dataclass
class GameRecord:
    size: int
    komi: float
    handicap: int
    setup_stones: list[tuple[str, Point]]
    moves: list[Move]
    player_names: dict[str, str]
    result: str | None
    root: SgfNode


def unescape_text(raw: bytes) -> str:
    """Decode a raw property value: drop escape backslashes, UTF-8 with fallback."""
    out = bytearray()
    i = 0
    while i < len(raw):
        b = raw[i]
        if b == 0x5C and i + 1 < len(raw):  # backslash
            out.append(raw[i + 1])
            i += 2
        else:
            out.append(b)
            i += 1
    return out.decode("utf-8", errors="replace")


def escape_text(text: str) -> bytes:
    return text.replace("\\", "\\\\").replace("]", "\\]").encode("utf-8")


def _parse_tree(data: bytes, i: int) -> tuple[SgfNode, int]:
    """Parse one GameTree starting at the '(' at index i; returns (first node, next index)."""
    i += 1  # past "("
    i = _skip_ws(data, i)
    if i >= len(data) or data[i] != 0x3B:
        raise ParseError(i, "';' starting a node")
    first: SgfNode | None = None
    last: SgfNode | None = None
    while i < len(data) and data[i] == 0x3B:
        node, i = _parse_node(data, i)
        if last is not None:
            last.children.append(node)
        else:
            first = node
        last = node
        i = _skip_ws(data, i)
    while i < len(data) and data[i] == 0x28:  # "(" subtree
        subtree, i = _parse_tree(data, i)
        assert last is not None
        last.children.append(subtree)
        i = _skip_ws(data, i)
    if i >= len(data) or data[i] != 0x29:
        raise ParseError(i, "')'")
    assert first is not None
    return first, i + 1


def _parse_node(data: bytes, i: int) -> tuple[SgfNode, int]:
    i += 1  # past ";"
    node = SgfNode()
    i = _skip_ws(data, i)
    while i < len(data):
        start = i
        while i < len(data) and (0x41 <= data[i] <= 0x5A or 0x61 <= data[i] <= 0x7A):
            i += 1
        if i == start:
            break
        ident = data[start:i].decode("ascii")
        i = _skip_ws(data, i)
        if i >= len(data) or data[i] != 0x5B:
            raise ParseError(i, f"'[' after property {ident}")
        values = node.props.setdefault(ident, [])
        while i < len(data) and data[i] == 0x5B:
            value, i = _parse_value(data, i)
            values.append(value)
            i = _skip_ws(data, i)
        i = _skip_ws(data, i)
    return node, i


def _parse_value(data: bytes, i: int) -> tuple[bytes, int]:
    i += 1  # past "["
    start = i
    while i < len(data):
        b = data[i]
        if b == 0x5C:  # backslash escapes the next byte
            i += 2
            continue
        if b == 0x5D:
            return data[start:i], i + 1
        i += 1
    raise ParseError(len(data), "']' closing a property value")


def _skip_ws(data: bytes, i: int) -> int:
    while i < len(data) and data[i] in b" \t\r\n\f\v":
        i += 1
    return i


def parse_collection(data: bytes) -> list[SgfNode]:
    """Parse a full SGF collection into raw tree roots."""
    roots = []
    i = _skip_ws(data, 0)
    while i < len(data) and data[i] == 0x28:
        root, i = _parse_tree(data, i)
        roots.append(root)
        i = _skip_ws(data, i)
    if not roots:
        raise ParseError(i, "'(' opening a game tree")
    if i < len(data):
        raise ParseError(i, "end of input or '(' opening a game tree")
    return roots


def main_line(root: SgfNode) -> list[SgfNode]:
    """Nodes along the first-child chain, root included."""
    nodes = [root]
    node = root
    while node.children:
        node = node.children[0]
        nodes.append(node)
    return nodes


def parse_sgf(data: bytes | str) -> tuple[GameRecord, list[str]]:
    """Parse SGF bytes into a GameRecord plus warnings for tolerated oddities."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    roots = parse_collection(data)
    warnings: list[str] = []
    if len(roots) > 1:
        warnings.append(f"collection holds {len(roots)} games; using the first")
    root = roots[0]
    nodes = main_line(root)

    size = 19
    raw_size = root.get("SZ")
    if raw_size is None:
        warnings.append("missing SZ; assuming 19")
    else:
        try:
            size = int(unescape_text(raw_size).strip())
        except ValueError:
            raise ParseError(0, f"numeric SZ value (got {unescape_text(raw_size)!r})") from None
        if not MIN_SIZE <= size <= MAX_SIZE:
            raise ParseError(0, f"board size in {MIN_SIZE}..{MAX_SIZE} (got {size})")

    komi = 0.0
    raw_komi = root.get("KM")
    if raw_komi is None:
        warnings.append("missing KM; assuming 0")
    else:
        text = unescape_text(raw_komi).strip().replace(",", ".")
        try:
            komi = float(text)
        except ValueError:
            warnings.append(f"unreadable KM {text!r}; assuming 0")
            komi = 0.0
        if komi != komi or komi in (float("inf"), float("-inf")):
            warnings.append(f"non-finite KM {text!r}; assuming 0")
            komi = 0.0

    handicap = 0
    raw_ha = root.get("HA")
    if raw_ha is not None:
        try:
            handicap = int(unescape_text(raw_ha).strip())
        except ValueError:
            warnings.append("unreadable HA; assuming 0")
    if handicap < 0:
        warnings.append(f"negative HA {handicap}; assuming 0")
        handicap = 0

    if root.get("CA") is not None:
        charset = unescape_text(root.props["CA"][0])
        if charset.strip().lower() not in ("utf-8", "utf8"):
            warnings.append(f"CA[{charset}] ignored; values decoded as UTF-8")

    player_names = {}
    for ident, color in (("PB", BLACK), ("PW", WHITE)):
        raw = root.get(ident)
        if raw is not None:
            player_names[color] = unescape_text(raw)
    raw_result = root.get("RE")
    result = unescape_text(raw_result) if raw_result is not None else None

    setup_stones: list[tuple[str, Point]] = []
    moves: list[Move] = []
    seen_move = False
    for index, node in enumerate(nodes):
        for ident, color in (("AB", BLACK), ("AW", WHITE)):
            for raw in node.props.get(ident, []):
                text = unescape_text(raw).strip()
                try:
                    point = sgf_to_point(text, size)
                except MalformedCoordinate:
                    warnings.append(f"node {index}: bad {ident} point {text!r} ignored")
                    continue
                if point is None:
                    warnings.append(f"node {index}: empty {ident} value ignored")
                    continue
                if seen_move:
                    warnings.append(f"node {index}: {ident} after moves treated as setup")
                setup_stones.append((color, point))
        move_props = [(ident, color) for ident, color in (("B", BLACK), ("W", WHITE)) if ident in node.props]
        if len(move_props) > 1:
            warnings.append(f"node {index}: both B and W present; keeping B")
            move_props = move_props[:1]
        for ident, color in move_props:
            text = unescape_text(node.props[ident][0]).strip()
            try:
                point = sgf_to_point(text, size)
            except MalformedCoordinate:
                warnings.append(f"node {index}: unreadable move {ident}[{text}] skipped")
                continue
            if moves and moves[-1].color == color:
                warnings.append(f"node {index}: {color} moved twice in a row")
            moves.append(Move(color, point))
            seen_move = True

    record = GameRecord(
        size=size,
        komi=komi,
        handicap=handicap,
        setup_stones=setup_stones,
        moves=moves,
        player_names=player_names,
        result=result,
        root=root,
    )
    return record, warnings


def _write_node_chain(node: SgfNode, out: bytearray) -> None:
    while True:
        out += b";"
        for ident, values in node.props.items():
            out += ident.encode("ascii")
            for value in values:
                out += b"["
                out += value
                out += b"]"
        if len(node.children) == 1:
            node = node.children[0]
            continue
        for child in node.children:
            out += b"("
            _write_node_chain(child, out)
            out += b")"
        return


def write_tree(root: SgfNode) -> bytes:
    out = bytearray(b"(")
    _write_node_chain(root, out)
    out += b")"
    return bytes(out)


def write_sgf(record: GameRecord) -> bytes:
    """Serialize a record; raw-tree contents (values, unknown props) are kept verbatim."""
    if record.root.props or record.root.children:
        return write_tree(record.root)
    return write_tree(build_tree(record))


def build_tree(record: GameRecord) -> SgfNode:
    """Build a fresh raw tree from record fields (used for programmatic records)."""
    root = SgfNode()
    root.props["GM"] = [b"1"]
    root.props["FF"] = [b"4"]
    root.props["SZ"] = [str(record.size).encode()]
    root.props["KM"] = [format(record.komi, "g").encode()]
    if record.handicap:
        root.props["HA"] = [str(record.handicap).encode()]
    for color, ident in ((BLACK, "AB"), (WHITE, "AW")):
        points = [p for c, p in record.setup_stones if c == color]
        if points:
            root.props[ident] = [point_to_sgf(p, record.size).encode() for p in points]
    for color, ident in ((BLACK, "PB"), (WHITE, "PW")):
        if record.player_names.get(color):
            root.props[ident] = [escape_text(record.player_names[color])]
    if record.result:
        root.props["RE"] = [escape_text(record.result)]
    node = root
    for move in record.moves:
        child = SgfNode()
        ident = "B" if move.color == BLACK else "W"
        child.props[ident] = [point_to_sgf(move.point, record.size).encode()]
        node.children.append(child)
        node = child
    return root


def with_move_comments(record: GameRecord, comments: dict[int, str]) -> GameRecord:
    """Copy the record with C[] annotations attached to main-line move nodes.

    Keys are move indices (0-based along the main line); existing comments on
    those nodes are replaced.
    """
    root = copy.deepcopy(record.root) if (record.root.props or record.root.children) else build_tree(record)
    move_index = 0
    for node in main_line(root):
        if "B" in node.props or "W" in node.props:
            if move_index in comments:
                node.props["C"] = [escape_text(comments[move_index])]
            move_index += 1
    updated = copy.copy(record)
    updated.root = root
    return updated


def move_comments(record: GameRecord) -> dict[int, str]:
    """Read back C[] annotations from main-line move nodes."""
    out: dict[int, str] = {}
    move_index = 0
    for node in main_line(record.root):
        if "B" in node.props or "W" in node.props:
            raw = node.get("C")
            if raw is not None:
                out[move_index] = unescape_text(raw)
            move_index += 1
    return out
