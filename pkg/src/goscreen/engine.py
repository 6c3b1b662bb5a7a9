"""Client for analysis engines speaking line-delimited JSON over stdin/stdout.

One query may analyze many turns; the engine answers with one JSON line per
turn, in whatever order the search finishes, so responses are matched purely
by (id, turnNumber). A single writer thread owns the child's stdin, a single
reader thread owns stdout, and callers block on per-query futures. Results
are normalized to Black's perspective on ingestion and written through to an
on-disk cache keyed by (game content hash, network label, visit budget).
"""

from __future__ import annotations

import hashlib
import json
import os
import queue
import subprocess
import sys
import threading
from concurrent.futures import Future
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass
from pathlib import Path

from . import board
from .board import BLACK, WHITE, opposite, to_engine_coord
from .sgf import GameRecord

DEFAULT_RULES = "tromp-taylor"
CACHE_SCHEMA = 1


class EngineError(Exception):
    pass


class SpawnFailure(EngineError):
    pass


class HandshakeTimeout(EngineError):
    pass


class ProtocolError(EngineError):
    """The engine broke the wire contract; carries the offending line."""

    def __init__(self, message: str, raw_line: str = "", partial: list["TurnAnalysis"] | None = None):
        self.raw_line = raw_line
        self.partial = partial or []
        super().__init__(message)


class EngineCrashed(EngineError):
    def __init__(self, message: str, partial: list["TurnAnalysis"] | None = None):
        self.partial = partial or []
        super().__init__(message)


class MissingAnalysis(EngineError):
    pass


@dataclass
class AnalysisQuery:
    id: str
    moves: list[tuple[str, str]]  # (color, engine coordinate)
    initial_stones: list[tuple[str, str]]
    rules: str
    komi: float
    board_size: int
    analyze_turns: list[int]
    max_visits: int
    include_policy: bool = True

    def __post_init__(self):
        if self.max_visits < 1:
            raise ValueError(f"maxVisits must be >= 1, got {self.max_visits}")
        if any(t < 0 or t > len(self.moves) for t in self.analyze_turns):
            raise ValueError(f"analyzeTurns outside 0..{len(self.moves)}: {self.analyze_turns}")

    def to_wire(self) -> dict:
        return {
            "id": self.id,
            "moves": [[c, m] for c, m in self.moves],
            "initialStones": [[c, m] for c, m in self.initial_stones],
            "rules": self.rules,
            "komi": self.komi,
            "boardXSize": self.board_size,
            "boardYSize": self.board_size,
            "analyzeTurns": list(self.analyze_turns),
            "maxVisits": self.max_visits,
            "includePolicy": self.include_policy,
        }

    def to_move_at(self, turn: int) -> str:
        if turn < len(self.moves):
            return self.moves[turn][0]
        if self.moves:
            return opposite(self.moves[-1][0])
        if any(c == BLACK for c, _ in self.initial_stones):
            return WHITE
        return BLACK


@dataclass
class CandidateMove:
    move: str  # engine coordinate or "pass"
    visits: int
    winrate: float  # Black perspective
    score_mean: float  # Black perspective, points
    prior: float
    pv: list[str] | None = None

    def to_json(self) -> dict:
        out = {
            "move": self.move,
            "visits": self.visits,
            "winrate": self.winrate,
            "scoreMean": self.score_mean,
            "prior": self.prior,
        }
        if self.pv is not None:
            out["pv"] = self.pv
        return out

    @classmethod
    def from_json(cls, data: dict) -> "CandidateMove":
        return cls(
            move=data["move"],
            visits=data["visits"],
            winrate=data["winrate"],
            score_mean=data["scoreMean"],
            prior=data["prior"],
            pv=data.get("pv"),
        )


@dataclass
class TurnAnalysis:
    turn_index: int
    to_move: str
    root_winrate: float  # Black perspective
    root_score_mean: float  # Black perspective, points
    total_visits: int
    candidates: list[CandidateMove]
    raw_policy: list[float] | None = None  # size*size+1 entries, -1 marks illegal

    def to_json(self) -> dict:
        out = {
            "turnIndex": self.turn_index,
            "toMove": self.to_move,
            "rootWinrate": self.root_winrate,
            "rootScoreMean": self.root_score_mean,
            "totalVisits": self.total_visits,
            "candidates": [c.to_json() for c in self.candidates],
        }
        if self.raw_policy is not None:
            out["rawPolicy"] = self.raw_policy
        return out

    @classmethod
    def from_json(cls, data: dict) -> "TurnAnalysis":
        return cls(
            turn_index=data["turnIndex"],
            to_move=data["toMove"],
            root_winrate=data["rootWinrate"],
            root_score_mean=data["rootScoreMean"],
            total_visits=data["totalVisits"],
            candidates=[CandidateMove.from_json(c) for c in data["candidates"]],
            raw_policy=data.get("rawPolicy"),
        )


def ingest_response(response: dict, query: AnalysisQuery, score_field: str = "scoreLead") -> TurnAnalysis:
    """Turn one wire response into a Black-perspective TurnAnalysis.

    Engines report winrate/score from the side to move; flip when White moves
    next so every stored number reads Black-positive.
    """
    turn = int(response["turnNumber"])
    to_move = query.to_move_at(turn)
    flip = to_move == WHITE

    def norm_winrate(value: float) -> float:
        return 1.0 - value if flip else value

    def norm_score(value: float) -> float:
        return -value if flip else value

    root = response["rootInfo"]
    candidates = []
    for info in response.get("moveInfos", []):
        candidates.append(
            CandidateMove(
                move=info["move"],
                visits=int(info["visits"]),
                winrate=norm_winrate(float(info["winrate"])),
                score_mean=norm_score(float(info.get(score_field, info.get("scoreLead", 0.0)))),
                prior=float(info.get("prior", 0.0)),
                pv=info.get("pv"),
            )
        )
    return TurnAnalysis(
        turn_index=turn,
        to_move=to_move,
        root_winrate=norm_winrate(float(root["winrate"])),
        root_score_mean=norm_score(float(root.get(score_field, root.get("scoreLead", 0.0)))),
        total_visits=sum(c.visits for c in candidates),
        candidates=candidates,
        raw_policy=response.get("policy"),
    )


class _Pending:
    def __init__(self, query: AnalysisQuery, score_field: str):
        self.query = query
        self.score_field = score_field
        self.expected = set(query.analyze_turns)
        self.received: dict[int, TurnAnalysis] = {}
        self.future: Future = Future()

    def partial_list(self) -> list[TurnAnalysis]:
        return [self.received[t] for t in sorted(self.received)]


class EngineHandle:
    """Shared handle to a running analysis engine subprocess."""

    def __init__(self, process: subprocess.Popen, name: str = "engine", max_pending: int = 8):
        self.name = name
        self.process = process
        self.queries_sent = 0
        self.protocol_errors: list[ProtocolError] = []
        self.max_pending = max_pending
        self._pending: dict[str, _Pending] = {}
        self._lock = threading.Lock()
        self._slots = threading.Semaphore(max_pending)
        self._write_queue: "queue.Queue[bytes | None]" = queue.Queue()
        self._closed = False
        self._eof = False
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._stderr_tail: list[str] = []
        self._stderr_thread = threading.Thread(target=self._drain_stderr, daemon=True)
        self._writer.start()
        self._reader.start()
        self._stderr_thread.start()

    def submit(self, query: AnalysisQuery, score_field: str = "scoreLead") -> Future:
        """Queue a query; the future resolves to TurnAnalysis list ordered by turn."""
        if self._closed or self._eof:
            raise EngineCrashed("engine is not running")
        self._slots.acquire()
        pending = _Pending(query, score_field)
        pending.future.add_done_callback(lambda _f: self._slots.release())
        with self._lock:
            self._pending[query.id] = pending
            self.queries_sent += 1
        if self._eof:  # reader may have finished between the check and registration
            self._fail_pending()
            return pending.future
        line = (json.dumps(query.to_wire()) + "\n").encode("utf-8")
        self._write_queue.put(line)
        return pending.future

    def analyze(self, query: AnalysisQuery, timeout: float | None = None, score_field: str = "scoreLead") -> list[TurnAnalysis]:
        return self.submit(query, score_field=score_field).result(timeout)

    def _write_loop(self) -> None:
        stdin = self.process.stdin
        assert stdin is not None
        while True:
            item = self._write_queue.get()
            if item is None:
                break
            try:
                stdin.write(item)
                stdin.flush()
            except (BrokenPipeError, ValueError, OSError):
                # reader will observe EOF and fail the pending queries
                break

    def _read_loop(self) -> None:
        stdout = self.process.stdout
        assert stdout is not None
        for raw in stdout:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            self._dispatch_line(line)
        self._eof = True
        self._fail_pending()

    def _dispatch_line(self, line: str) -> None:
        try:
            response = json.loads(line)
            if not isinstance(response, dict):
                raise ValueError("response is not an object")
        except ValueError:
            self.protocol_errors.append(ProtocolError("unparseable engine line", raw_line=line))
            return
        query_id = response.get("id")
        with self._lock:
            pending = self._pending.get(query_id) if isinstance(query_id, str) else None
        if pending is None:
            self.protocol_errors.append(ProtocolError("response for unknown query id", raw_line=line))
            return
        if "error" in response:
            err = ProtocolError(f"engine rejected query: {response['error']}", raw_line=line, partial=pending.partial_list())
            self._resolve(query_id, error=err)
            return
        if "turnNumber" not in response or "rootInfo" not in response:
            self.protocol_errors.append(ProtocolError("response missing turnNumber/rootInfo", raw_line=line))
            return
        try:
            analysis = ingest_response(response, pending.query, pending.score_field)
        except (KeyError, TypeError, ValueError):
            self.protocol_errors.append(ProtocolError("response fields malformed", raw_line=line))
            return
        with self._lock:
            pending.received[analysis.turn_index] = analysis
            done = pending.expected.issubset(pending.received)
        if done:
            self._resolve(query_id, result=pending.partial_list())

    def _resolve(self, query_id: str, result: list[TurnAnalysis] | None = None, error: Exception | None = None) -> None:
        with self._lock:
            pending = self._pending.pop(query_id, None)
        if pending is None:
            return
        if error is not None:
            pending.future.set_exception(error)
        else:
            pending.future.set_result(result)

    def _fail_pending(self) -> None:
        with self._lock:
            leftovers = list(self._pending.items())
            self._pending.clear()
        for _query_id, pending in leftovers:
            partial = pending.partial_list()
            if self.protocol_errors:
                first = self.protocol_errors[0]
                err: Exception = ProtocolError(str(first), raw_line=first.raw_line, partial=partial)
            else:
                err = EngineCrashed(f"{self.name} exited with {len(partial)} of {len(pending.expected)} turns", partial=partial)
            pending.future.set_exception(err)

    def _drain_stderr(self) -> None:
        stderr = self.process.stderr
        if stderr is None:
            return
        for raw in stderr:
            text = raw.decode("utf-8", errors="replace").rstrip()
            self._stderr_tail.append(text)
            del self._stderr_tail[:-50]

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._write_queue.put(None)
        try:
            if self.process.stdin:
                self.process.stdin.close()
        except OSError:
            pass
        try:
            self.process.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.process.kill()
            self.process.wait()
        self._writer.join(timeout=5)
        self._reader.join(timeout=5)

    def __enter__(self) -> "EngineHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def start_engine(
    command: list[str],
    *,
    name: str = "engine",
    max_pending: int = 8,
    handshake_timeout: float | None = 15.0,
    env: dict[str, str] | None = None,
) -> EngineHandle:
    """Spawn an analysis engine and verify it answers a one-visit probe."""
    try:
        process = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            env=env,
        )
    except OSError as err:
        raise SpawnFailure(f"could not start {command[0]}: {err}") from err
    handle = EngineHandle(process, name=name, max_pending=max_pending)
    if handshake_timeout is not None:
        probe = AnalysisQuery(
            id="probe-0",
            moves=[],
            initial_stones=[],
            rules=DEFAULT_RULES,
            komi=7.5,
            board_size=9,
            analyze_turns=[0],
            max_visits=1,
            include_policy=False,
        )
        try:
            handle.analyze(probe, timeout=handshake_timeout)
        except (FutureTimeout, TimeoutError):
            handle.close()
            raise HandshakeTimeout(f"{name} did not answer the probe within {handshake_timeout}s") from None
        except EngineError:
            handle.close()
            raise
    return handle


def stub_command(seed: int, shape: str = "default", jitter: float = 0.0, extra: list[str] | None = None) -> tuple[list[str], dict[str, str]]:
    """Command line + environment for the bundled stub engine subprocess."""
    cmd = [sys.executable, "-m", "goscreen.stub", "--seed", str(seed), "--shape", shape]
    if jitter:
        cmd += ["--jitter", str(jitter)]
    if extra:
        cmd += extra
    env = dict(os.environ)
    package_parent = str(Path(__file__).resolve().parent.parent)
    existing = env.get("PYTHONPATH")
    env["PYTHONPATH"] = package_parent + (os.pathsep + existing if existing else "")
    return cmd, env


def game_key(record: GameRecord, rules: str, komi: float | None = None) -> str:
    """Content hash identifying a game for caching; stable across re-parses."""
    payload = {
        "size": record.size,
        "komi": record.komi if komi is None else komi,
        "rules": rules,
        "setup": sorted((c, p) for c, p in record.setup_stones),
        "moves": [(m.color, to_engine_coord(m.point, record.size)) for m in record.moves],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass
class CacheKey:
    game_hash: str
    network: str
    max_visits: int


class AnalysisCache:
    """JSON-lines sidecar store: one metadata line, then one TurnAnalysis per line."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path_for(self, key: CacheKey) -> Path:
        network = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in key.network)
        return self.root / key.game_hash[:2] / f"{key.game_hash}.{network}.v{key.max_visits}.jsonl"

    def store(self, key: CacheKey, analyses: list[TurnAnalysis], *, engine: str = "", complete: bool = True, score_field: str = "scoreLead") -> Path:
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {
            "schema": CACHE_SCHEMA,
            "engine": engine,
            "network": key.network,
            "maxVisits": key.max_visits,
            "scoreField": score_field,
            "complete": complete,
        }
        lines = [json.dumps(meta, sort_keys=True, separators=(",", ":"))]
        lines += [json.dumps(a.to_json(), sort_keys=True, separators=(",", ":")) for a in analyses]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def metadata(self, key: CacheKey) -> dict | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        with path.open(encoding="utf-8") as fh:
            first = fh.readline().strip()
        return json.loads(first) if first else None

    def load(self, key: CacheKey, allow_partial: bool = False) -> list[TurnAnalysis] | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        with path.open(encoding="utf-8") as fh:
            lines = [line.strip() for line in fh if line.strip()]
        if not lines:
            return None
        meta = json.loads(lines[0])
        if not meta.get("complete", True) and not allow_partial:
            return None
        return [TurnAnalysis.from_json(json.loads(line)) for line in lines[1:]]


def analyze_game(
    handle: EngineHandle | None,
    record: GameRecord,
    *,
    max_visits: int,
    rules: str = DEFAULT_RULES,
    komi: float | None = None,
    include_policy: bool = True,
    include_final: bool = False,
    cache: AnalysisCache | None = None,
    network: str = "net",
    score_field: str = "scoreLead",
    query_id: str | None = None,
    timeout: float | None = 600.0,
) -> list[TurnAnalysis]:
    """Analyze every position of a game, serving from the cache when possible.

    Positions are those before each move; pass include_final=True to also
    analyze the position after the last move (needed to measure the last
    move's effect). On engine failure, turns that did arrive are salvaged to
    the cache (marked incomplete) before the error propagates.
    """
    replayed = board.replay(record)
    n_moves = len(replayed.moves)
    turns = list(range(n_moves + 1 if include_final else n_moves))
    if not turns:
        turns = [0]

    key = CacheKey(game_key(record, rules, komi), network, max_visits)
    if cache is not None:
        cached = cache.load(key)
        if cached is not None and len(cached) >= len(turns):
            return cached[: len(turns)]
    if handle is None:
        raise MissingAnalysis(
            f"no cached analysis for {key.game_hash[:12]} (network={key.network}, visits={key.max_visits}) and no engine configured"
        )

    query = AnalysisQuery(
        id=query_id or f"game-{key.game_hash[:12]}",
        moves=[(m.color, to_engine_coord(m.point, record.size)) for m in record.moves],
        initial_stones=[(c, to_engine_coord(p, record.size)) for c, p in record.setup_stones],
        rules=rules,
        komi=record.komi if komi is None else komi,
        board_size=record.size,
        analyze_turns=turns,
        max_visits=max_visits,
        include_policy=include_policy,
    )
    try:
        analyses = handle.analyze(query, timeout=timeout, score_field=score_field)
    except (ProtocolError, EngineCrashed) as err:
        if cache is not None and err.partial:
            cache.store(key, err.partial, engine=handle.name, complete=False, score_field=score_field)
        raise
    if cache is not None:
        cache.store(key, analyses, engine=handle.name, score_field=score_field)
    return analyses
