"""Deterministic stand-in engine speaking the analysis wire protocol.

Runs as `python -m goscreen.stub` and answers every query with seeded
pseudo-random but self-consistent numbers: the score mean reported for a
candidate move at one position is exactly the root score mean the stub will
report after that move is played. That makes whole-game quantities (effects,
telescoping sums, win-rate trends) reproducible and controllable from the
seed alone, without a GPU or a network file.

Identical seed and query stream produce byte-identical response streams.
Extra knobs exist purely for protocol tests: --shuffle emits a query's
per-turn responses in a scrambled order, --hold N buffers responses until N
queries arrived, --trace logs receipt events, and --replay dumps a recorded
transcript verbatim instead of computing anything.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import random
import sys

# Logistic sharpening of win rate per point of score lead; grows as the game
# shortens so equal leads mean more certainty later on.
WINRATE_BASE = 0.1
WINRATE_TURN_SCALE = 80.0

DEFAULT_CANDIDATES = 8


def derive_model_seed(seed: int, network_label: str) -> int:
    """Per-network stub seed: distinct labels behave as distinct networks."""
    digest = hashlib.blake2b(network_label.encode(), digest_size=4).digest()
    return seed ^ int.from_bytes(digest, "big")


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def winrate_from_score(score_black: float, turn: int) -> float:
    gain = WINRATE_BASE * (1.0 + turn / WINRATE_TURN_SCALE)
    return sigmoid(score_black * gain)


def split_visits(total: int, weights: list[float]) -> list[int]:
    """Integer visit split proportional to weights, each >= 1, summing to total."""
    k = len(weights)
    assert total >= k
    remaining = total - k
    wsum = sum(weights)
    raw = [remaining * w / wsum for w in weights]
    out = [1 + int(r) for r in raw]
    leftovers = sorted(range(k), key=lambda i: (raw[i] - int(raw[i]), -i), reverse=True)
    short = total - sum(out)
    for i in leftovers[:short]:
        out[i] += 1
    return out


class StubModel:
    """All response content for one (seed, shape) pair; usable in-process."""

    def __init__(self, seed: int, shape: str = "default", jitter: float = 0.0):
        self.seed = seed
        self.shape = shape
        self.jitter = jitter
        self._score_memo: dict[tuple, float] = {}

    def _rng(self, *tokens) -> random.Random:
        digest = hashlib.blake2b(repr((self.seed,) + tokens).encode(), digest_size=8).digest()
        return random.Random(int.from_bytes(digest, "big"))

    @staticmethod
    def _position_key(initial: tuple, prefix: tuple, size: int) -> tuple:
        return (size, tuple(sorted(initial)), prefix)

    @staticmethod
    def _to_move(initial: tuple, prefix: tuple) -> str:
        if prefix:
            return "W" if prefix[-1][0] == "B" else "B"
        if any(color == "B" for color, _ in initial):
            return "W"
        return "B"

    def _empty_points(self, initial: tuple, prefix: tuple, size: int) -> list[str]:
        taken = {coord for _, coord in initial}
        taken.update(coord for _, coord in prefix if coord != "pass")
        cols = "ABCDEFGHJKLMNOPQRST"[:size]
        return [f"{c}{r}" for r in range(size, 0, -1) for c in cols if f"{c}{r}" not in taken]

    def candidates(self, initial: tuple, prefix: tuple, size: int) -> list[tuple[str, float]]:
        """Ranked (move, mover-perspective score drift) pairs for one position."""
        key = self._position_key(initial, prefix, size)
        empty = self._empty_points(initial, prefix, size)
        count = DEFAULT_CANDIDATES
        if self.shape.startswith("uniform-k"):
            count = int(self.shape.split(":", 1)[1]) if ":" in self.shape else 5
        elif self.shape == "one-hot":
            count = 2
        count = max(1, min(count, len(empty)))
        rng = self._rng("cand", key)
        moves = rng.sample(empty, count)
        out = []
        for rank, move in enumerate(moves):
            u = self._rng("drift", key, move).random()
            drift = -0.02 * u if rank == 0 else -(0.3 * rank + 0.4 * u)
            out.append((move, drift))
        return out

    def score(self, initial: tuple, prefix: tuple, size: int, komi: float) -> float:
        """Black-perspective root score mean, built move by move from the root."""
        key = self._position_key(initial, prefix, size)
        if key in self._score_memo:
            return self._score_memo[key]
        if not prefix:
            value = self._rng("root", tuple(sorted(initial)), komi).uniform(-0.5, 0.5)
        else:
            parent = prefix[:-1]
            color, move = prefix[-1]
            before = self.score(initial, parent, size, komi)
            if move == "pass":
                drift = 0.0
            else:
                drifts = dict(self.candidates(initial, parent, size))
                if move in drifts:
                    drift = drifts[move]
                else:
                    drift = self._rng("offcand", self._position_key(initial, parent, size), move).uniform(-2.5, -0.2)
            value = before + (drift if color == "B" else -drift)
        self._score_memo[key] = value
        return value

    def _policy_weights(self, key: tuple, moves: list[str], rng: random.Random, query_id: str | None) -> list[float]:
        if self.shape == "one-hot":
            return [1000.0 if i == 0 else 1.0 for i in range(len(moves))]
        if self.shape.startswith("uniform-k"):
            return [1.0] * len(moves)
        weights = [math.exp(-0.55 * i + 0.3 * rng.random()) for i in range(len(moves))]
        if self.jitter and query_id is not None:
            noise = self._rng("jitter-policy", key, query_id)
            weights = [w * math.exp(self.jitter * noise.uniform(-1, 1)) for w in weights]
        if rng.random() < 0.35 and len(weights) > 1:
            weights[0], weights[1] = weights[1], weights[0]
        return weights

    def respond(self, query: dict) -> list[dict]:
        """Responses (one dict per analyzed turn) for a wire query."""
        size = int(query.get("boardXSize", 19))
        komi = float(query.get("komi", 7.5))
        initial = tuple((c, m) for c, m in query.get("initialStones", []))
        all_moves = tuple((c, m) for c, m in query.get("moves", []))
        max_visits = int(query.get("maxVisits", 100))
        include_policy = bool(query.get("includePolicy", False))
        turns = query.get("analyzeTurns")
        if turns is None:
            turns = [len(all_moves)]
        query_id = query.get("id", "")

        out = []
        for turn in turns:
            prefix = all_moves[:turn]
            out.append(self._respond_turn(query_id, size, komi, initial, prefix, turn, max_visits, include_policy))
        return out

    def _respond_turn(self, query_id, size, komi, initial, prefix, turn, max_visits, include_policy) -> dict:
        key = self._position_key(initial, prefix, size)
        to_move = self._to_move(initial, prefix)
        score_black = self.score(initial, prefix, size, komi)
        cands = self.candidates(initial, prefix, size)
        count = min(len(cands), max_visits)
        cands = cands[:count]

        visit_tokens = ["visits", key, max_visits]
        if self.jitter and query_id:
            visit_tokens += ["jitter", query_id]
        visit_rng = self._rng(*visit_tokens)
        if self.shape == "one-hot" and count > 1:
            visits = [max_visits - (count - 1)] + [1] * (count - 1)
        elif self.shape.startswith("uniform-k"):
            visits = split_visits(max_visits, [1.0] * count)
        else:
            visits = split_visits(max_visits, [math.exp(-0.7 * i) * (1 + 0.2 * visit_rng.random()) for i in range(count)])

        policy_rng = self._rng("policy", key)
        weights = self._policy_weights(key, [m for m, _ in cands], policy_rng, query_id)

        sign = 1.0 if to_move == "B" else -1.0
        move_infos = []
        policy_vector = None
        if include_policy:
            policy_vector = [-1.0] * (size * size + 1)
            empty = self._empty_points(initial, prefix, size)  # ordered: iteration must be stable
            floor_rng = self._rng("policy-floor", key)
            values: dict[str, float] = {}
            for move in empty:
                values[move] = 1e-4 * (0.5 + floor_rng.random())
            values["pass"] = 5e-5
            for (move, _), w in zip(cands, weights):
                values[move] = w
            total = sum(values.values())
            for move, w in values.items():
                idx = size * size if move == "pass" else self._coord_index(move, size)
                policy_vector[idx] = w / total
            prior_of = {move: values[move] / total for move, _ in cands}
        else:
            wsum = sum(weights)
            prior_of = {move: w / wsum for (move, _), w in zip(cands, weights)}

        for (move, drift), nvisits in zip(cands, visits):
            child_black = score_black + (drift if to_move == "B" else -drift)
            child_win_black = winrate_from_score(child_black, turn + 1)
            move_infos.append(
                {
                    "move": move,
                    "visits": nvisits,
                    "winrate": child_win_black if to_move == "B" else 1.0 - child_win_black,
                    "scoreLead": child_black * sign,
                    "prior": prior_of[move],
                    "pv": [move],
                }
            )

        win_black = winrate_from_score(score_black, turn)
        response = {
            "id": query_id,
            "turnNumber": turn,
            "rootInfo": {
                "winrate": win_black if to_move == "B" else 1.0 - win_black,
                "scoreLead": score_black * sign,
                "visits": sum(visits),
            },
            "moveInfos": move_infos,
        }
        if policy_vector is not None:
            response["policy"] = policy_vector
        return response

    @staticmethod
    def _coord_index(move: str, size: int) -> int:
        cols = "ABCDEFGHJKLMNOPQRST"
        x = cols.index(move[0].upper())
        y = size - int(move[1:])
        return y * size + x


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="goscreen-stub", description="deterministic analysis engine stand-in")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--shape", default="default", help="default | one-hot | uniform-k:K")
    parser.add_argument("--jitter", type=float, default=0.0, help="per-query-id noise for repeat experiments")
    parser.add_argument("--shuffle", action="store_true", help="emit each query's turn responses in scrambled order")
    parser.add_argument("--hold", type=int, default=0, help="buffer responses until N queries have arrived")
    parser.add_argument("--trace", default=None, help="append query receipt events to this JSONL file")
    parser.add_argument("--replay", default=None, help="emit this transcript verbatim and ignore query content")
    args = parser.parse_args(argv)

    stdout = sys.stdout
    if args.replay:
        # wait for the first query, dump the recorded lines, and exit the way
        # a crashing or misbehaving engine would
        for _ in sys.stdin:
            break
        with open(args.replay, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    stdout.write(line.rstrip("\n") + "\n")
        stdout.flush()
        return 0

    model = StubModel(args.seed, args.shape, args.jitter)
    shuffle_rng = random.Random(args.seed ^ 0x5F5F)
    trace_fh = open(args.trace, "a", encoding="utf-8") if args.trace else None
    held: list[str] = []
    seen = 0
    answered = 0

    def emit(lines: list[str]) -> None:
        if args.shuffle:
            shuffle_rng.shuffle(lines)
        for line in lines:
            stdout.write(line + "\n")
        stdout.flush()

    for raw in sys.stdin:
        raw = raw.strip()
        if not raw:
            continue
        seen += 1
        try:
            query = json.loads(raw)
        except ValueError:
            stdout.write(json.dumps({"error": "bad query", "raw": raw[:200]}) + "\n")
            stdout.flush()
            continue
        if trace_fh is not None:
            trace_fh.write(json.dumps({"event": "query", "id": query.get("id"), "unanswered": seen - answered}) + "\n")
            trace_fh.flush()
        lines = [json.dumps(resp, sort_keys=True) for resp in model.respond(query)]
        if args.hold and seen < args.hold:
            held.extend(lines)
            continue
        if held:
            lines = held + lines
            held = []
        emit(lines)
        answered = seen
    if held:
        emit(held)
    if trace_fh is not None:
        trace_fh.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
