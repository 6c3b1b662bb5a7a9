"""End-to-end command tests, run in-process against the stub subprocess."""

import csv
import json
from pathlib import Path

import pytest

from goscreen import cli
from goscreen.fixtures import noisy_human_game, perfect_player_game
from goscreen.sgf import write_sgf
from goscreen.stub import StubModel, derive_model_seed

from conftest import FIXTURE_SEED, record_query


@pytest.fixture(scope="module")
def game_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("games")
    (root / "perfect.sgf").write_bytes(write_sgf(perfect_player_game(FIXTURE_SEED)))
    (root / "noisy.sgf").write_bytes(write_sgf(noisy_human_game(FIXTURE_SEED)))
    corpus = root / "corpus"
    corpus.mkdir()
    for seed in range(1, 5):
        (corpus / f"game{seed}.sgf").write_bytes(write_sgf(noisy_human_game(seed, n_moves=16)))
    return root


def run(argv):
    return cli.main([str(a) for a in argv])


def common(tmp_path, *, seed=FIXTURE_SEED, visits=200):
    return [
        "--stub",
        "--seed",
        seed,
        "--visits",
        visits,
        "--cache-dir",
        tmp_path / "cache",
        "--out",
        tmp_path / "out",
        "--no-figures",
    ]


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# --- analyze -----------------------------------------------------------------


def test_analyze_three_valid_files(game_dir, tmp_path):
    corpus = sorted((game_dir / "corpus").glob("*.sgf"))[:3]
    code = run(["analyze", *corpus, *common(tmp_path)])
    assert code == 0
    cache_files = list((tmp_path / "cache").rglob("*.jsonl"))
    assert len(cache_files) == 3


def test_analyze_partial_failure_names_bad_file(game_dir, tmp_path, capsys):
    bad = tmp_path / "broken.sgf"
    bad.write_bytes(b"(;SZ[19")
    code = run(["analyze", game_dir / "noisy.sgf", bad, *common(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "broken.sgf" in err and "error" in err
    assert len(list((tmp_path / "cache").rglob("*.jsonl"))) == 1


def test_analyze_rerun_serves_from_cache_without_engine(game_dir, tmp_path):
    assert run(["analyze", game_dir / "noisy.sgf", *common(tmp_path)]) == 0
    # second run omits --stub entirely: only the cache can satisfy it
    code = run(
        [
            "analyze",
            game_dir / "noisy.sgf",
            "--visits",
            200,
            "--cache-dir",
            tmp_path / "cache",
            "--out",
            tmp_path / "out",
        ]
    )
    assert code == 0


def test_analyze_all_failed_is_fatal(tmp_path):
    bad = tmp_path / "broken.sgf"
    bad.write_bytes(b"not sgf at all")
    assert run(["analyze", bad, *common(tmp_path)]) == 1


def test_analyze_worker_pool_shares_one_engine(game_dir, tmp_path):
    corpus = sorted((game_dir / "corpus").glob("*.sgf"))
    code = run(["analyze", *corpus, "--jobs", 3, *common(tmp_path)])
    assert code == 0
    assert len(list((tmp_path / "cache").rglob("*.jsonl"))) == len(corpus)


def test_analyze_komi_override_changes_game_identity(game_dir, tmp_path):
    base = common(tmp_path)
    assert run(["analyze", game_dir / "noisy.sgf", *base]) == 0
    assert run(["analyze", game_dir / "noisy.sgf", "--komi-override", "0.5", *base]) == 0
    # a different komi is a different analysis: two cache entries exist
    assert len(list((tmp_path / "cache").rglob("*.jsonl"))) == 2


# --- report --------------------------------------------------------------------


def test_report_discriminates_fixtures(game_dir, tmp_path, capsys):
    code = run(["report", game_dir / "perfect.sgf", game_dir / "noisy.sgf", *common(tmp_path)])
    assert code == 0
    err = capsys.readouterr().err
    assert "perfect.sgf: W suspicion strong" in err
    assert "perfect.sgf: B suspicion none" in err
    assert "noisy.sgf: W suspicion none" in err
    assert "noisy.sgf: B suspicion none" in err
    report = json.loads((tmp_path / "out" / "perfect" / "report.json").read_text())
    assert report["players"]["W"]["suspicion"]["level"] == "strong"
    assert report["schema"] == "goscreen-report/1"


def test_report_without_cache_or_engine_is_fatal_with_hint(game_dir, tmp_path, capsys):
    code = run(
        [
            "report",
            game_dir / "noisy.sgf",
            "--cache-dir",
            tmp_path / "empty-cache",
            "--out",
            tmp_path / "out",
            "--no-figures",
        ]
    )
    assert code == 1
    err = capsys.readouterr().err
    assert "no cached analysis" in err
    assert "--engine or --stub" in err


def test_report_renders_figures_by_default(game_dir, tmp_path):
    argv = ["report", game_dir / "noisy.sgf", *common(tmp_path)]
    argv.remove("--no-figures")
    assert run(argv) == 0
    out = tmp_path / "out" / "noisy"
    for name in ("win_rate.png", "score_means_black.png", "score_means_white.png", "effect_cma.png"):
        assert (out / name).stat().st_size > 0


def test_report_thresholds_file_changes_verdicts(game_dir, tmp_path):
    strict = tmp_path / "strict.cfg"
    strict.write_text("min_moves = 1000\n", encoding="utf-8")
    assert run(["report", game_dir / "perfect.sgf", *common(tmp_path), "--thresholds", strict]) == 0
    report = json.loads((tmp_path / "out" / "perfect" / "report.json").read_text())
    assert report["players"]["W"]["suspicion"]["level"] == "none"
    assert all(i["verdict"] == "inconclusive" for i in report["players"]["W"]["indicators"])


def test_report_rerun_byte_identical(game_dir, tmp_path):
    first = tmp_path / "first"
    second = tmp_path / "second"
    for out in (first, second):
        code = run(
            [
                "report",
                game_dir / "perfect.sgf",
                "--stub",
                "--seed",
                FIXTURE_SEED,
                "--visits",
                200,
                "--cache-dir",
                tmp_path / "cache",
                "--out",
                out,
                "--no-figures",
            ]
        )
        assert code == 0
    assert tree_bytes(first) == tree_bytes(second)


# --- strength -------------------------------------------------------------------


def independent_hit_counts(corpus_dir: Path, label: str, seed: int, visits: int):
    """Recompute (hits, positions) per network straight from stub responses."""
    from goscreen.sgf import parse_sgf

    model = StubModel(derive_model_seed(seed, label))
    hits = 0
    positions = 0
    for path in sorted(corpus_dir.glob("*.sgf")):
        record, _ = parse_sgf(path.read_bytes())
        query = record_query(record, visits=visits, include_final=False)
        for response in model.respond(query.to_wire()):
            infos = response["moveInfos"]
            best = max(range(len(infos)), key=lambda i: (infos[i]["visits"], -i))
            policy = response["policy"]
            argmax = max(range(len(policy)), key=lambda i: (policy[i], -i))
            cols = "ABCDEFGHJKLMNOPQRST"
            move = infos[best]["move"]
            move_index = (19 - int(move[1:])) * 19 + cols.index(move[0])
            positions += 1
            hits += 1 if move_index == argmax else 0
    return hits, positions


def test_strength_two_networks_hand_checked(game_dir, tmp_path, capsys):
    corpus = game_dir / "corpus"
    code = run(
        [
            "strength",
            corpus,
            "--network-label",
            "net-a",
            "--network-label",
            "net-b",
            *common(tmp_path, visits=100),
        ]
    )
    assert code == 0
    with (tmp_path / "out" / "strength.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["network"] for r in rows] == ["net-a", "net-b"]
    for row in rows:
        hits, positions = independent_hit_counts(corpus, row["network"], FIXTURE_SEED, 100)
        assert int(row["hits"]) == hits
        assert int(row["positions"]) == positions == 64  # 4 games x 16 positions
        assert row["hit_rate"] == f"{hits / positions:.4f}"
    hist = (tmp_path / "out" / "kl_histogram.csv").read_text().splitlines()
    assert hist[0] == "network,bin_lo,bin_hi,count"
    assert len(hist) == 1 + 2 * 12


def test_strength_sampling_deterministic(game_dir, tmp_path):
    corpus = game_dir / "corpus"
    outs = []
    for name in ("s1", "s2"):
        out = tmp_path / name
        code = run(
            [
                "strength",
                corpus,
                "--sample",
                "--network-label",
                "net-a",
                "--stub",
                "--seed",
                3,
                "--visits",
                60,
                "--cache-dir",
                tmp_path / "cache",
                "--out",
                out,
                "--no-figures",
            ]
        )
        assert code == 0
        outs.append(tree_bytes(out))
    assert outs[0] == outs[1]
    with (tmp_path / "s1" / "strength.csv").open() as fh:
        (row,) = list(csv.DictReader(fh))
    assert int(row["positions"]) == 4  # one sampled position per game


def test_strength_empty_corpus_is_fatal(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run(["strength", empty, *common(tmp_path)]) == 1


# --- calibrate -------------------------------------------------------------------


def test_calibrate_shape_and_determinism(game_dir, tmp_path):
    code = run(
        [
            "calibrate",
            game_dir / "noisy.sgf",
            "--turn",
            10,
            "--visit-grid",
            "10,100,1000",
            "--repeats",
            7,
            *common(tmp_path, visits=100),
        ]
    )
    assert code == 0
    lines = (tmp_path / "out" / "calibration.csv").read_text().splitlines()
    assert lines[0] == "visits,run,kl"
    assert len(lines) == 1 + 21
    spec = json.loads((tmp_path / "out" / "calibration.vl.json").read_text())
    assert len(spec["data"]["values"]) == 21
    # deterministic stub: zero variance within each visit level
    by_visits = {}
    for line in lines[1:]:
        visits, _run, kl = line.split(",")
        by_visits.setdefault(visits, set()).add(kl)
    assert all(len(kls) == 1 for kls in by_visits.values())


def test_calibrate_jitter_spreads_runs(game_dir, tmp_path):
    code = run(
        [
            "calibrate",
            game_dir / "noisy.sgf",
            "--turn",
            10,
            "--visit-grid",
            "100",
            "--repeats",
            7,
            "--stub-jitter",
            "0.5",
            *common(tmp_path, visits=100),
        ]
    )
    assert code == 0
    lines = (tmp_path / "out" / "calibration.csv").read_text().splitlines()[1:]
    assert len({line.split(",")[2] for line in lines}) > 1


def test_calibrate_bad_turn_is_fatal(game_dir, tmp_path):
    code = run(["calibrate", game_dir / "noisy.sgf", "--turn", 999, *common(tmp_path)])
    assert code == 1


# --- config file -------------------------------------------------------------------


def test_config_file_with_flag_overrides(game_dir, tmp_path):
    config = tmp_path / "goscreen.cfg"
    config.write_text(
        f"stub = true\nseed = {FIXTURE_SEED}\nvisits = 999\ncache_dir = {tmp_path / 'cache'}\n"
        f"out_dir = {tmp_path / 'out'}\n",
        encoding="utf-8",
    )
    # flag wins over the file's visits
    code = run(["analyze", game_dir / "noisy.sgf", "--config", config, "--visits", 50, "--no-figures"])
    assert code == 0
    cache_file = next((tmp_path / "cache").rglob("*.jsonl"))
    assert ".v50." in cache_file.name


def test_unknown_config_key_is_fatal(game_dir, tmp_path):
    config = tmp_path / "bad.cfg"
    config.write_text("mystery = 1\n", encoding="utf-8")
    assert run(["analyze", game_dir / "noisy.sgf", "--config", config]) == 1
