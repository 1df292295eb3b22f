from __future__ import annotations

import json
from pathlib import Path

from lobforge.book import BookState, write_book
from lobforge.cli import run
from lobforge.experiments import loads_compare
from lobforge.flow import read_model

DATA = Path(__file__).parent / "data"


def call(capsys, *argv):
    code = run([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_clear_writes_result_and_manifest(tmp_path, capsys):
    book = tmp_path / "book.json"
    write_book(BookState([0, 3, 0, 0], [0, 2, 0, 1]), book)
    out = tmp_path / "o"
    code, text, _ = call(capsys, "clear", "--book", book, "--out", out)
    assert code == 0
    result = json.loads(text)
    assert result["cleared"] == {"d": 4, "buy": [0, 1, 0, 0], "sell": [0, 0, 0, 1]}
    assert json.loads((out / "clearing.json").read_text()) == result
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "clear"
    assert manifest["outputs"] == ["clearing.json"]
    assert set(manifest["versions"]) == {"lobforge", "numpy", "scipy", "numba", "python"}
    assert "seed" in manifest and "backend" in manifest


def test_clear_with_event_batch(tmp_path, capsys):
    book = tmp_path / "book.csv"
    write_book(BookState([0, 1, 0, 0], [0, 0, 2, 0]), book)
    events = tmp_path / "ev.csv"
    events.write_text("kind,price,size\nlimit_buy,3,1\nlimit_sell,1,1\n")
    code, text, _ = call(capsys, "clear", "--book", book, "--events", events, "--out", tmp_path / "o")
    assert code == 0
    # netted first: the buy at 3 meets the sell at 1
    assert json.loads(text)["cleared"] == {"d": 4, "buy": [0, 1, 0, 0], "sell": [0, 0, 2, 0]}
    code, text, _ = call(capsys, "clear", "--book", book, "--events", events, "--sequential",
                         "--out", tmp_path / "s")
    assert code == 0
    # one at a time: the buy lifts the ask at 3, then the sell hits the bid at 2
    assert json.loads(text)["final"] == {"d": 4, "buy": [0, 0, 0, 0], "sell": [0, 0, 1, 0]}


def test_usage_errors_exit_2_and_name_the_flag(tmp_path, capsys):
    code, _, err = call(capsys, "clear", "--out", tmp_path / "o")
    assert code == 2 and "--book" in err
    code, _, err = call(capsys, "kbe", "--origin", "nowhere", "--out", tmp_path / "o")
    assert code == 2 and "--origin" in err
    code, _, err = call(capsys, "compare", "--grid", "3", "--out", tmp_path / "o")
    assert code == 2 and "--grid" in err
    code, _, _ = call(capsys, "simulate", "--no-such-flag")
    assert code == 2
    code, _, err = call(capsys, "simulate", "--threads", "0", "--out", tmp_path / "o")
    assert code == 2 and "--threads" in err


def test_domain_errors_exit_1(tmp_path, capsys):
    code, _, err = call(capsys, "kbe", "--dt", "0.5", "--T", "0.2", "--out", tmp_path / "o")
    assert code == 1 and "BadParameter" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("34200.1,1,5,100,xx,1\n")
    code, _, err = call(capsys, "calibrate", "--messages", bad, "--out", tmp_path / "o")
    assert code == 1 and "ParseError" in err


def test_config_file_is_overridden_by_flags(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"T": 0.05, "reps": 30, "seed": 4, "paths": 0}))
    out = tmp_path / "o"
    code, text, _ = call(capsys, "simulate", "--config", cfg, "--seed", "5", "--out", out)
    assert code == 0
    est = json.loads(text)["estimate"]
    assert est["seed"] == 5 and est["n"] == 30
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["T"] == 0.05 and manifest["seed"] == 5
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = call(capsys, "simulate", "--config", cfg, "--out", out)
    assert code == 2 and "--config" in err


def test_simulate_paths_are_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        assert call(capsys, "simulate", "--T", "0.1", "--paths", "2", "--seed", "9", "--out", tmp_path / name)[0] == 0
    for f in ("path_0.csv", "path_1.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    lines = (tmp_path / "a" / "path_0.csv").read_text().splitlines()
    assert lines[0] == "time,kind,price,size,ask,bid"
    assert lines[1] == "0.0,origin,,,4,3"


def test_compare_output_is_identical_across_thread_counts(tmp_path, capsys):
    args = ["compare", "--asks", "1,2", "--bids", "1", "--T", "0.05", "--dt", "0.001", "--eps", "1e-4",
            "--reps", "40", "--seed", "2"]
    assert call(capsys, *args, "--threads", "1", "--out", tmp_path / "t1")[0] == 0
    assert call(capsys, *args, "--threads", "3", "--out", tmp_path / "t3")[0] == 0
    one = (tmp_path / "t1" / "compare.csv").read_bytes()
    assert one == (tmp_path / "t3" / "compare.csv").read_bytes()
    rows = loads_compare(one.decode())
    assert [(r.ask_depth, r.bid_depth) for r in rows] == [(1, 1), (2, 1)]
    assert all(r.mc_n == 40 and r.kbe is not None for r in rows)


def test_kbe_single_and_grid(tmp_path, capsys):
    code, text, _ = call(capsys, "kbe", "--T", "0.05", "--dt", "0.001", "--eps", "1e-4", "--out", tmp_path / "s")
    assert code == 0
    single = float(text.splitlines()[1])
    assert 0.0 < single < 1.0
    diag = json.loads((tmp_path / "s" / "manifest.json").read_text())["diagnostics"]
    assert diag["n_steps"] == 50
    code, text, _ = call(capsys, "kbe", "--T", "0.05", "--dt", "0.001", "--eps", "1e-4", "--asks", "1,3",
                         "--out", tmp_path / "g")
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "ask_depth,bid_depth,probability"
    # the default origin has ask depth 1 and bid depth 1
    assert float(lines[1].split(",")[2]) == single
    assert float(lines[2].split(",")[2]) < single


def test_convergence_table(tmp_path, capsys):
    code, text, _ = call(capsys, "convergence", "--model", "A", "--T", "0.02", "--dts", "0.004,0.002",
                         "--dt-min", "0.001", "--eps", "1e-4", "--out", tmp_path / "c")
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "dt,value,err" and len(lines) == 4 and lines[3].startswith("# slope")
    manifest = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert "reference" in manifest and "slope" in manifest


def test_calibrate_writes_report_and_model(tmp_path, capsys):
    out = tmp_path / "cal"
    code, text, _ = call(capsys, "calibrate", "--messages", DATA / "messages_sample.csv", "--scheme", "A",
                         "--out", out)
    assert code == 0
    assert json.loads(text)["scheme"] == "A"
    model = read_model(out / "model.json")
    assert model.tag == "A"
    assert json.loads((out / "manifest.json").read_text())["outputs"] == ["calibration.json", "model.json"]


def test_validate_model(tmp_path, capsys):
    code, text, _ = call(capsys, "validate-model", "--model", "B", "--samples", "10", "--out", tmp_path / "v")
    assert code == 0 and json.loads(text)["ok"] is True
    code, text, err = call(capsys, "validate-model", "--model", "B", "--guard", "none", "--samples", "10",
                           "--out", tmp_path / "w")
    assert code == 1 and json.loads(text)["ok"] is False
    assert json.loads((tmp_path / "w" / "manifest.json").read_text())["ok"] is False
