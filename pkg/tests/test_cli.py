import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from splitent import cli


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main(["run", "--out-dir", str(out), *args])
    return code, out


def read_rows(out):
    return [json.loads(line) for line in (out / "rows.jsonl").read_text().splitlines()]


def failing_channels(rng, cfg, verbose=False):
    x = float(rng.normal())
    rows = [{"check": "always-fails", "ok": False, "x": x}]
    return rows, {"x": x}, {"note": "verbose"} if verbose else {}


def test_bound_chain_small_run(tmp_path, capsys):
    code, out = run(tmp_path, "--suite", "bound-chain", "--instances", "2", "--seed", "7")
    assert code == 0
    rows = read_rows(out)
    # one row per (instance, p)
    assert len(rows) == 2 * 3
    assert sorted({r["p"] for r in rows}) == [0.25, 0.5, 0.75]
    assert all(r["ok"] for r in rows)
    for name in ("rows.csv", "summary.csv", "report.txt", "run.json"):
        assert (out / name).exists()
    assert "PASS" in capsys.readouterr().out
    meta = json.loads((out / "run.json").read_text())
    assert meta["generator"] == "PCG64" and meta["failed_instances"] == 0
    assert list((out / "failures").iterdir()) == []


def test_zero_instances_is_config_error(tmp_path, capsys):
    code, out = run(tmp_path, "--suite", "bound-chain", "--instances", "0")
    assert code == 2
    assert "instances" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("args", [
    ["--suite", "nope"],
    ["--dims", "2,2"],
    ["--dims", "2,3,2"],
    ["--p-grid", "0.5,1.5"],
    ["--p-grid", "a,b"],
    ["--jobs", "0"],
])
def test_config_errors(tmp_path, args):
    assert run(tmp_path, *args)[0] == 2


def test_family_flag_choices(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["run", "--family", "bogus"])


def test_determinism_across_jobs(tmp_path):
    base = ["--suite", "channels", "--instances", "3", "--seed", "11"]
    c1, a = run(tmp_path, *base, "--jobs", "1", name="a")
    c2, b = run(tmp_path, *base, "--jobs", "2", name="b")
    c3, c = run(tmp_path, *base, name="c")
    assert c1 == c2 == c3 == 0
    text = (a / "rows.jsonl").read_text()
    assert text == (b / "rows.jsonl").read_text() == (c / "rows.jsonl").read_text()
    assert (a / "rows.csv").read_text() == (b / "rows.csv").read_text()


def test_different_seed_changes_rows(tmp_path):
    _, a = run(tmp_path, "--suite", "channels", "--instances", "1", "--seed", "1", name="a")
    _, b = run(tmp_path, "--suite", "channels", "--instances", "1", "--seed", "2", name="b")
    assert read_rows(a) != read_rows(b)


def test_instance_rng_is_independent_of_order():
    x = cli.instance_rng(5, 3).normal(size=4)
    cli.instance_rng(5, 0).normal(size=100)
    assert np.array_equal(x, cli.instance_rng(5, 3).normal(size=4))
    assert not np.array_equal(x, cli.instance_rng(5, 2).normal(size=4))


def test_replay_identical(tmp_path, capsys):
    code, out = run(tmp_path, "--suite", "bound-chain", "--instances", "1", "--p-grid", "0.5", "--dump-all")
    assert code == 0
    [dump] = (out / "dumps").iterdir()
    capsys.readouterr()
    assert cli.main(["replay", str(dump)]) == 0
    text = capsys.readouterr().out
    assert "reproduced: identical" in text
    assert "sigma - omega min eigenvalue" in text
    assert "modular_spectrum_AB" in text


def test_replay_detects_mismatch(tmp_path, capsys):
    _, out = run(tmp_path, "--suite", "channels", "--instances", "1", "--dump-all")
    [dump] = (out / "dumps").iterdir()
    data = json.loads(dump.read_text())
    data["rows"][0]["ok"] = not data["rows"][0]["ok"]
    dump.write_text(json.dumps(data))
    assert cli.main(["replay", str(dump)]) == 3
    assert "DIFFERS" in capsys.readouterr().out


def test_failure_writes_replayable_dump(tmp_path, monkeypatch, capsys):
    monkeypatch.setitem(cli.SUITES, "channels", failing_channels)
    code, out = run(tmp_path, "--suite", "channels", "--instances", "2", "--seed", "3")
    assert code == 1
    dumps = sorted((out / "failures").iterdir())
    assert [d.name for d in dumps] == ["channels-00000.json", "channels-00001.json"]
    assert "FAIL" in (out / "report.txt").read_text()
    data = json.loads(dumps[1].read_text())
    assert data["schema"] == cli.DUMP_SCHEMA and data["index"] == 1 and data["seed"] == 3
    capsys.readouterr()
    # the failing instance reproduces exactly; exit 0 means "identical", not "passing"
    assert cli.main(["replay", str(dumps[1])]) == 0
    text = capsys.readouterr().out
    assert "FAIL" in text and "note" in text


@pytest.mark.parametrize("mutate", [
    lambda d: "{not json",
    lambda d: json.dumps([1, 2]),
    lambda d: json.dumps({k: v for k, v in d.items() if k != "rows"}),
    lambda d: json.dumps({**d, "schema": "splitent-dump/0"}),
    lambda d: json.dumps({**d, "generator": "MT19937"}),
    lambda d: json.dumps({**d, "index": "0"}),
    lambda d: json.dumps({**d, "suite": "nope"}),
    lambda d: json.dumps({**d, "seed": d["seed"] + 1}),
], ids=["syntax", "array", "missing", "schema", "generator", "type", "suite", "header"])
def test_corrupted_dump_is_schema_error(tmp_path, mutate, capsys):
    _, out = run(tmp_path, "--suite", "channels", "--instances", "1", "--dump-all")
    [dump] = (out / "dumps").iterdir()
    dump.write_text(mutate(json.loads(dump.read_text())))
    assert cli.main(["replay", str(dump)]) == 2
    assert "schema error" in capsys.readouterr().err


def test_missing_dump_is_schema_error(tmp_path):
    assert cli.main(["replay", str(tmp_path / "absent.json")]) == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small sweep\nsuite = channels\ninstances = 2\nseed = 4\n")
    code, out = run(tmp_path, "--config", str(cfg))
    assert code == 0
    assert {r["instance"] for r in read_rows(out)} == {0, 1}
    # flags override the file
    code, out = run(tmp_path, "--config", str(cfg), "--instances", "1", name="o")
    assert {r["instance"] for r in read_rows(out)} == {0}


@pytest.mark.parametrize("text", ["colour = red\n", "instances = many\n", "suite channels\n"])
def test_bad_config_file(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert run(tmp_path, "--config", str(cfg))[0] == 2
    assert run(tmp_path, "--config", str(tmp_path / "absent.cfg"))[0] == 2


def test_parse_flat():
    got = cli.parse_flat("dims = 2, 4, 2\np_grid = 0.5\n# c\nfamily = ising\n", "x")
    assert got == {"dims": [2, 4, 2], "p_grid": [0.5], "family": "ising"}
    with pytest.raises(cli.ConfigError, match="unknown key"):
        cli.parse_flat("bogus = 1", "x")


def test_defaults_command(capsys):
    assert cli.main(["defaults"]) == 0
    text = capsys.readouterr().out
    parsed = cli.parse_flat(text, "stdout")
    assert parsed == cli.defaults()
    assert parsed["instances"] == 100 and parsed["p_grid"] == [0.25, 0.5, 0.75]
    assert parsed["grid_n"] == 200 and parsed["s_max"] == 10.0 and parsed["s_points"] == 12


def test_zf_decay_curve(tmp_path):
    code, out = run(tmp_path, "--suite", "zf-decay", "--family", "sinh-gordon", "--b", "0.5", "--instances", "5")
    assert code == 0
    with (out / "curve.csv").open() as fh:
        curve = list(csv.DictReader(fh))
    # the suite ignores the instance count
    assert len(curve) == 12
    for col in ("family", "b", "s", "norm1_total", "ln_norm1", "sector1_norm", "sector2_norm", "ceiling"):
        assert col in curve[0]
    ln = [float(r["ln_norm1"]) for r in curve]
    assert all(b < a for a, b in zip(ln, ln[1:])) and ln[-1] < 0.05


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "splitent.cli", "defaults"], capture_output=True, text=True)
    assert proc.returncode == 0 and "suite = bound-chain" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "splitent.cli", "run", "--instances", "0",
                           "--out-dir", str(tmp_path / "x")], capture_output=True, text=True)
    assert proc.returncode == 2
