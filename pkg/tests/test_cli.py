import json
import os

import pytest

from rackforge import io
from rackforge.cli import run
from rackforge.stitch import WorldRecon

SMALL = {"generator": {"frames": 6, "rack_count": [2, 3]}, "grid": {"resolution": 128}, "sequences": 2,
         "ratios": [1, 1, 0]}


def files_under(root):
    return sorted(os.path.relpath(os.path.join(d, f), root) for d, _, fs in os.walk(root) for f in fs)


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("FORGE_SEED", raising=False)
    io.save_json("cfg.json", SMALL)
    io.save_json("noise.json", {"dropout": 0.05, "flip_prob": 0.01, "epsilon": 0.2, "seed": 3})
    return tmp_path


def test_full_pipeline(work, capsys):
    assert run(["gen", "--config", "cfg.json", "--seed", "4", "--out", "ds"]) == 0
    before = set(files_under(work))
    assert run(["degrade", "--in", "ds", "--noise", "noise.json", "--out", "pred"]) == 0
    assert {f for f in set(files_under(work)) - before if not f.startswith("pred/")} == set()
    assert run(["eval", "--pred", "pred", "--truth", "ds", "--out", "metrics.json"]) == 0
    table = io.load_json("metrics.json")
    assert set(table) == {"top", "front"}
    capsys.readouterr()
    assert run(["loss", "--pred", "pred", "--truth", "ds"]) == 0
    losses = json.loads(capsys.readouterr().out)
    assert losses["top"]["l_total"] >= losses["top"]["l_sup"] > 0
    assert run(["recon", "--layouts", "ds", "--out", "rec"]) == 0
    assert run(["stitch", "--frames", "rec", "--sequence", "seq_0001", "--out", "world.json"]) == 0
    assert run(["export-obj", "--world", "world.json", "--out", "world.obj"]) == 0
    assert open("world.obj").read().count("\no ") > 0
    capsys.readouterr()
    assert run(["compare", "--world", "world.json", "--scene", "ds/seq_0001/scene.json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["precision"] == rep["recall"] == 1.0


def test_merge_second_sequence_at_offset(work):
    run(["gen", "--config", "cfg.json", "--seed", "4", "--out", "ds"])
    run(["recon", "--layouts", "ds", "--out", "rec"])
    run(["stitch", "--frames", "rec/seq_0000", "--out", "a.json"])
    assert run(["stitch", "--frames", "rec/seq_0001", "--into", "a.json", "--offset", "40", "0", "0",
                "--out", "ab.json"]) == 0
    a, ab = WorldRecon.from_dict(io.load_json("a.json")), WorldRecon.from_dict(io.load_json("ab.json"))
    assert len(ab.boxes) > len(a.boxes)
    assert max(b.center[0] for b in ab.boxes) > 30


def test_seed_from_environment(work, monkeypatch):
    monkeypatch.setenv("FORGE_SEED", "4")
    run(["gen", "--config", "cfg.json", "--out", "env"])
    run(["gen", "--config", "cfg.json", "--seed", "4", "--out", "flag"])
    assert open("env/manifest.json").read() == open("flag/manifest.json").read()
    monkeypatch.setenv("FORGE_SEED", "x")
    assert run(["gen", "--config", "cfg.json", "--out", "bad"]) == 1


def test_errors_are_machine_readable(work, capsys):
    assert run(["eval", "--pred", "nowhere", "--truth", "nowhere"]) == 1
    line = capsys.readouterr().err.strip().splitlines()[-1]
    assert line.startswith("error: ")
    payload = json.loads(line[len("error: "):])
    assert payload["error"] == "ValidationError" and "manifest" in payload["message"]
    io.save_json("bad.json", {"generator": {"rack_count": [5, 1]}})
    assert run(["gen", "--config", "bad.json", "--out", "x"]) == 1
    io.save_json("bad.json", {"wat": 1})
    assert run(["gen", "--config", "bad.json", "--out", "x"]) == 1


def test_usage_errors_exit_2(work):
    assert run([]) == 2
    assert run(["nonsense"]) == 2
    assert run(["gen"]) == 2
    assert run(["--help"]) == 0


def test_selftest(work, capsys):
    assert run(["selftest"]) == 0
    assert "ok" in capsys.readouterr().out
    assert os.listdir(work) == sorted(os.listdir(work)) and set(os.listdir(work)) == {"cfg.json", "noise.json"}


def test_compare_needs_an_origin(work, capsys):
    io.save_json("w.json", WorldRecon().to_dict())
    run(["gen", "--config", "cfg.json", "--out", "ds"])
    assert run(["compare", "--world", "w.json", "--scene", "ds/seq_0000/scene.json"]) == 1
    assert run(["compare", "--world", "w.json", "--scene", "ds/seq_0000/scene.json", "--origin", "0", "1", "0"]) == 0
