import json

import pytest

from avcompress import load_container
from avcompress.cli import main


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    path = root / "s.ortc"
    assert main(["gen", str(path), "--frames", "32", "--audio-tokens", "800", "--dim", "16",
                 "--grid-h", "4", "--grid-w", "4"]) == 0
    return path


def test_compress_outputs(scenario, tmp_path, capsys):
    rep, out, ch = tmp_path / "r.json", tmp_path / "c.ortc", tmp_path / "ch.json"
    assert main(["compress", str(scenario), "--report", str(rep), "-o", str(out),
                 "--chunking", str(ch), "--traces", str(tmp_path / "t.json")]) == 0
    data = json.loads(rep.read_text())
    v, a, _ = load_container(out)
    assert v.num_frames + a.num_tokens == data["tokens_after"]
    assert json.loads(ch.read_text())["banded"] is True
    assert main(["report", str(rep)]) == 0
    assert "overall retained ratio" in capsys.readouterr().out


def test_exact_mode_and_params(scenario, tmp_path):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"beta": 0.25}))
    rep = tmp_path / "r.json"
    assert main(["compress", str(scenario), "--report", str(rep), "--exact", "--params", str(params)]) == 0
    data = json.loads(rep.read_text())
    assert data["banded"] is False


def test_viz(scenario, tmp_path):
    assert main(["viz", str(scenario), "-o", str(tmp_path / "m.svg"), "--format", "svg"]) == 0
    assert main(["viz", str(scenario), "-o", str(tmp_path / "m.csv")]) == 0


def test_oracle_check():
    assert main(["oracle-check", "--seed", "3"]) == 0


def test_sweep(scenario, tmp_path, capsys):
    grid = tmp_path / "g.json"
    grid.write_text(json.dumps({"beta": [0.3, 0.6]}))
    assert main(["sweep", str(scenario), "--grid", str(grid)]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 3
    assert main(["sweep", str(scenario), "--grid", str(grid), "--constant-budget", "0.01"]) == 2


@pytest.mark.parametrize("argv, code", [
    (["compress", "missing.ortc", "--report", "x.json"], 3),
    (["gen", "x.ortc", "--frames", "2"], 2),
])
def test_exit_codes(tmp_path, monkeypatch, argv, code):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code


def test_bad_params_file(scenario, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["compress", str(scenario), "--report", str(tmp_path / "r.json"), "--params", str(bad)]) == 2


def test_corrupt_input(tmp_path):
    f = tmp_path / "bad.ortc"
    f.write_bytes(b"garbage!")
    assert main(["compress", str(f), "--report", str(tmp_path / "r.json")]) == 3
