import json

import numpy as np
import pytest

from qproxim.classical import FinitePointedMetricSpace, random_space
from qproxim.cli import main


@pytest.fixture()
def two_point(tmp_path):
    space = FinitePointedMetricSpace(np.array([[0.0, 3.0], [3.0, 0.0]]))
    path = tmp_path / "two_point.json"
    path.write_text(json.dumps(space.to_json()))
    return str(path)


def spaces_files(tmp_path, seeds, n=3, scale=1.0):
    out = []
    for s in seeds:
        X = random_space(n, np.random.default_rng(s), scale=scale)
        p = tmp_path / f"space_{s}.json"
        p.write_text(json.dumps(X.to_json()))
        out.append(str(p))
    return out


def test_mk_two_point(two_point, capsys, tmp_path):
    out = str(tmp_path / "mk.json")
    code = main(["mk", "--space", two_point, "--from", "0", "--to", "1",
                 "--out", out])
    assert code == 0
    printed = capsys.readouterr().out.strip()
    assert abs(float(printed) - 3.0) < 1e-6
    rep = json.loads(open(out).read())
    assert abs(rep["value"] - 3.0) < 1e-6


def test_bl_batch_csv(two_point, tmp_path):
    out = str(tmp_path / "bl.csv")
    code = main(["bl", "--space", two_point, "--pairs", "0:1,1:0",
                 "--out", out])
    assert code == 0
    lines = open(out).read().strip().splitlines()
    assert lines[0].startswith("pair,lower,upper")
    assert len(lines) == 3


def test_malformed_json_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    code = main(["mk", "--space", str(bad), "--from", "0", "--to", "1"])
    assert code == 1
    assert "malformed JSON" in capsys.readouterr().err


def test_missing_file_exits_one(capsys):
    code = main(["mk", "--space", "/nonexistent.json"])
    assert code == 1


def test_usage_error_exits_one():
    assert main(["mk"]) == 1
    assert main(["not-a-command"]) == 1


def test_gh_bridge_report(tmp_path, capsys):
    fx, fy = spaces_files(tmp_path, [1, 2])
    out = str(tmp_path / "gh.json")
    code = main(["gh-bridge", "--space-x", fx, "--space-y", fy, "--out", out])
    assert code == 0
    rep = json.loads(open(out).read())
    assert rep["tag"] == "exact"
    assert rep["bound_holds"]


def test_compose_command(tmp_path):
    fx, fy, fz = spaces_files(tmp_path, [4, 5, 6])
    out = str(tmp_path / "compose.json")
    code = main(["compose", "--space-x", fx, "--space-y", fy,
                 "--space-z", fz, "--eps", "0.1", "--out", out])
    assert code == 0
    rep = json.loads(open(out).read())
    assert rep["measured"] <= rep["bound"] + 1e-9


def test_point_index_out_of_range(two_point):
    assert main(["bl", "--space", two_point, "--from", "0", "--to", "7"]) == 1


def test_reports_deterministic_modulo_timestamp(two_point, tmp_path):
    outs = []
    for k in (1, 2):
        out = tmp_path / f"mk{k}.json"
        assert main(["mk", "--space", two_point, "--from", "0", "--to", "1",
                     "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        rep.pop("timestamp")
        outs.append(json.dumps(rep, sort_keys=True))
    assert outs[0] == outs[1]
