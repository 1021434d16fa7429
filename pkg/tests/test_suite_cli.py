import json

from qproxim.cli import main


def test_suite_selection_runs_and_reports(tmp_path, capsys):
    out = str(tmp_path / "suite.json")
    code = main(["suite", "--only", "2,10", "--out", out])
    assert code == 0
    printed = capsys.readouterr().out
    assert "PASS" in printed and "metric recovery" in printed
    rep = json.loads(open(out).read())
    assert len(rep["results"]) == 2
    csv_lines = open(str(tmp_path / "suite.csv")).read().splitlines()
    assert csv_lines[0] == "criterion,name,passed,seconds"
    assert len(csv_lines) == 3


def test_suite_verdicts_seed_independent(capsys):
    codes = [main(["suite", "--only", "10", "--seed", str(s)]) for s in (1, 77)]
    assert codes == [0, 0]


def test_empty_suite_selection_exits_one(capsys):
    assert main(["suite", "--only", ""]) == 1
    assert "empty suite selection" in capsys.readouterr().err


def test_bad_suite_selection_exits_one():
    assert main(["suite", "--only", "11"]) == 1
