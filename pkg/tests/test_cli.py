import csv
import json
from fractions import Fraction
from importlib import resources

import jsonschema
import pytest

from andnet.cli import (
    EXIT_BUDGET,
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    RUNNERS,
    execute,
    main,
    parse_grid,
    resolve,
    validate,
)
from andnet.dof_analysis import SCHEMES, dof_formula

SCHEMA = json.loads(resources.files("andnet").joinpath("report_schema.json").read_text())

SMALL = {
    "diagonalize": ["--k", "2", "--n", "1", "--trials", "3", "--seed", "42"],
    "simulate-tv": ["--k", "1", "--n", "1", "--trials", "5", "--p-grid", "1e2,1e4"],
    "simulate-const": ["--k", "2", "--n", "1", "--epsilon", "0.2", "--trials", "50",
                       "--p-grid", "1e3,1e4"],
    "dof-sweep": ["--k", "1", "--n", "1", "--trials", "5", "--p-grid", "1e2:1e8:5"],
    "baselines": ["--k-max", "5"],
    "mimo-region": ["--m-s", "2,2", "--m-d", "2,1", "--m-v", "3", "--d", "2,1"],
    "multihop": ["--k", "4", "--layers", "5,3"],
}


def run(tmp_path, *argv, name="out"):
    path = tmp_path / name
    code = main([*argv, "--out", str(path)])
    return code, (path.read_text() if path.exists() else None)


def stable(doc):
    doc = json.loads(doc)
    doc["provenance"].pop("timestamp")
    doc["provenance"].pop("wall_clock_s")
    doc["provenance"]["config"].pop("out")
    return doc


def test_grid_syntax():
    assert parse_grid("1e2,1e4") == [100.0, 10000.0]
    assert parse_grid("1:1e4:5") == pytest.approx([1, 10, 100, 1000, 1e4])


def test_baselines_csv(tmp_path):
    code, text = run(tmp_path, "baselines", "--k-max", "10", "--format", "csv")
    assert code == EXIT_OK
    rows = list(csv.reader(text.splitlines()))
    assert len(rows) == 11
    header, body = rows[0], rows[1:]
    for row in body:
        K = int(row[0])
        for s, cell in zip(SCHEMES, row[1:]):
            assert Fraction(cell) == dof_formula(s, K)
    assert header[0].startswith("K")


@pytest.mark.parametrize("mode", sorted(SMALL))
def test_every_mode_matches_schema(tmp_path, mode):
    code, text = run(tmp_path, mode, *SMALL[mode])
    assert code == EXIT_OK
    doc = json.loads(text)
    jsonschema.validate(doc, SCHEMA)
    assert doc["mode"] == mode and doc["records"]
    # aggregates are a pure function of records and config
    cfg = resolve({**doc["provenance"]["config"]})
    assert json.loads(json.dumps(RUNNERS[mode][1](doc["records"], cfg))) == doc["aggregates"]


def test_diagonalize_reports_offdiag(tmp_path):
    code, text = run(tmp_path, "diagonalize", *SMALL["diagonalize"])
    doc = json.loads(text)
    kept = [r for r in doc["records"] if not r["erased"]]
    assert kept and all(r["max_offdiag"] < 1e-8 for r in kept)


@pytest.mark.parametrize("mode", ["diagonalize", "simulate-const"])
def test_byte_identical_reruns(tmp_path, mode):
    _, a = run(tmp_path, mode, *SMALL[mode], name="a")
    _, b = run(tmp_path, mode, *SMALL[mode], name="b")
    assert stable(a) == stable(b)
    _, c = run(tmp_path, mode, *SMALL[mode], "--format", "csv", name="c")
    _, d = run(tmp_path, mode, *SMALL[mode], "--format", "csv", name="d")
    assert c == d


def test_jobs_do_not_change_records(tmp_path):
    argv = ["simulate-tv", *SMALL["simulate-tv"]]
    _, one = run(tmp_path, *argv, "--jobs", "1", name="one")
    _, two = run(tmp_path, *argv, "--jobs", "2", name="two")
    assert json.loads(one)["records"] == json.loads(two)["records"]


def test_validation_examples():
    diags = validate({"mode": "diagonalize", "k": 5, "n": 2})
    fields = {d.field for d in diags}
    assert {"k"} <= fields and len(diags) >= 2
    assert any(d.field == "epsilon" for d in validate({"mode": "simulate-tv", "epsilon": 1.5}))
    assert any(d.field == "colour" for d in validate({"mode": "baselines", "colour": 1}))
    assert validate({"mode": "baselines"}) == []
    assert any(d.field == "p_grid" for d in validate({"mode": "dof-sweep", "p_grid": "1,10,100"}))


def test_exit_codes(tmp_path, capsys):
    assert main(["diagonalize", "--k", "5"]) == EXIT_VALIDATION
    assert "error:" in capsys.readouterr().err
    assert main(["simulate-tv", "--epsilon", "1.5"]) == EXIT_VALIDATION
    assert main(["simulate-const", "--k", "3", "--n", "2", "--p-grid", "1e12"]) == EXIT_BUDGET
    assert main(["baselines", "--config", str(tmp_path / "missing.json")]) == EXIT_IO
    assert main(["baselines", "--out", str(tmp_path / "no" / "such" / "dir.json")]) == EXIT_IO
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["--config", str(bad)]) == EXIT_VALIDATION
    assert main(["baselines", "--mode", "multihop"]) == EXIT_VALIDATION


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "multihop", "k": 4, "layers": "5,3"}))
    code, text = run(tmp_path, "--config", str(cfg))
    assert code == EXIT_OK and json.loads(text)["aggregates"]["dof"] == 3
    code, text = run(tmp_path, "--config", str(cfg), "--k", "2", name="override")
    assert json.loads(text)["aggregates"]["dof"] == 2


def test_execute_returns_provenance():
    doc = execute({"mode": "mimo-region", "m_s": "2,2", "m_d": "2,1", "m_v": "3", "d": "2,1.5"})
    assert doc["aggregates"]["contained"] is False
    assert len(doc["aggregates"]["violations"]) == 2
    assert doc["provenance"]["config"]["mode"] == "mimo-region"
    assert doc["provenance"]["version"]
