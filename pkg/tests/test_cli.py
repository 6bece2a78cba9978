import json

import pytest
from hypothesis import given, strategies as st

from meissner_lab.cli import RunConfig, main
from meissner_lab.errors import InvalidSpec
from meissner_lab.tables import ResultsTable


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _err(capsys):
    return json.loads(capsys.readouterr().err)


def test_oracle_run(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"kind": "ORACLE", "lambda": 0.1, "b": 0.5})
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["a0"] - 0.54120) <= 1e-5
    table = ResultsTable.read(out / "profile.csv")
    assert table.columns == ("x", "f", "a", "fp", "ap")
    assert "config_hash" in table.provenance and "code_version" in table.provenance
    assert json.loads((out / "config.json").read_text())["kind"] == "ORACLE"


def test_missing_field_reports_path(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"kind": "ORACLE", "b": 0.5})
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    err = _err(capsys)
    assert err["error"] == "InvalidSpec" and err["field"] == "lambda"


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"kind": "ORACLE", "lambda": 0.1, "b": 0.5, "lamda": 1})
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    assert _err(capsys)["field"] == "lamda"


def test_bad_json_rejected(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("{nope")
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 2


def test_solver_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"kind": "ORACLE", "lambda": 0.1, "b": 0.6})
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 3
    assert _err(capsys)["error"] == "AboveThreshold"


def test_env_output_root(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MEISSNER_LAB_OUT", str(tmp_path / "env"))
    cfg = _write(tmp_path / "c.json", {"kind": "ORACLE", "lambda": 0.1, "b": 0.2})
    assert main(["run", cfg]) == 0
    assert (tmp_path / "env" / "summary.json").exists()


def test_solve_run(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {
        "kind": "SOLVE", "lambda": 0.1, "kappa": 20,
        "geometry": {"dims": 1, "cells": 200, "length": 1.6},
        "data": {"shape": "SLAB", "amplitude": 0.3}})
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "summary.json").exists()


def test_plot_command(tmp_path, capsys):
    t = ResultsTable(["k", "e"], [(1.0, 1.0), (2.0, 0.5), (4.0, 0.25)])
    t.write(tmp_path / "t.csv")
    spec = _write(tmp_path / "s.json", {"x": "k", "y": "e", "xlog": True, "ylog": True})
    assert main(["plot", str(tmp_path / "t.csv"), spec, "--out", str(tmp_path / "a.svg")]) == 0
    assert main(["plot", str(tmp_path / "t.csv"), spec, "--out", str(tmp_path / "b.svg")]) == 0
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    bad = _write(tmp_path / "bad.json", {"x": "k", "y": "missing"})
    capsys.readouterr()
    assert main(["plot", str(tmp_path / "t.csv"), bad]) == 2
    assert _err(capsys)["error"] == "MissingColumn"


def test_acceptance_subcommand_subset(tmp_path, capsys):
    assert main(["acceptance", "--only", "1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "acceptance" / "acceptance.csv").exists()


@given(st.floats(0.01, 2.0), st.floats(0.0, 0.5), st.integers(0, 2**31), st.one_of(st.none(), st.floats(1.0, 500.0)))
def test_config_round_trip(lam, b, seed, kappa):
    d = {"kind": "ORACLE", "lambda": lam, "b": b, "seed": seed}
    if kappa is not None:
        d["kappa"] = kappa
    cfg = RunConfig.from_dict(d)
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("bad", [
    {"kind": "NOPE"},
    {"kind": "ORACLE", "lambda": -1, "b": 0.1},
    {"kind": "ORACLE", "lambda": 0.1, "b": 0.1, "seed": -3},
    {"kind": "SOLVE", "lambda": 0.1, "geometry": {"dims": 2, "cells": 4, "length": 1}, "data": {"shape": "SLAB", "amplitude": 1}},
    {"kind": "CONTINUATION", "lambda": 0.1, "system": "FULL", "kappa": "inf",
     "geometry": {"dims": 1, "cells": 10, "length": 1}, "data": {"shape": "SLAB", "amplitude": 1}},
])
def test_invalid_configs(bad):
    with pytest.raises(InvalidSpec):
        RunConfig.from_dict(bad)
