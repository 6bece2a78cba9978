import math

import pytest
from hypothesis import given, strategies as st

from meissner_lab.errors import InvalidSpec, MissingColumn, NonPositiveLogData
from meissner_lab.plotting import emit_plot
from meissner_lab.tables import ResultsTable, config_hash, finite_or_text


def _table():
    t = ResultsTable(["kappa", "l2_f", "name"])
    for k in (16, 32, 64, 128):
        t.append((float(k), 3.0 * k ** -1.5, f"k{k}"))
    return t


def test_round_trip_with_provenance():
    t = _table().stamp({"kind": "X"}, 1.25)
    back = ResultsTable.from_csv(t.to_csv())
    assert back.columns == t.columns and back.rows == t.rows
    assert back.provenance["config_hash"] == config_hash({"kind": "X"})
    assert back.provenance["wall_time"] == "1.250s"
    assert not back.body().startswith("#")


@given(st.lists(st.tuples(st.floats(allow_nan=False, allow_infinity=False), st.integers(-10**9, 10**9)),
                max_size=20))
def test_float_cells_round_trip(rows):
    t = ResultsTable(["x", "n"], [tuple(r) for r in rows])
    assert ResultsTable.from_csv(t.to_csv()).rows == t.rows


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_table_validation():
    with pytest.raises(InvalidSpec):
        ResultsTable(["a", "a"])
    t = ResultsTable(["a", "b"])
    with pytest.raises(InvalidSpec):
        t.append((1,))
    with pytest.raises(MissingColumn):
        t.column("c")
    t.append(("x,y", 1))
    with pytest.raises(InvalidSpec):
        t.body()


def test_finite_or_text():
    assert finite_or_text(1.5) == 1.5
    assert finite_or_text(math.inf) == "inf"


def test_plot_is_deterministic():
    spec = {"x": "kappa", "y": "l2_f", "xlog": True, "ylog": True, "reference_slope": -1.5,
            "title": "rates", "marker_x": 50}
    a, b = emit_plot(_table(), spec), emit_plot(_table(), dict(spec))
    assert a == b
    assert a.startswith("<svg") and a.rstrip().endswith("</svg>")
    assert "slope -1.5" in a and "polyline" in a


def test_plot_errors():
    with pytest.raises(MissingColumn):
        emit_plot(_table(), {"x": "kappa", "y": "nope"})
    with pytest.raises(InvalidSpec):
        emit_plot(_table(), {"x": "kappa", "y": "l2_f", "colour": "red"})
    with pytest.raises(InvalidSpec):
        emit_plot(_table(), {"x": "kappa"})
    t = ResultsTable(["x", "y"], [(1.0, 0.0), (2.0, 1.0)])
    with pytest.raises(NonPositiveLogData):
        emit_plot(t, {"x": "x", "y": "y", "ylog": True})


def test_empty_table_gives_axes():
    svg = emit_plot(ResultsTable(["x", "y"]), {"x": "x", "y": "y"})
    assert "<rect" in svg and "polyline" not in svg
