import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meissner_lab.discrete_calculus import (
    Placement,
    ScalarField,
    VectorField,
    apply_diff,
    build_grid,
    dual_div,
    field_from_csv,
    field_norm,
    field_to_csv,
    hodge_decompose,
    inner,
    integration_by_parts,
    operator_convergence,
)
from meissner_lab.errors import GridMismatch, InvalidSpec, PlacementMismatch

kinds = st.sampled_from(["WALL", "PERIODIC"])


@st.composite
def grids(draw):
    cells = tuple(draw(st.integers(2, 5)) for _ in range(3))
    bnd = [draw(kinds) for _ in range(3)]
    spacing = tuple(draw(st.sampled_from([0.5, 1.0, 1.5])) for _ in range(3))
    return build_grid(3, cells, spacing=spacing, boundary=bnd)


def random_field(g, placement, rng):
    if placement in (Placement.NODE, Placement.CELL):
        return ScalarField.from_flat(g, placement, rng.standard_normal(g.size(placement)))
    return VectorField.from_flat(g, placement, rng.standard_normal(g.offsets(placement)[-1]))


@given(grids(), st.integers(0, 2 ** 31))
def test_complex_identities(g, seed):
    rng = np.random.default_rng(seed)
    cg = apply_diff("CURL", apply_diff("GRAD", random_field(g, Placement.NODE, rng)))
    dc = apply_diff("DIV", apply_diff("CURL", random_field(g, Placement.EDGE, rng)))
    assert np.max(np.abs(cg.flat())) <= 1e-13
    assert np.max(np.abs(dc.flat()), initial=0.0) <= 1e-13


@given(grids(), st.integers(0, 2 ** 31))
def test_integration_by_parts_boundary_term(g, seed):
    rng = np.random.default_rng(seed)
    u = random_field(g, Placement.EDGE, rng)
    v = random_field(g, Placement.FACE, rng)
    diff, boundary = integration_by_parts(u, v)
    assert diff == pytest.approx(boundary, abs=1e-10 * (1 + abs(boundary)))


def test_integration_by_parts_without_walls_is_exact(rng):
    g = build_grid(3, (4, 5, 3), spacing=(1, 1, 1), boundary=("PERIODIC",) * 3)
    diff, boundary = integration_by_parts(random_field(g, Placement.EDGE, rng), random_field(g, Placement.FACE, rng))
    assert boundary == 0.0 and abs(diff) <= 1e-11


@pytest.mark.parametrize("placement", [Placement.EDGE, Placement.FACE])
def test_hodge_random(placement, rng):
    g = build_grid(3, (6, 5, 7), spacing=(1, 1, 1), boundary=("PERIODIC", "PERIODIC", "WALL"))
    A = random_field(g, placement, rng)
    p, B = hodge_decompose(A)
    nA2 = inner(A, A)
    if placement is Placement.EDGE:
        gp = apply_diff("GRAD", p)
        assert abs(inner(gp, B)) <= 1e-10 * nA2
        assert np.max(np.abs(A.flat() - gp.flat() - B.flat())) <= 1e-10 * np.sqrt(nA2)
        d = dual_div(B).flat()[g.interior_nodes]
        assert np.max(np.abs(d)) <= 1e-10 * np.sqrt(nA2)
        assert np.all(p.flat()[g.wall_node_mask] == 0)
    else:
        assert np.max(np.abs(apply_diff("DIV", B).flat())) <= 1e-10 * np.sqrt(nA2)


def test_hodge_pure_gradient_and_pure_curl(rng):
    g = build_grid(3, (5, 5, 6), spacing=(1, 1, 1), boundary=("PERIODIC", "PERIODIC", "WALL"))
    q = rng.standard_normal(g.size(Placement.NODE))
    q[g.wall_node_mask] = 0.0
    A = apply_diff("GRAD", ScalarField.from_flat(g, Placement.NODE, q))
    p, B = hodge_decompose(A)
    assert np.max(np.abs(B.flat())) <= 1e-10
    assert np.max(np.abs(p.flat() - q)) <= 1e-10
    # a curl of a field with vanishing tangential wall trace is divergence free
    u = rng.standard_normal(g.offsets(Placement.EDGE)[-1])
    u[g.boundary_edge_mask] = 0.0
    w = apply_diff("CURL", VectorField.from_flat(g, Placement.EDGE, u))
    p2, B2 = hodge_decompose(w)
    assert np.max(np.abs(p2.flat())) <= 1e-10


def test_operator_orders():
    for order in operator_convergence((8, 16, 32)).values():
        assert abs(order - 2.0) <= 0.2


def test_field_csv_round_trip(rng):
    g = build_grid(3, (3, 2, 4), spacing=(0.5, 1, 0.25), boundary=("PERIODIC", "WALL", "WALL"))
    for placement in (Placement.NODE, Placement.EDGE, Placement.FACE, Placement.CELL):
        f = random_field(g, placement, rng)
        text = field_to_csv(f, comments=["note"])
        assert text.splitlines()[1] == "placement,axis,i,j,k,value"
        back = field_from_csv(text, g)
        assert np.array_equal(back.flat(), f.flat())


def test_norms_of_constants():
    g = build_grid(3, (4, 4, 4), lengths=(1, 2, 3), boundary=("PERIODIC", "PERIODIC", "WALL"))
    one = ScalarField.from_flat(g, Placement.NODE, np.ones(g.size(Placement.NODE)))
    assert field_norm(one, "L2") == pytest.approx(np.sqrt(6.0))
    assert field_norm(one, "H1") == pytest.approx(np.sqrt(6.0))
    assert field_norm(one, "SUP") == 1.0
    with pytest.raises(ValueError):
        field_norm(one, "W3")


def test_1d_grid_shape():
    g = build_grid(1, 10, lengths=2.0)
    assert g.dims == 1 and g.extents == (1, 1, 10)
    assert g.shape(Placement.NODE) == (1, 1, 11)
    assert g.wall_axes == (2,)
    assert hash(g) == hash(build_grid(1, 10, lengths=2.0))


@pytest.mark.parametrize("kwargs", [
    {"dims": 2, "cells": (2, 2, 2), "lengths": (1, 1, 1)},
    {"dims": 3, "cells": (2, 2), "lengths": (1, 1, 1)},
    {"dims": 3, "cells": (2, 2, 2)},
    {"dims": 1, "cells": 0, "lengths": 1.0},
    {"dims": 1, "cells": None},
])
def test_invalid_grids(kwargs):
    with pytest.raises(InvalidSpec):
        build_grid(**kwargs)


def test_placement_errors(rng):
    g = build_grid(1, 8, lengths=1.0)
    f = random_field(g, Placement.NODE, rng)
    with pytest.raises(PlacementMismatch):
        apply_diff("CURL", f)
    with pytest.raises(PlacementMismatch):
        dual_div(random_field(g, Placement.FACE, rng))
    with pytest.raises(GridMismatch):
        inner(f, random_field(build_grid(1, 9, lengths=1.0), Placement.NODE, rng))
