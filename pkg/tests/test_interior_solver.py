import math

import numpy as np
import pytest

from meissner_lab.constitutive import INFINITY, GLParameters
from meissner_lab.discrete_calculus import Placement, ScalarField, VectorField, build_grid, field_norm
from meissner_lab.errors import MeissnerLabError, NonPositiveCoefficient, NotConverged
from meissner_lab.interior_solver import (
    BoundaryData,
    MeissnerStateFH,
    divergence_defect,
    equivalence_residuals,
    full_residual_norm,
    interior_dtn,
    limit_density,
    limit_state,
    linear_maxwell_residual,
    load_state,
    recover_A,
    save_state,
    slab_grid,
    solve_full_FH,
    solve_limit_H,
    solve_linear_maxwell,
)
from meissner_lab.oned_oracle import SlabProblem, solve_full_ode, solve_limit_ode


def _ones(g):
    return ScalarField.from_flat(g, Placement.NODE, np.ones(g.size(Placement.NODE)))


def _slab_line(g, fn):
    """EDGE field with x-component fn(z) on a 1D grid."""
    return VectorField.from_function(g, Placement.EDGE, lambda x, y, z: (fn(z), 0 * z, 0 * z))


def test_linear_maxwell_manufactured_order():
    errs = []
    ns = (16, 32, 64)
    for n in ns:
        g = slab_grid(1.0, n)
        rhs = _slab_line(g, lambda z: (math.pi ** 2 + 1) * np.sin(math.pi * z))
        u = solve_linear_maxwell(_ones(g), rhs)
        exact = _slab_line(g, lambda z: np.sin(math.pi * z))
        errs.append(field_norm(VectorField.from_flat(g, Placement.EDGE, u.flat() - exact.flat()), "L2"))
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert abs(slope + 2.0) <= 0.2


def test_linear_maxwell_residual_and_divergence(rng):
    g = build_grid(3, (6, 6, 8), spacing=(0.25, 0.25, 0.25), boundary=("PERIODIC", "PERIODIC", "WALL"))
    a = ScalarField.from_flat(g, Placement.NODE, rng.uniform(0.5, 2.0, g.size(Placement.NODE)))
    # the curl of a field with zero wall trace has zero divergence
    w = rng.standard_normal(g.offsets(Placement.FACE)[-1])
    rhs_vec = (g.curl_op.T @ (g.face_mass * w)) / g.edge_mass
    rhs_vec[g.boundary_edge_mask] = 0.0
    rhs = VectorField.from_flat(g, Placement.EDGE, rhs_vec)
    u = solve_linear_maxwell(a, rhs)
    assert linear_maxwell_residual(a, u, rhs) <= 1e-10
    assert np.all(u.flat()[g.boundary_edge_mask] == 0)
    assert divergence_defect(u) <= 1e-9


def test_linear_maxwell_rejects_nonpositive():
    g = slab_grid(1.0, 8)
    a = ScalarField.from_flat(g, Placement.NODE, np.zeros(g.size(Placement.NODE)))
    with pytest.raises(NonPositiveCoefficient):
        solve_linear_maxwell(a, _slab_line(g, np.sin))


def test_zero_data_gives_trivial_states():
    g = slab_grid(1.0, 40)
    data = BoundaryData.slab(g, 0.0)
    H, rep = solve_limit_H(GLParameters(0.1), data)
    assert np.all(H.flat() == 0) and rep.converged
    st, _ = solve_full_FH(GLParameters(0.1, 10.0), data)
    assert np.allclose(st.f.flat(), 1.0, atol=1e-12)


def test_limit_matches_closed_form():
    lam, b = 0.1, 0.3
    g = slab_grid(1.6, 3200)
    data = BoundaryData.slab(g, b)
    p = GLParameters(lam)
    H, rep = solve_limit_H(p, data)
    assert rep.converged
    assert all(x > y for x, y in zip(rep.residual_history, rep.residual_history[1:]))
    sol = solve_limit_ode(SlabProblem(lam, b))
    z = g.line(Placement.NODE)
    d = np.minimum(z, 1.6 - z)
    f_ref, _ = sol.sample(d)
    f = limit_density(limit_state(H, p, data).A).line()
    assert np.max(np.abs(f - f_ref)) <= 1e-3
    assert f.max() <= 1 + 1e-9 and f.min() >= math.sqrt(2 / 3) - 1e-9


def test_full_matches_oracle_and_equivalence():
    lam, b, kap = 0.1, 0.3, 20.0
    g = slab_grid(1.6, 3200)
    data = BoundaryData.slab(g, b)
    st, rep = solve_full_FH(GLParameters(lam, kap), data)
    assert full_residual_norm(st) <= 1e-9
    sol = solve_full_ode(SlabProblem(lam, b, kap, n=8000))
    z = g.line(Placement.NODE)
    f_ref, _ = sol.sample(np.minimum(z, 1.6 - z))
    assert np.max(np.abs(st.f.line() - f_ref)) <= 1e-3
    fa = recover_A(st)
    eq = equivalence_residuals(fa, st.H)
    assert eq["curl_defect"] <= 1e-8 and eq["a_equation"] <= 1e-7 and eq["normal_trace"] == 0.0
    assert st.f.flat().max() <= 1 + 1e-9


@pytest.fixture(scope="module")
def box_state():
    g = build_grid(3, (8, 6, 16), lengths=(0.8, 0.6, 1.6), boundary=("PERIODIC", "PERIODIC", "WALL"))
    data = BoundaryData.from_potential(
        g, lambda x, y, z: 0.05 * np.sin(2 * np.pi * x / 0.8) * np.cos(2 * np.pi * y / 0.6), uniform=(0.2, 0.0, 0.0))
    st, rep = solve_full_FH(GLParameters(0.2, 10.0), data)
    return st, rep


def test_box_divergence_preserved(box_state):
    st, rep = box_state
    assert max(rep.divergence_history) <= 1e-10
    assert divergence_defect(st.H) <= 1e-10


def test_box_equivalence_and_trace(box_state):
    st, _ = box_state
    eq = equivalence_residuals(recover_A(st), st.H)
    assert eq["curl_defect"] <= 1e-8 and eq["a_equation"] <= 1e-7
    assert eq["normal_trace"] <= 1e-10
    tr = interior_dtn(st, "PI")
    scale = np.sum(tr.weights * np.abs(tr.values)) + 1e-30
    assert abs(tr.integral) <= 1e-9 * scale + 1e-14


def test_box_maximum_principle(box_state):
    st, _ = box_state
    f = st.f.flat()
    assert f.min() > 0 and f.max() <= 1 + 1e-9


def test_recover_requires_convergence():
    g = slab_grid(1.0, 10)
    data = BoundaryData.slab(g, 0.1)
    st = MeissnerStateFH(_ones(g), data.extension, GLParameters(0.1, 10.0), data, converged=False)
    with pytest.raises(NotConverged):
        recover_A(st)


def test_limit_fails_above_threshold():
    g = slab_grid(1.0, 400)
    with pytest.raises(MeissnerLabError):
        solve_limit_H(GLParameters(0.05, INFINITY, 1.0), BoundaryData.slab(g, 0.6))


def test_save_and_load(tmp_path):
    g = slab_grid(1.6, 200)
    data = BoundaryData.slab(g, 0.3)
    st, rep = solve_full_FH(GLParameters(0.1, 50.0), data)
    save_state(st, tmp_path, "s", rep)
    back = load_state(tmp_path, "s")
    assert np.array_equal(back.f.flat(), st.f.flat())
    assert np.array_equal(back.H.flat(), st.H.flat())
    assert back.params == st.params
    assert np.array_equal(back.data.extension.flat(), data.extension.flat())
