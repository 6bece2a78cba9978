import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meissner_lab.errors import AboveThreshold, InvalidSpec
from meissner_lab.oned_oracle import (
    H_CRITICAL,
    H_SUPERHEATING,
    SlabProblem,
    critical_field_identity,
    solve_full_ode,
    solve_limit_ode,
    superheating_closed_form,
    wall_amplitude,
    wall_field,
)


def test_closed_form_value():
    assert abs(superheating_closed_form() - 0.5270462767) <= 1e-9
    assert abs(superheating_closed_form() - H_SUPERHEATING) <= 1e-15


def test_brute_force_maximum():
    a = np.linspace(0.0, 1.0 / math.sqrt(3.0), 1_000_001)
    assert abs(np.max(wall_field(a)) - superheating_closed_form()) <= 1e-9


def test_thermodynamic_identity():
    assert abs(critical_field_identity() - H_CRITICAL) <= 1e-12


@given(st.floats(0.0, 0.527))
def test_wall_amplitude_inverts(b):
    a0 = wall_amplitude(b)
    assert 0.0 <= a0 <= 1.0 / math.sqrt(3.0) + 1e-15
    assert abs(float(wall_field(a0)) - b) <= 1e-13


def test_above_threshold_rejected():
    with pytest.raises(AboveThreshold):
        wall_amplitude(0.53)


@given(st.floats(0.01, 0.52), st.floats(0.02, 0.5))
def test_limit_profile_properties(b, lam):
    sol = solve_limit_ode(SlabProblem(lam, b, n=400))
    assert sol.first_integral_residual <= 1e-12
    assert abs(lam * abs(sol.ap[0]) - b) <= 1e-12
    assert np.all(np.diff(sol.a) <= 0) and np.all(np.diff(sol.f) >= 0)
    assert sol.margin_wall >= 1.0 / 3.0 - 1e-12


def test_domain_length_is_immaterial():
    a = solve_limit_ode(SlabProblem(0.1, 0.4))
    b = solve_limit_ode(SlabProblem(0.1, 0.4, L=3.0))
    assert abs(a.a0 - b.a0) <= 1e-9
    assert np.max(np.abs(a.a - b.sample(a.x)[1])) <= 1e-9


def test_full_ode_first_integral_and_limit():
    p = SlabProblem(0.1, 0.4, kappa=50.0, n=6000)
    sol = solve_full_ode(p, require_K=True)
    assert sol.first_integral_residual <= 1e-4
    assert sol.residual <= 1e-10
    lim = solve_limit_ode(SlabProblem(0.1, 0.4, n=6000))
    assert np.max(np.abs(sol.a - lim.a)) <= 0.05
    # wall Neumann condition for f
    assert abs(sol.fp[0]) <= 1e-8


def test_full_ode_approaches_limit_with_kappa():
    lim = solve_limit_ode(SlabProblem(0.1, 0.3, n=8000))
    errs = []
    for k in (20.0, 40.0, 80.0):
        sol = solve_full_ode(SlabProblem(0.1, 0.3, kappa=k, n=8000))
        errs.append(np.sqrt(np.mean((sol.f - lim.f) ** 2)))
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("kw", [dict(lambda_=0.0, b=0.1), dict(lambda_=0.1, b=-0.1),
                                dict(lambda_=0.1, b=0.1, kappa=0.0), dict(lambda_=0.1, b=0.1, L=1.0),
                                dict(lambda_=0.1, b=0.1, n=50)])
def test_problem_validation(kw):
    with pytest.raises(InvalidSpec):
        SlabProblem(**kw)


def test_solver_kinds_checked():
    with pytest.raises(InvalidSpec):
        solve_limit_ode(SlabProblem(0.1, 0.1, kappa=10.0))
    with pytest.raises(InvalidSpec):
        solve_full_ode(SlabProblem(0.1, 0.1))
