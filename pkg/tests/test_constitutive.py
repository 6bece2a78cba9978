import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meissner_lab.constitutive import (
    INFINITY,
    S_MAX,
    T_MAX,
    V_MAX,
    F_and_derivative,
    F_of,
    GLParameters,
    constitutive_point,
    g_density_and_grad,
    invert_cubic,
    pointwise_margin,
    second_variation_form,
)
from meissner_lab.errors import InvalidSpec, OutOfDomain


@given(st.floats(0.0, T_MAX))
def test_inverse_solves_cubic(t):
    v = invert_cubic(t)
    assert 0.0 <= v <= V_MAX
    assert abs((1 - v * v) * v - t) <= 1e-14


def test_endpoint_values():
    assert F_of(0.0) == 1.0
    assert abs(F_of(S_MAX) - 1.5) <= 1e-12
    assert invert_cubic(T_MAX) == V_MAX


def test_series_branch_matches_inversion():
    s = np.array([1e-5, 5e-5, 9.99e-5, 1.01e-4])
    t = np.sqrt(s)
    assert np.allclose(F_of(s), invert_cubic(t) / t, rtol=0, atol=1e-14)


@given(st.floats(1e-6, S_MAX * 0.99))
def test_derivative_matches_difference_quotient(s):
    h = 1e-7 * max(s, 1e-3)
    _, d = F_and_derivative(s)
    fd = (F_of(s + h) - F_of(s - h)) / (2 * h) if s > h else (F_of(s + h) - F_of(s)) / h
    assert d[0] == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_F_is_increasing_and_bounded():
    s = np.linspace(0, S_MAX, 2001)
    F = F_of(s)
    assert np.all(np.diff(F) > 0)
    assert F[0] == 1.0 and F[-1] <= 1.5 + 1e-12


def test_derivative_blows_up_at_endpoint():
    _, d = F_and_derivative(S_MAX)
    assert not np.isfinite(d[0]) or d[0] > 1e6


@pytest.mark.parametrize("bad", [-1e-3, T_MAX * 1.001, math.nan])
def test_out_of_domain(bad):
    with pytest.raises(OutOfDomain):
        invert_cubic(bad)


def test_F_rejects_negative_argument():
    with pytest.raises(OutOfDomain):
        F_of(-1.0)


def test_constitutive_point():
    p = constitutive_point(0.0)
    assert p.v == 0.0 and p.f_value == 1.0
    p = constitutive_point(0.3)
    assert abs(p.f_value - F_of(0.09)) <= 1e-14


def test_parameters_validate():
    GLParameters(0.1)
    assert GLParameters(0.1).is_limit
    with pytest.raises(InvalidSpec):
        GLParameters(-1.0)
    with pytest.raises(InvalidSpec):
        GLParameters(0.1, 0.0)
    with pytest.raises(InvalidSpec):
        GLParameters(0.1, 10.0, -1.0)
    with pytest.raises(InvalidSpec):
        GLParameters(2.0, 1.5).require_estimate_regime()
    p = GLParameters(0.1, INFINITY, 1.0).with_mu(0.5).with_kappa(20.0)
    assert (p.mu, p.kappa) == (0.5, 20.0)


@given(st.floats(0.0, 1.0), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_density_gradient_matches_difference(f, A):
    A = np.array(A)
    G, Gf, GA = g_density_and_grad(f, A)
    h = 1e-6
    Gp, _, _ = g_density_and_grad(f + h, A)
    Gm, _, _ = g_density_and_grad(f - h, A)
    assert Gf == pytest.approx((Gp - Gm) / (2 * h), abs=1e-6)


@given(st.floats(0.8, 1.0), st.floats(0.0, 0.4),
       st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_second_variation_nonnegative_in_K(f, a, gb):
    A = np.array([a, 0.0, 0.0])
    if pointwise_margin(f, A) < 0:
        return
    g, B = gb[0], np.array(gb[1:])
    assert second_variation_form(f, A, g, B) >= -1e-12


def test_second_variation_negative_outside_K():
    # pure order-parameter perturbation with f^2 - |A|^2 < 1/3
    f, A = 0.5, np.array([0.0, 0.0, 0.0])
    assert second_variation_form(f, A, 1.0, np.zeros(3)) < 0
