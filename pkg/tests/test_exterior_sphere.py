import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import sph_harm_y

from meissner_lab.errors import Incompatible, InvalidSpec, NonGradientData, NonzeroFlux, NonzeroMean, SamplingMismatch
from meissner_lab.exterior_sphere import (
    SphericalHarmonicCoeffs,
    comparability_residual,
    curl_identity_defect,
    decay_slope,
    divergence_defect,
    harmonic_values,
    lm_index,
    lm_pairs,
    quadrature,
    scalar_flux,
    scalar_transform,
    sigma_dtn,
    sigma_dtn_sampled,
    solve_exterior_curl_source,
    solve_exterior_gradient_normal,
    solve_exterior_scalar,
    tangential_transform,
    uniform_field_normal_trace,
)

LMAX = 6


def _random_coeffs(rng, basis="GRAD_S", l_max=LMAX):
    arr = rng.standard_normal((l_max + 1) ** 2)
    arr[0] = 0.0
    return SphericalHarmonicCoeffs.zeros(l_max).replace(**{basis: arr})


def test_harmonics_orthonormal():
    q = quadrature(LMAX)
    n = (LMAX + 1) ** 2
    Y = np.array([harmonic_values(l, m, q.points)[0] for l, m in lm_pairs(LMAX)])
    gram = (Y * q.weights) @ Y.T
    assert np.max(np.abs(gram - np.eye(n))) <= 1e-12


def test_harmonics_match_scipy():
    q = quadrature(LMAX)
    theta = np.arccos(np.clip(q.points[:, 2], -1, 1))
    phi = np.arctan2(q.points[:, 1], q.points[:, 0])
    for l, m in lm_pairs(LMAX):
        c = sph_harm_y(l, abs(m), theta, phi)
        if m > 0:
            ref = math.sqrt(2) * (-1) ** m * c.real
        elif m < 0:
            ref = math.sqrt(2) * (-1) ** m * c.imag
        else:
            ref = c.real
        ours = harmonic_values(l, m, q.points)[0]
        assert np.max(np.abs(ours - ref)) <= 1e-12


def test_transforms_round_trip(rng):
    q = quadrature(LMAX)
    c = rng.standard_normal((LMAX + 1) ** 2)
    v = SphericalHarmonicCoeffs.zeros(LMAX).replace(Y=c)
    back = scalar_transform(v.scalar_on_sphere(q.points), LMAX)
    assert np.max(np.abs(back.Y - c)) <= 1e-12
    t = _random_coeffs(rng).replace(CROSS=_random_coeffs(rng, "CROSS").CROSS)
    back = tangential_transform(t.tangential_on_sphere(q.points), LMAX)
    assert np.max(np.abs(back.GRAD_S - t.GRAD_S)) <= 1e-12
    assert np.max(np.abs(back.CROSS - t.CROSS)) <= 1e-12


def test_scalar_solution_matches_trace_and_flux(rng):
    v = _random_coeffs(rng)
    sol = solve_exterior_scalar(v, 0.7)
    q = quadrature(LMAX)
    g = sol.gradient(q.points)
    tang = g - np.sum(g * q.points, axis=-1)[:, None] * q.points
    assert np.max(np.abs(tang - v.tangential_on_sphere(q.points))) <= 1e-11
    for r in (1.0, 2.0, 5.0):
        assert abs(scalar_flux(sol, r) - 0.7) <= 1e-11


def test_monopole_decay_slope():
    sol = solve_exterior_scalar(SphericalHarmonicCoeffs.zeros(LMAX), 1.0)
    assert abs(decay_slope(sol) + 1.0) <= 1e-9
    v = SphericalHarmonicCoeffs.single("GRAD_S", 2, 1, 1.0, LMAX)
    assert abs(decay_slope(solve_exterior_scalar(v, 0.0)) + 3.0) <= 1e-9


def test_scalar_rejects_rotational_data():
    with pytest.raises(NonGradientData):
        solve_exterior_scalar(SphericalHarmonicCoeffs.single("CROSS", 1, 0, 1.0, LMAX), 0.0)


def test_sigma_mode_multiplier():
    for l in range(1, LMAX + 1):
        s = sigma_dtn(SphericalHarmonicCoeffs.single("GRAD_S", l, 0, 1.0, LMAX))
        assert abs(s.get("Y", l, 0) + (l + 1)) <= 1e-12


def test_sigma_sampled_of_uniform_field():
    # tangential part of e_z is grad_S cos(theta); the decaying potential is cos(theta) / r^2
    q = quadrature(LMAX)
    e = np.array([0.0, 0.0, 1.0])
    tang = e - (q.points @ e)[:, None] * q.points
    normal = sigma_dtn_sampled(tang, LMAX)
    assert np.max(np.abs(normal + 2 * (q.points @ e))) <= 1e-12


def test_gradient_normal_problem(rng):
    g = SphericalHarmonicCoeffs.zeros(LMAX).replace(Y=_random_coeffs(rng).GRAD_S)
    u = solve_exterior_gradient_normal(g)
    q = quadrature(LMAX)
    un = np.sum(u(q.points) * q.points, axis=-1)
    assert np.max(np.abs(un - g.scalar_on_sphere(q.points))) <= 1e-11
    assert divergence_defect(u) <= 1e-11
    with pytest.raises(NonzeroMean):
        solve_exterior_gradient_normal(SphericalHarmonicCoeffs.single("Y", 0, 0, 1.0, LMAX))


def test_curl_source_identities(rng):
    phi0 = solve_exterior_scalar(_random_coeffs(rng), 0.0)
    d = np.zeros_like(phi0.coeffs.Y)
    l = np.array([l for l, _ in lm_pairs(LMAX)], dtype=float)
    d[1:] = phi0.coeffs.Y[1:] / l[1:]
    data = _random_coeffs(rng).replace(CROSS=d)
    u = solve_exterior_curl_source(phi0, data)
    assert curl_identity_defect(u, phi0) <= 1e-10
    assert divergence_defect(u) <= 1e-10
    trace = u.trace_coeffs()
    assert np.max(np.abs(trace.GRAD_S - data.GRAD_S)) <= 1e-11
    assert np.max(np.abs(trace.CROSS - data.CROSS)) <= 1e-11


def test_curl_source_errors(rng):
    phi0 = solve_exterior_scalar(_random_coeffs(rng), 0.0)
    with pytest.raises(Incompatible):
        solve_exterior_curl_source(phi0, _random_coeffs(rng))
    with pytest.raises(NonzeroFlux):
        solve_exterior_curl_source(solve_exterior_scalar(_random_coeffs(rng), 1.0), _random_coeffs(rng))


def test_coefficient_validation():
    with pytest.raises(InvalidSpec):
        SphericalHarmonicCoeffs(2, np.zeros(9), np.ones(9), np.zeros(9))
    with pytest.raises(InvalidSpec):
        SphericalHarmonicCoeffs(2, np.zeros(8), np.zeros(9), np.zeros(9))
    with pytest.raises(InvalidSpec):
        SphericalHarmonicCoeffs.single("Z", 1, 0)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=15, max_size=15))
def test_csv_round_trip(vals):
    arr = np.array([0.0] + vals)
    c = SphericalHarmonicCoeffs(3, arr, arr * (np.arange(16) > 0), np.zeros(16))
    back = SphericalHarmonicCoeffs.from_csv(c.to_csv(["note"]), l_max=3)
    for b in ("Y", "GRAD_S", "CROSS"):
        assert np.array_equal(getattr(back, b), getattr(c, b))


def test_comparability():
    vals, w, pts = uniform_field_normal_trace(l_max=4)
    assert comparability_residual(vals, vals, w, pts, pts) == 0.0
    assert abs(comparability_residual(vals, 0 * vals, w) - math.sqrt(4 * math.pi / 3)) <= 1e-12
    with pytest.raises(SamplingMismatch):
        comparability_residual(vals, vals[:-1])
    with pytest.raises(SamplingMismatch):
        comparability_residual(vals, vals, w, pts, pts[::-1])


def test_index_layout():
    pairs = lm_pairs(4)
    assert [lm_index(l, m) for l, m in pairs] == list(range(25))
