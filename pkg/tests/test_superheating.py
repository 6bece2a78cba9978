import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meissner_lab.discrete_calculus import Placement, ScalarField
from meissner_lab.errors import InvalidSpec, UnboundedThreshold, ZeroDatum
from meissner_lab.interior_solver import BoundaryData, slab_grid
from meissner_lab.oned_oracle import H_SUPERHEATING
from meissner_lab.superheating import (
    ContinuationSchedule,
    boundary_corrector,
    continue_mu,
    loglog_slope,
    mu_upper_bound,
    smoothstep_cutoff,
    wall_normal_derivative,
)

SCHED = ContinuationSchedule(mu_step=0.05, mu_tol=1e-3, margin_tol=1e-3)


@pytest.fixture(scope="module")
def limit_run():
    g = slab_grid(0.6, 600)
    return continue_mu("LIMIT", 0.03, math.inf, BoundaryData.slab(g, 1.0), SCHED)


def test_limit_threshold_near_slab_value(limit_run):
    assert abs(limit_run.mu_star - H_SUPERHEATING) <= 0.01
    lo, hi = limit_run.bracket
    assert hi - lo <= 1e-3 and lo < hi


def test_margin_decreases_along_branch(limit_run):
    rows = sorted(limit_run.rows, key=lambda r: r.mu)
    margins = [r.margin for r in rows]
    assert all(a >= b for a, b in zip(margins, margins[1:]))
    assert all(m > SCHED.margin_tol for m in margins)


def test_upper_bound_dominates(limit_run):
    assert limit_run.upper_bound >= limit_run.mu_star


def test_full_threshold_below_limit(limit_run):
    g = slab_grid(0.6, 600)
    res = continue_mu("FULL", 0.03, 200.0, BoundaryData.slab(g, 1.0), SCHED)
    assert res.mu_star <= limit_run.mu_star + 2e-3
    assert abs(res.mu_star - limit_run.mu_star) <= 0.03


def test_zero_data_is_unbounded():
    g = slab_grid(0.6, 60)
    with pytest.raises(UnboundedThreshold):
        continue_mu("LIMIT", 0.1, math.inf, BoundaryData.slab(g, 0.0), ContinuationSchedule(max_steps=3))


def test_upper_bound_needs_data():
    with pytest.raises(ZeroDatum):
        mu_upper_bound(0.1, BoundaryData.slab(slab_grid(0.6, 60), 0.0))


@pytest.mark.parametrize("kw", [dict(mu_start=-1), dict(mu_step=0), dict(margin_tol=0.5),
                                dict(mu_tol=0.5), dict(max_steps=0)])
def test_schedule_validation(kw):
    with pytest.raises(InvalidSpec):
        ContinuationSchedule(**kw)


def test_system_name_validated():
    g = slab_grid(0.6, 60)
    with pytest.raises(InvalidSpec):
        continue_mu("BOTH", 0.1, 10.0, BoundaryData.slab(g, 1.0))
    with pytest.raises(InvalidSpec):
        continue_mu("FULL", 0.1, math.inf, BoundaryData.slab(g, 1.0))


@given(st.floats(-1.0, 5.0))
def test_cutoff_range(s):
    c = float(smoothstep_cutoff(s))
    assert 0.0 <= c <= 1.0
    if s <= 1:
        assert c == 1.0
    if s >= 2:
        assert c == 0.0


def test_cutoff_is_monotone_and_smooth():
    s = np.linspace(0.0, 3.0, 3001)
    c = smoothstep_cutoff(s)
    assert np.all(np.diff(c) <= 1e-15)
    d2 = np.diff(c, 2) / (s[1] - s[0]) ** 2
    assert np.max(np.abs(d2)) < 6.0  # bounded second derivative


def test_corrector_kills_wall_derivative():
    g = slab_grid(1.0, 2000)
    z = g.line(Placement.NODE)
    f = ScalarField.from_flat(g, Placement.NODE, 0.9 + 0.05 * np.cos(3 * z) + 0.02 * z)
    assert wall_normal_derivative(f) > 0.01
    for kappa in (16.0, 64.0):
        fh = boundary_corrector(f, kappa)
        assert wall_normal_derivative(fh) <= 1e-10
        # untouched away from the walls
        mid = (z > 2 / kappa) & (z < 1 - 2 / kappa)
        assert np.array_equal(fh.line()[mid], f.line()[mid])


def test_corrector_rejects_small_kappa():
    g = slab_grid(1.0, 20)
    with pytest.raises(InvalidSpec):
        boundary_corrector(ScalarField.from_flat(g, Placement.NODE, np.ones(21)), 0.5)


@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_loglog_slope_exact_for_power_laws(p, c):
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert abs(loglog_slope(x, c * x ** p) - p) <= 1e-9
