"""Exterior response to a uniform field outside the unit ball.

Run:  python3 demos/exterior_dipole.py
"""

import numpy as np

from meissner_lab.exterior_sphere import (
    SphericalHarmonicCoeffs,
    decay_slope,
    quadrature,
    scalar_flux,
    sigma_dtn_sampled,
    solve_exterior_scalar,
    tangential_transform,
)

L = 8
q = quadrature(L)
e = np.array([0.0, 0.0, 1.0])
tang = e - (q.points @ e)[:, None] * q.points
v = tangential_transform(tang, L)
print("nonzero GRAD_S coefficients:", {k: round(float(c), 12) for k, c in enumerate(v.GRAD_S) if abs(c) > 1e-12})
normal = sigma_dtn_sampled(tang, L)
c = q.points @ e
ratio = np.sum(q.weights * normal * c) / np.sum(q.weights * c * c)
print(f"normal trace = {ratio:.12f} cos(theta), misfit {np.max(np.abs(normal - ratio * c)):.1e}")

phi = solve_exterior_scalar(v, flux_mu=0.0)
print(f"decay slope {decay_slope(phi):+.6f}")
mono = solve_exterior_scalar(SphericalHarmonicCoeffs.zeros(L), flux_mu=2.0)
print(f"monopole flux at r=3: {scalar_flux(mono, 3.0):.12f}")
