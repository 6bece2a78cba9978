"""Meissner states of Ginzburg-Landau superconductors in the large-kappa regime.

Modules
-------
constitutive       cubic inversion F, parameters, energy and convexity margin
discrete_calculus  staggered grids, exact discrete grad/curl/div, norms, Hodge splitting
interior_solver    Newton solvers for the (f, H) system and its kappa -> infinity limit
superheating       continuation in the field scale, kappa and lambda sweeps
exterior_sphere    exterior Laplace problems outside a ball in solid harmonics
oned_oracle        slab reduction used as an independent reference
cli                ``meissner-lab`` command line driver
"""

__version__ = "0.1.0"
