"""Slab profiles of the limit and finite-kappa problems at a few applied fields.

Run:  python3 demos/oracle_profiles.py
"""

from meissner_lab.oned_oracle import H_SUPERHEATING, SlabProblem, solve_full_ode, solve_limit_ode

lam = 0.1
print(f"superheating field sqrt(5/18) = {H_SUPERHEATING:.10f}")
print(f"{'b':>6} {'a0 limit':>10} {'f(0) limit':>11} {'f(0) kappa=50':>14} {'wall margin':>12}")
for b in (0.1, 0.3, 0.5, 0.52):
    lim = solve_limit_ode(SlabProblem(lam, b))
    full = solve_full_ode(SlabProblem(lam, b, kappa=50.0, n=6000))
    print(f"{b:6.2f} {lim.a0:10.6f} {lim.f[0]:11.6f} {full.f[0]:14.6f} {full.margin_wall:12.6f}")
