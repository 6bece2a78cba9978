"""Continuation in the field scale mu up to the loss of convexity.

Run:  python3 demos/threshold_continuation.py
"""

import math

from meissner_lab.interior_solver import BoundaryData, slab_grid
from meissner_lab.oned_oracle import H_SUPERHEATING
from meissner_lab.superheating import ContinuationSchedule, continue_mu

g = slab_grid(0.6, 1200)
data = BoundaryData.slab(g, 1.0)
sched = ContinuationSchedule(mu_step=0.02, mu_tol=1e-4)

lim = continue_mu("LIMIT", 0.02, math.inf, data, sched)
full = continue_mu("FULL", 0.02, 200.0, data, sched)
print(f"LIMIT mu* = {lim.mu_star:.5f}  (slab value {H_SUPERHEATING:.5f})")
print(f"FULL  mu* = {full.mu_star:.5f}  kappa = 200")
print(f"upper bound = {lim.upper_bound:.3f}")
print("\n   mu    margin   lam|curl H|")
for r in lim.rows[::5]:
    print(f"{r.mu:6.3f} {r.margin:9.5f} {r.curl_bound:11.5f}")
