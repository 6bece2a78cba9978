"""Distance between finite-kappa states and the limit state as kappa grows.

Run:  python3 demos/kappa_rates.py   (about half a minute)
"""

from meissner_lab.interior_solver import BoundaryData, slab_grid
from meissner_lab.superheating import corrector_rates, kappa_sweep

g = slab_grid(1.6, 8000)
data = BoundaryData.slab(g, 0.3)
kappas = [16.0, 32.0, 64.0, 128.0]
fit = kappa_sweep(0.1, data, kappas)
print(" kappa      L2 f+A      H1 f+A      sup")
for k, row, s in zip(kappas, fit.norms, fit.sup_differences):
    print(f"{k:6.0f} {row['l2_f'] + row['l2_A']:11.3e} {row['h1_f'] + row['h1_A']:11.3e} {s:10.3e}")
print("slopes: " + ", ".join(f"{k} {fit.fitted_slopes[k]:+.3f}" for k in ("l2", "h1", "h2")))
corr = corrector_rates(0.1, data, kappas)
print(f"boundary corrector slope {corr['slope']:+.3f}, wall derivative {max(corr['wall_derivative']):.1e}")
