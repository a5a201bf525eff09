"""Greedy active learning: add the point with the largest predictive MSE.

Starting from eight Halton points, both PhIK and Kriging place twelve more
observations one at a time.  PhIK keeps its ensemble moments fixed while
Kriging refits its lengthscales at every step.

Run: python3 notebooks/02_active_learning.py [seed]
"""
import sys

from phik.experiments import make_config, run_active

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
cfg = make_config("active", {"seed": seed, "N_max": 20, "methods": ["phik", "kriging"]})
curves = run_active(cfg, write=False)["curves"]

print(f"seed {seed}")
print(" N   phik     kriging  next point (phik)")
for p, k in zip(curves["phik"], curves["kriging"]):
    where = "" if p.chosen is None else f"({p.chosen[0]:.3f}, {p.chosen[1]:.3f})"
    print(f"{p.n_obs:>2}  {p.rel_error:.4f}   {k.rel_error:.4f}   {where}")
