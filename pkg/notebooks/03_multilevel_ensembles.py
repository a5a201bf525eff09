"""Cheap coarse simulations improve a small fine ensemble.

A handful of fine (41x41) realizations gives a noisy covariance.  Adding
many coupled coarse (11x11) realizations through the multilevel estimator
recovers most of the accuracy of a large fine ensemble at a fraction of
the cost.

Run: python3 notebooks/03_multilevel_ensembles.py
"""
from phik import Grid2D, StochasticBranin
from phik.experiments import mlmc_compare_row

fine, coarse = Grid2D(41, 41), Grid2D(11, 11)
model = StochasticBranin()

print("m_fine  MC error   MLMC error  MC cost  MLMC cost")
for m_fine in (5, 10, 20, 50):
    row = mlmc_compare_row(model, fine, coarse, m_fine, 500, 15, seed=1)
    print(f"{m_fine:>6}  {row['mc_rel_error']:.5f}    {row['mlmc_rel_error']:.5f}     "
          f"{row['mc_cost']:>6.1f}  {row['mlmc_cost']:>8.2f}")

wins = sum(r["mlmc_rel_error"] <= r["mc_rel_error"]
           for r in (mlmc_compare_row(model, fine, coarse, 10, 500, 15, seed=s) for s in range(1, 11)))
print(f"\nwith 10 fine and 500 coarse samples MLMC wins on {wins}/10 seeds")
