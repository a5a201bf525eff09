"""How low can the summed MSE go with N observations?

No matter which N of the Q candidates are observed, the summed predictive
MSE cannot drop below the sum of the Q-N smallest eigenvalues of the
candidate covariance.  Greedy selection is compared with that floor on a
smooth kernel.

Run: python3 notebooks/05_learning_curve_bound.py
"""
import numpy as np

from phik import Grid2D, mse_over_candidates, mse_sum_lower_bound
from phik.kriging import correlation_matrix

grid = Grid2D(8, 8)
K = correlation_matrix(grid.points, [0.3, 0.3]) + 1e-8 * np.eye(grid.size)

chosen = []
print(" N   greedy sum   lower bound")
for N in range(0, 16):
    mse = mse_over_candidates(K, chosen)
    print(f"{N:>2}   {mse.sum():10.4f}   {mse_sum_lower_bound(K, N):10.4f}")
    mse[chosen] = -np.inf
    chosen.append(int(np.argmax(mse)))
