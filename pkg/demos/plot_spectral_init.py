"""
How good is the spectral initialization?
========================================

The Phase-1 estimate is the rank-r SVD of the zero-filled, rescaled sample
matrix. Its Procrustes distance to the truth should shrink roughly like one
over the square root of the sample count.
"""

import numpy as np

from imcflow.experiments import init_quality_sweep

d, n, r = 200, 20, 3
sizes = [2 * n * r, 8 * n * r, 32 * n * r]
rows = init_quality_sweep((d, n), r, sizes, trials=10, seed=0)

prev = None
for row in rows:
    note = "" if prev is None else f"  (x{row['mean_distance'] / prev:.2f})"
    print(f"|Omega_0| = {row['omega0_size']:5d}  mean D = {row['mean_distance']:.3f}"
          f" +- {row['std_distance']:.3f}{note}")
    prev = row["mean_distance"]

# quadrupling the sample should roughly halve the distance
print("1/sqrt(4) =", 1 / np.sqrt(4))
