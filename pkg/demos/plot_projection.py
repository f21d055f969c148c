"""
Projecting onto the incoherence constraint
==========================================

Phase 2 keeps every row of ``X U`` inside a ball. The projection is a convex
QCQP; here it is solved by Dykstra's method and compared with an
interior-point solution from cvxpy, when cvxpy is installed.
"""

import numpy as np

from imcflow import RowNormConstraint, feasibility_violation, orthonormalize, project_qcqp

rng = np.random.default_rng(0)
x = orthonormalize(rng.standard_normal((30, 6)))
u_hat = rng.standard_normal((6, 2))
norms = np.linalg.norm(x @ u_hat, axis=1)
b = 0.5 * norms.max()
print(f"{np.sum(norms > b)} of {len(norms)} rows violate the bound b = {b:.3f}")

con = RowNormConstraint(x, b)
u, gap = project_qcqp(u_hat, con, delta=1e-10)
print(f"violation after projection: {feasibility_violation(u, con):.1e}, gap estimate {gap:.1e}")
print(f"moved by {np.linalg.norm(u - u_hat):.6f}")

try:
    import cvxpy as cp
except ImportError:
    cp = None

if cp is not None:
    var = cp.Variable(u_hat.shape)
    cp.Problem(cp.Minimize(cp.sum_squares(var - u_hat)), [cp.norm(x @ var, 2, axis=1) <= b]).solve()
    print(f"distance to the cvxpy solution: {np.linalg.norm(u - var.value):.1e}")
