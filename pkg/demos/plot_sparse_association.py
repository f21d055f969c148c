"""
Penalizing unobserved entries
=============================

For association data (observed pairs are positives, everything else is
unknown) a penalty on the predicted values off the sample pulls unobserved
predictions toward zero. ``lam`` sets its weight.
"""

import numpy as np

from imcflow import ProblemSpec, SolverConfig, generate_problem, sample_bernoulli, solve

features, truth = generate_problem(ProblemSpec.symmetric(d=150, n=15, r=3, seed=2))
obs = sample_bernoulli(features, truth, p=0.2, seed=2)
mask = np.zeros((obs.d1, obs.d2), dtype=bool)
mask[obs.rows, obs.cols] = True

for lam in (0.0, 0.05, 0.5):
    report = solve(obs, features, SolverConfig(rank=3, lam=lam, phase3_iters=400, seed=2), truth)
    pred = features.lift(report.m_hat)
    off = np.linalg.norm(pred[~mask]) / np.sqrt((~mask).sum())
    print(f"lam = {lam:4.2f}  rel_err {report.final_rel_error:.2e}  rms off-sample prediction {off:.4f}")
