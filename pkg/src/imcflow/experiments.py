"""Synthetic benchmarks: phase transitions, convergence curves, init quality.

Trials are independent. Trial ``k`` of grid cell ``i`` draws its problem, mask and
solver seed from ``child_seed(seed, <experiment>, i, k)``, so any subset of
trials can be rerun in any order with identical per-trial results. Trials run in
a process pool sized by ``IMC_THREADS`` (default: all cores) and are aggregated
by index.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .core import IMCError, coherence_mu0, procrustes_distance, split_observations
from .datagen import ProblemSpec, generate_problem, sample_bernoulli, sample_fixed_count
from .rng import child_seed
from .solver import (
    SolverConfig,
    SolverError,
    constraint_pair,
    estimate_sigma1,
    project_pair,
    run_phase2,
    solve,
    spectral_init,
)

PRESETS = {
    "smoke": dict(dims=(200, 200, 20, 20), r=4, ratios=(2, 6, 10), trials=20),
    "full": dict(dims=(500, 500, 50, 50), r=10, ratios=(2, 3, 4, 5, 6, 7, 8, 10, 12), trials=20),
}


def _dims(dims):
    dims = tuple(int(x) for x in dims)
    if len(dims) == 2:
        d, n = dims
        return d, d, n, n
    if len(dims) != 4:
        raise IMCError("dims must be (d, n) or (d1, d2, n1, n2)")
    return dims


def n_workers():
    env = os.environ.get("IMC_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise IMCError(f"IMC_THREADS must be an integer, got {env!r}") from None
        return max(1, value)
    return os.cpu_count() or 1


def _run_tasks(fn, tasks, workers=None):
    workers = n_workers() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers, initializer=_single_thread_blas) as pool:
        return list(pool.map(fn, tasks))


def _single_thread_blas():
    from threadpoolctl import threadpool_limits

    threadpool_limits(1)


def wilson_interval(successes, trials, confidence=0.95):
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class PhaseCell:
    m_over_nr: float
    m: int
    trials: int
    successes: int
    mean_relative_error: float
    failures: int

    @property
    def success_rate(self):
        return self.successes / self.trials

    @property
    def wilson(self):
        return wilson_interval(self.successes, self.trials)


@dataclass(frozen=True)
class PhaseGridResult:
    dims: tuple
    rank: int
    threshold: float
    seed: int
    cells: tuple

    def rates(self):
        return [c.success_rate for c in self.cells]

    def crossing(self, level=0.5):
        """First ratio where the linearly interpolated success curve reaches ``level``."""
        xs = [c.m_over_nr for c in self.cells]
        ys = self.rates()
        if ys[0] >= level:
            return xs[0]
        for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
            if y0 < level <= y1:
                return x0 + (level - y0) * (x1 - x0) / (y1 - y0)
        return None

    def rows(self):
        out = []
        for c in self.cells:
            lo, hi = c.wilson
            out.append(dict(m_over_nr=c.m_over_nr, m=c.m, trials=c.trials, successes=c.successes,
                            success_rate=c.success_rate, wilson_low=lo, wilson_high=hi,
                            mean_relative_error=c.mean_relative_error, solver_failures=c.failures))
        return out


def _phase_trial(task):
    dims, r, m, pseed, config = task
    d1, d2, n1, n2 = dims
    features, truth = generate_problem(ProblemSpec(d1, d2, n1, n2, r, pseed))
    obs = sample_fixed_count(features, truth, m, pseed)
    try:
        report = solve(obs, features, replace(config, seed=pseed), truth)
    except SolverError:
        return None
    return report.final_rel_error


def phase_transition(dims, r, ratios, trials, threshold=1e-6, seed=0, config=None, workers=None):
    """Empirical success probability versus ``m / (n r)`` with fixed-count sampling.

    ``n = max(n1, n2)``. A trial succeeds when the final relative error is below
    ``threshold``; a trial whose solver raises counts as a failure. The default
    solver config stops Phase 3 once the error is 1000x below the threshold.
    """
    dims = _dims(dims)
    if trials < 1:
        raise IMCError("trials must be >= 1")
    if any(x <= 0 for x in ratios):
        raise IMCError("ratios must be positive")
    n = max(dims[2], dims[3])
    if config is None:
        config = SolverConfig(rank=r, stop_tol=threshold * 1e-3)
    config = replace(config, rank=r, success_threshold=threshold)
    cells_m = []
    for ratio in ratios:
        m = int(round(ratio * n * r))
        if m > dims[0] * dims[1]:
            raise IMCError(f"ratio {ratio} asks for m={m} > d1*d2={dims[0] * dims[1]}")
        cells_m.append(m)
    tasks = [(dims, r, m, child_seed(seed, "phase_transition", i, k), config)
             for i, m in enumerate(cells_m) for k in range(trials)]
    errors = _run_tasks(_phase_trial, tasks, workers)
    cells = []
    for i, (ratio, m) in enumerate(zip(ratios, cells_m)):
        errs = errors[i * trials:(i + 1) * trials]
        finite = [e for e in errs if e is not None]
        successes = sum(1 for e in finite if e < threshold)
        mean = float(np.mean(finite)) if finite else float("nan")
        cells.append(PhaseCell(float(ratio), m, trials, successes, mean, len(errs) - len(finite)))
    return PhaseGridResult(dims, r, threshold, seed, tuple(cells))


@dataclass(frozen=True)
class ConvergenceCurve:
    passes: np.ndarray
    rel_error: np.ndarray
    report: object = None

    def rows(self):
        return [dict(effective_data_passes=float(p), relative_error=float(e))
                for p, e in zip(self.passes, self.rel_error)]


def convergence_curve(dims, r, p, seed=0, config=None):
    """One Bernoulli-sampled solve, reported as relative error versus data passes."""
    dims = _dims(dims)
    if not 0 < p <= 1:
        raise IMCError(f"p must lie in (0, 1], got {p}")
    features, truth = generate_problem(ProblemSpec(*dims, r, seed))
    obs = sample_bernoulli(features, truth, p, seed)
    config = replace(config or SolverConfig(rank=r), rank=r, seed=seed)
    report = solve(obs, features, config, truth)
    passes, errs = [], []
    for rec in report.trace:
        if passes and rec.data_passes <= passes[-1]:
            passes[-1], errs[-1] = rec.data_passes, rec.rel_error
            continue
        passes.append(rec.data_passes)
        errs.append(rec.rel_error)
    return ConvergenceCurve(np.array(passes), np.array(errs), report)


def _init_trial(task):
    dims, r, size, tseed = task
    features, truth = generate_problem(ProblemSpec(*dims, r, tseed))
    obs = sample_fixed_count(features, truth, size, tseed)
    z = spectral_init(obs, features, r, tseed)
    return procrustes_distance(z, truth.factors)


def init_quality_sweep(dims, r, omega0_sizes, trials, seed=0, workers=None):
    """Mean Procrustes distance of the spectral initialization per ``|Omega_0|``.

    Trial ``k`` uses the same problem instance for every size, so the sweep
    isolates the effect of the sample count.

    :return: list of dicts with keys ``omega0_size``, ``mean_distance``, ``std_distance``
    """
    dims = _dims(dims)
    if trials < 1:
        raise IMCError("trials must be >= 1")
    for size in omega0_sizes:
        if not 1 <= size <= dims[0] * dims[1]:
            raise IMCError(f"|Omega_0| = {size} outside [1, d1*d2]")
    seeds = [child_seed(seed, "init_sweep", k) for k in range(trials)]
    tasks = [(dims, r, int(size), s) for size in omega0_sizes for s in seeds]
    dist = np.array(_run_tasks(_init_trial, tasks, workers)).reshape(len(omega0_sizes), trials)
    return [dict(omega0_size=int(size), mean_distance=float(row.mean()), std_distance=float(row.std()))
            for size, row in zip(omega0_sizes, dist)]


def phase2_contraction_trial(dims, r, m, s_count, seed, step_const_eta=0.25):
    """Procrustes distance before and after Phase 2 on one fresh instance."""
    dims = _dims(dims)
    features, truth = generate_problem(ProblemSpec(*dims, r, seed))
    obs = sample_fixed_count(features, truth, m, seed)
    split = split_observations(obs, s_count, seed)
    z_init = spectral_init(split.omega0, features, r, seed)
    eta = step_const_eta / (r * estimate_sigma1(z_init))
    constraints = constraint_pair(z_init, features, coherence_mu0(features, truth), r)
    delta = 1e-8
    z0 = project_pair(z_init, constraints, delta, 20000)
    config = SolverConfig(rank=r, phase2_iters=s_count, seed=seed)
    z_s, _ = run_phase2(z0, split, features, config, constraints=constraints, eta=eta, delta=delta)
    return procrustes_distance(z0, truth.factors), procrustes_distance(z_s, truth.factors)
