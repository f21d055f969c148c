"""Three-phase gradient solver for inductive matrix completion.

Phase 1 builds a spectral initialization from half of the observations, Phase 2
runs projected gradient steps on fresh disjoint subsets, and Phase 3 runs plain
gradient descent on the full observation set.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sp_linalg

from . import objective
from .core import (
    FactorPair,
    IMCError,
    coherence_mu0,
    procrustes_distance,
    relative_error,
    split_observations,
)
from .projection import RowNormConstraint, project_qcqp
from .rng import make_rng

DENSE_SVD_LIMIT = 10**6
DIVERGENCE_WINDOW = 10
DIVERGENCE_FACTOR = 10.0


class SolverError(IMCError):
    """A solver phase failed; ``phase`` is 1, 2 or 3 (0 for setup)."""

    def __init__(self, message, phase=0):
        super().__init__(f"phase {phase}: {message}" if phase else message)
        self.phase = phase


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``phase2_iters=None`` selects ``max(1, ceil(r log n))``; ``eta``/``tau`` of
    ``None`` select ``step_const_eta / (r sigma1_hat)`` and
    ``step_const_tau / sigma1_hat``. ``mu0=None`` uses the ground truth's
    coherence when available, otherwise the coherence of the spectral
    initialization. ``delta=None`` uses ``1e-8 sqrt(sigma1_hat)``, or
    ``1 / (r kappa_hat n^2)`` when ``theory_delta`` is set.
    """

    rank: int
    phase2_iters: Optional[int] = None
    phase3_iters: int = 3000
    eta: Optional[float] = None
    tau: Optional[float] = None
    step_const_eta: float = 0.25
    step_const_tau: float = 0.25
    mu0: Optional[float] = None
    delta: Optional[float] = None
    theory_delta: bool = False
    lam: float = 0.0
    seed: int = 0
    stop_tol: float = 1e-14
    max_data_passes: Optional[float] = None
    init_pass_charge: float = 0.5
    success_threshold: float = 1e-6
    max_sweeps: int = 20000
    record_time: bool = False

    def __post_init__(self):
        checks = [
            (self.rank >= 1, "rank must be >= 1"),
            (self.phase2_iters is None or self.phase2_iters >= 0, "phase2_iters must be >= 0"),
            (self.phase3_iters >= 0, "phase3_iters must be >= 0"),
            (self.eta is None or self.eta > 0, "eta must be positive"),
            (self.tau is None or self.tau > 0, "tau must be positive"),
            (self.step_const_eta > 0 and self.step_const_tau > 0, "step constants must be positive"),
            (self.mu0 is None or self.mu0 > 0, "mu0 must be positive"),
            (self.delta is None or self.delta > 0, "delta must be positive"),
            (self.lam >= 0, "lam must be non-negative"),
            (self.seed >= 0, "seed must be non-negative"),
            (self.stop_tol >= 0, "stop_tol must be non-negative"),
            (self.max_data_passes is None or self.max_data_passes > 0, "max_data_passes must be positive"),
            (self.init_pass_charge >= 0, "init_pass_charge must be non-negative"),
            (self.max_sweeps >= 1, "max_sweeps must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise IMCError(msg)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TraceRecord:
    phase: int
    iteration: int
    data_passes: float
    loss: float
    rel_error: float
    procrustes_dist: float
    wall_ms: float


@dataclass
class Trace:
    records: list = field(default_factory=list)

    def append(self, rec):
        if self.records and rec.data_passes < self.records[-1].data_passes:
            raise IMCError("data-pass counter must be non-decreasing")
        self.records.append(rec)

    def extend(self, other):
        for rec in other.records:
            self.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def phase(self, k):
        return Trace([r for r in self.records if r.phase == k])

    @property
    def data_passes(self):
        return self.records[-1].data_passes if self.records else 0.0


@dataclass(frozen=True)
class RecoveryReport:
    factors: FactorPair
    trace: Trace
    config: SolverConfig
    sigma1_hat: float
    eta: float
    tau: float
    mu0: float
    delta: float
    phase2_iters: int
    final_loss: float
    final_rel_error: float
    final_procrustes: float
    success: Optional[bool]

    @property
    def m_hat(self):
        return self.factors.product()

    def summary(self):
        return {
            "rank": self.config.rank,
            "phase2_iters": self.phase2_iters,
            "phase3_iters": sum(1 for r in self.trace if r.phase == 3),
            "data_passes": self.trace.data_passes,
            "sigma1_hat": self.sigma1_hat,
            "eta": self.eta,
            "tau": self.tau,
            "mu0": self.mu0,
            "delta": self.delta,
            "final_loss": self.final_loss,
            "final_rel_error": self.final_rel_error,
            "final_procrustes": self.final_procrustes,
            "success": "" if self.success is None else int(self.success),
        }


class _Recorder:
    """Builds trace records; relative error and distance are NaN without truth."""

    def __init__(self, truth, record_time, t0=None):
        self.truth = truth
        self.record_time = record_time
        self.t0 = time.perf_counter() if t0 is None else t0

    def __call__(self, phase, it, passes, loss, z):
        if self.truth is None:
            rel, dist = math.nan, math.nan
        else:
            rel = relative_error(z, self.truth)
            dist = procrustes_distance(z, self.truth.factors)
        wall = (time.perf_counter() - self.t0) * 1e3 if self.record_time else 0.0
        return TraceRecord(phase, it, passes, loss, rel, dist, wall)


def _truncated_svd(mat, r, seed):
    d1, d2 = mat.shape
    if d1 * d2 <= DENSE_SVD_LIMIT:
        u, s, vt = np.linalg.svd(mat.toarray(), full_matrices=False)
        return u[:, :r], s[:r], vt[:r].T
    v0 = make_rng(seed, "svd").standard_normal(min(d1, d2))
    u, s, vt = sp_linalg.svds(mat, k=r, v0=v0, tol=0, solver="arpack")
    order = np.argsort(s)[::-1]
    return u[:, order], s[order], vt[order].T


def spectral_init(omega0, features, r, seed=0):
    """Rank-r SVD of ``P_{Omega0}(L) / p0`` mapped through the features.

    :return: FactorPair ``(X_L^T U0 S0^{1/2}, X_R^T V0 S0^{1/2})``
    """
    if len(omega0) == 0:
        raise IMCError("omega0 is empty")
    if r > min(features.n1, features.n2):
        raise IMCError(f"rank {r} exceeds min(n1, n2) = {min(features.n1, features.n2)}")
    if r > min(omega0.d1, omega0.d2) - 1 and omega0.d1 * omega0.d2 > DENSE_SVD_LIMIT:
        raise IMCError("rank too large for the iterative SVD")
    mat = omega0.to_sparse() / omega0.p
    u0, s0, v0 = _truncated_svd(sparse.csr_matrix(mat), r, seed)
    if not s0[0] > 0:
        raise IMCError("observed matrix is zero; leading singular value is not positive")
    achieved = int(np.sum(s0 > 1e-12 * s0[0]))
    if achieved < r:
        raise IMCError(f"observed matrix has numerical rank {achieved} < requested rank {r}")
    root = np.sqrt(s0)
    return FactorPair(features.x_left.T @ (u0 * root), features.x_right.T @ (v0 * root))


def estimate_sigma1(z_init):
    """Spectral norm of ``U V^T`` computed through the r x r QR cores."""
    if not (np.any(z_init.u) and np.any(z_init.v)):
        raise IMCError("cannot estimate sigma1 from a zero initialization")
    _, ru = np.linalg.qr(z_init.u)
    _, rv = np.linalg.qr(z_init.v)
    return float(np.linalg.norm(ru @ rv.T, 2))


def _init_coherence(z, features):
    """Coherence mu0 of the singular subspaces of ``U V^T``."""
    qu, ru = np.linalg.qr(z.u)
    qv, rv = np.linalg.qr(z.v)
    a, _, bt = np.linalg.svd(ru @ rv.T)
    r = z.rank
    left = features.x_left @ (qu @ a)
    right = features.x_right @ (qv @ bt.T)
    return max(
        features.d1 / r * float(np.max(np.sum(left * left, axis=1))),
        features.d2 / r * float(np.max(np.sum(right * right, axis=1))),
    )


def _loss_grad(z, features, obs, lam):
    cache = objective.build_cache(z, features, obs)
    if lam:
        return (
            objective.loss_sparse_reg(z, features, obs, lam, cache),
            objective.gradient_sparse_reg(z, features, obs, lam, cache),
        )
    return objective.loss(z, features, obs, cache), objective.gradient(z, features, obs, cache)


def _loss(z, features, obs, lam):
    if lam:
        return objective.loss_sparse_reg(z, features, obs, lam)
    return objective.loss(z, features, obs)


def _step(z, g, step):
    return FactorPair(z.u - step * g.u, z.v - step * g.v)


def constraint_pair(z_init, features, mu0, r):
    return (
        RowNormConstraint.from_init(features.x_left, z_init, mu0, r, "left"),
        RowNormConstraint.from_init(features.x_right, z_init, mu0, r, "right"),
    )


def project_pair(z, constraints, delta, max_sweeps):
    u, _ = project_qcqp(z.u, constraints[0], delta, max_sweeps)
    v, _ = project_qcqp(z.v, constraints[1], delta, max_sweeps)
    return FactorPair(u, v)


def run_phase2(z0, split, features, config, *, constraints, eta, delta, full_obs=None,
               truth=None, start_passes=0.0, recorder=None):
    """Projected gradient descent with one fresh subset per step.

    ``z0`` is projected first. ``constraints`` are the two row-norm sets fixed from
    ``Z_init``. Trace losses are diagnostic values of the full-set loss on
    ``full_obs`` (defaults to the union of the split) and are not charged as data
    passes; each step charges ``|Omega_s| / |Omega|``.
    """
    s_count = config.phase2_iters if config.phase2_iters is not None else len(split.subsets)
    if s_count > len(split.subsets):
        raise SolverError(f"{s_count} iterations requested but only {len(split.subsets)} subsets", 2)
    total = len(full_obs) if full_obs is not None else len(split.omega0) + sum(len(s) for s in split.subsets)
    recorder = recorder or _Recorder(truth, config.record_time)
    trace = Trace()
    try:
        z = project_pair(z0, constraints, delta, config.max_sweeps)
        used = 0
        for s in range(s_count):
            subset = split.subsets[s]
            _, g = _loss_grad(z, features, subset, config.lam)
            z = project_pair(_step(z, g, eta), constraints, delta, config.max_sweeps)
            used += len(subset)
            passes = start_passes + used / total
            diag = _loss(z, features, full_obs, config.lam) if full_obs is not None else math.nan
            trace.append(recorder(2, s + 1, passes, diag, z))
    except IMCError as exc:
        if isinstance(exc, SolverError):
            raise
        raise SolverError(str(exc), 2) from exc
    return z, trace


def run_phase3(z0, obs, features, config, *, tau, sigma1_hat=1.0, truth=None,
               start_passes=0.0, recorder=None):
    """Plain gradient descent on the full observation set.

    Stops early when the relative error (with ``truth``) or the gradient norm
    relative to ``sigma1_hat`` drops below ``config.stop_tol``, or when the
    data-pass budget would be exceeded. Raises SolverError if the loss grows by
    more than 10x over 10 iterations.
    """
    recorder = recorder or _Recorder(truth, config.record_time)
    trace = Trace()
    z = z0
    passes = start_passes
    budget = config.max_data_passes
    losses = []
    cur_loss, g = _loss_grad(z, features, obs, config.lam)
    for t in range(config.phase3_iters):
        if truth is not None and relative_error(z, truth) < config.stop_tol:
            break
        with np.errstate(over="ignore"):
            gnorm = math.sqrt(float(np.sum(g.u * g.u) + np.sum(g.v * g.v)))
        if gnorm <= config.stop_tol * sigma1_hat:
            break
        if budget is not None and passes + 1 > budget + 1e-12:
            break
        # overflow is reported below as a SolverError, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            z = _step(z, g, tau)
            cur_loss, g = _loss_grad(z, features, obs, config.lam)
        passes += 1.0
        if not math.isfinite(cur_loss):
            raise SolverError(f"loss became non-finite at iteration {t + 1}; step size tau={tau:.3e} too large", 3)
        losses.append(cur_loss)
        if len(losses) > DIVERGENCE_WINDOW and cur_loss > DIVERGENCE_FACTOR * losses[-1 - DIVERGENCE_WINDOW]:
            raise SolverError(
                f"loss grew more than {DIVERGENCE_FACTOR:g}x over {DIVERGENCE_WINDOW} iterations "
                f"(iteration {t + 1}); reduce tau={tau:.3e} or step_const_tau",
                3,
            )
        trace.append(recorder(3, t + 1, passes, cur_loss, z))
    return z, trace


def default_phase2_iters(r, n):
    return max(1, math.ceil(r * math.log(n)))


def solve(obs, features, config, truth=None):
    """Run all three phases and return a RecoveryReport.

    With ``phase2_iters == 0`` no split is made: Phase 1 uses the full set and
    Phase 2 is skipped.
    """
    r = config.rank
    if r > min(features.n1, features.n2):
        raise SolverError(f"rank {r} exceeds min(n1, n2) = {min(features.n1, features.n2)}")
    if (obs.d1, obs.d2) != (features.d1, features.d2):
        raise SolverError("observation dimensions do not match features")
    if len(obs) == 0:
        raise SolverError("no observations")
    n = max(features.n1, features.n2)
    s_count = config.phase2_iters if config.phase2_iters is not None else default_phase2_iters(r, n)
    recorder = _Recorder(truth, config.record_time)

    if s_count > 0:
        try:
            split = split_observations(obs, s_count, config.seed)
        except IMCError as exc:
            raise SolverError(str(exc), 1) from exc
        omega0 = split.omega0
    else:
        split, omega0 = None, obs

    try:
        z_init = spectral_init(omega0, features, r, config.seed)
        sigma1_hat = estimate_sigma1(z_init)
    except IMCError as exc:
        raise SolverError(str(exc), 1) from exc

    eta = config.eta if config.eta is not None else config.step_const_eta / (r * sigma1_hat)
    tau = config.tau if config.tau is not None else config.step_const_tau / sigma1_hat
    if config.mu0 is not None:
        mu0 = config.mu0
    elif truth is not None:
        mu0 = coherence_mu0(features, truth)
    else:
        mu0 = _init_coherence(z_init, features)
    if config.delta is not None:
        delta = config.delta
    elif config.theory_delta:
        _, s0, _ = np.linalg.svd(z_init.product(), full_matrices=False)
        delta = 1.0 / (r * (s0[0] / s0[r - 1]) * n * n)
    else:
        delta = 1e-8 * math.sqrt(sigma1_hat)

    trace = Trace()
    passes = config.init_pass_charge
    trace.append(recorder(1, 0, passes, _loss(z_init, features, obs, config.lam), z_init))

    z = z_init
    if s_count > 0:
        constraints = constraint_pair(z_init, features, mu0, r)
        cfg2 = replace(config, phase2_iters=s_count)
        z, t2 = run_phase2(z, split, features, cfg2, constraints=constraints, eta=eta, delta=delta,
                           full_obs=obs, truth=truth, start_passes=passes, recorder=recorder)
        trace.extend(t2)
        passes = trace.data_passes

    try:
        z, t3 = run_phase3(z, obs, features, config, tau=tau, sigma1_hat=sigma1_hat, truth=truth,
                           start_passes=passes, recorder=recorder)
    except SolverError:
        raise
    except IMCError as exc:
        raise SolverError(str(exc), 3) from exc
    trace.extend(t3)

    last = trace.records[-1]
    final_loss = last.loss if last.phase == 3 else _loss(z, features, obs, config.lam)
    if truth is not None:
        rel = relative_error(z, truth)
        dist = procrustes_distance(z, truth.factors)
        success = bool(rel < config.success_threshold)
    else:
        rel, dist, success = math.nan, math.nan, None
    return RecoveryReport(z, trace, config, sigma1_hat, eta, tau, mu0, delta, s_count,
                          final_loss, rel, dist, success)
