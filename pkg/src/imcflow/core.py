"""Shared domain types and small geometric utilities for inductive matrix completion.

Everything here is a value object or a pure function: feature matrices, the
low-rank ground truth, observed index sets, factor iterates, plus the Procrustes
alignment and sample splitting used by the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# Numerical tolerances. Callers may pass their own value to the relevant function.
ORTHONORMAL_TOL = 1e-10
FACTOR_TOL = 1e-10
BALANCE_TOL = 1e-8
RANK_TOL = 1e-12


class IMCError(ValueError):
    """Raised when inputs violate a documented precondition."""


def _as_matrix(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise IMCError(f"{name} must be a 2-d array, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class FeaturePair:
    """Side-information matrices with orthonormal columns.

    :param x_left: (d1, n1) row features
    :param x_right: (d2, n2) column features
    """

    x_left: np.ndarray
    x_right: np.ndarray
    tol: float = field(default=ORTHONORMAL_TOL, repr=False, compare=False)

    def __post_init__(self):
        xl = _as_matrix(self.x_left, "x_left")
        xr = _as_matrix(self.x_right, "x_right")
        object.__setattr__(self, "x_left", xl)
        object.__setattr__(self, "x_right", xr)
        for name, x in (("x_left", xl), ("x_right", xr)):
            d, n = x.shape
            if not d >= n >= 1:
                raise IMCError(f"{name} must satisfy d >= n >= 1, got {x.shape}")
            dev = np.max(np.abs(x.T @ x - np.eye(n)))
            if dev > self.tol:
                raise IMCError(
                    f"{name} columns are not orthonormal (max |X^T X - I| = {dev:.3e}); "
                    "call orthonormalize() first"
                )

    @property
    def d1(self):
        return self.x_left.shape[0]

    @property
    def d2(self):
        return self.x_right.shape[0]

    @property
    def n1(self):
        return self.x_left.shape[1]

    @property
    def n2(self):
        return self.x_right.shape[1]

    def lift(self, m):
        """Return ``X_L m X_R^T`` as a dense (d1, d2) array."""
        return self.x_left @ m @ self.x_right.T


@dataclass(frozen=True)
class GroundTruth:
    """Rank-r target core ``M* = U* V*^T`` with balanced factors.

    ``u_star = Ubar diag(s)^{1/2}`` and ``v_star = Vbar diag(s)^{1/2}`` where
    ``Ubar diag(s) Vbar^T`` is the rank-r SVD of ``m_star``.
    """

    m_star: np.ndarray
    u_star: np.ndarray
    v_star: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.singular_values, dtype=float)
        object.__setattr__(self, "singular_values", s)
        if s.ndim != 1 or s.size == 0:
            raise IMCError("singular_values must be a non-empty 1-d array")
        if np.any(s <= 0):
            raise IMCError("singular values must be strictly positive")
        if np.any(np.diff(s) > 0):
            raise IMCError("singular values must be non-increasing")
        if self.u_star.shape[1] != s.size or self.v_star.shape[1] != s.size:
            raise IMCError("factor column count must equal the rank")
        scale = max(1.0, float(np.max(np.abs(self.m_star))))
        if np.max(np.abs(self.u_star @ self.v_star.T - self.m_star)) > FACTOR_TOL * scale:
            raise IMCError("m_star != u_star v_star^T")
        gram_tol = BALANCE_TOL * max(1.0, float(s[0]))
        for name, f in (("u_star", self.u_star), ("v_star", self.v_star)):
            if np.max(np.abs(f.T @ f - np.diag(s))) > gram_tol:
                raise IMCError(f"{name} is not balanced (Gram matrix != diag(singular_values))")

    @classmethod
    def from_matrix(cls, m_star, rank):
        """Balance the rank-``rank`` SVD of ``m_star`` into a GroundTruth."""
        m_star = _as_matrix(m_star, "m_star")
        u, s, vt = np.linalg.svd(m_star, full_matrices=False)
        if rank < 1 or rank > s.size:
            raise IMCError(f"rank must be in [1, {s.size}], got {rank}")
        if s[rank - 1] <= RANK_TOL * s[0]:
            raise IMCError(f"m_star has numerical rank below {rank}")
        root = np.sqrt(s[:rank])
        u_star = u[:, :rank] * root
        v_star = vt[:rank].T * root
        # store the exact rank-r product so the factor identity holds to rounding
        return cls(u_star @ v_star.T, u_star, v_star, s[:rank].copy())

    @property
    def rank(self):
        return self.singular_values.size

    @property
    def condition_number(self):
        return float(self.singular_values[0] / self.singular_values[-1])

    @property
    def u_bar(self):
        return self.u_star / np.sqrt(self.singular_values)

    @property
    def v_bar(self):
        return self.v_star / np.sqrt(self.singular_values)

    @property
    def factors(self):
        return FactorPair(self.u_star, self.v_star)

    def l_star(self, features):
        return features.lift(self.m_star)


@dataclass(frozen=True)
class ObservationSet:
    """Observed entries of a (d1, d2) matrix, stored as coordinate arrays.

    Entries are kept sorted row-major. Duplicate coordinates are rejected.
    """

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    d1: int
    d2: int

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        if not rows.size == cols.size == values.size:
            raise IMCError("rows, cols and values must have equal length")
        d1, d2 = int(self.d1), int(self.d2)
        if d1 < 1 or d2 < 1:
            raise IMCError("d1 and d2 must be positive")
        if rows.size:
            if rows.min() < 0 or rows.max() >= d1 or cols.min() < 0 or cols.max() >= d2:
                raise IMCError("observation index out of range")
        key = rows * d2 + cols
        order = np.argsort(key, kind="stable")
        key = key[order]
        if key.size > 1 and np.any(key[1:] == key[:-1]):
            raise IMCError("duplicate (row, col) observation")
        for name, arr in (("rows", rows[order]), ("cols", cols[order]), ("values", values[order])):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "d2", d2)

    def __len__(self):
        return int(self.rows.size)

    def __eq__(self, other):
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return (
            self.d1 == other.d1
            and self.d2 == other.d2
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @property
    def p(self):
        """Realized sampling rate ``|Omega| / (d1 d2)``."""
        return len(self) / (self.d1 * self.d2)

    @cached_property
    def indptr(self):
        """CSR row pointer for the row-major sorted entries."""
        return np.searchsorted(self.rows, np.arange(self.d1 + 1)).astype(np.int64)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return ObservationSet(self.rows[idx], self.cols[idx], self.values[idx], self.d1, self.d2)

    def to_sparse(self, values=None):
        from scipy import sparse

        vals = self.values if values is None else values
        return sparse.csr_matrix((vals, self.cols, self.indptr), shape=(self.d1, self.d2))

    def to_dense(self):
        out = np.zeros((self.d1, self.d2))
        out[self.rows, self.cols] = self.values
        return out


@dataclass(frozen=True)
class FactorPair:
    """Factor iterate ``Z = [U; V]``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = _as_matrix(self.u, "u")
        v = _as_matrix(self.v, "v")
        if u.shape[1] != v.shape[1]:
            raise IMCError(f"u and v must share the rank dimension, got {u.shape} and {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def rank(self):
        return self.u.shape[1]

    @property
    def z(self):
        return np.vstack([self.u, self.v])

    @classmethod
    def from_stacked(cls, z, n1):
        z = _as_matrix(z, "z")
        return cls(z[:n1], z[n1:])

    def product(self):
        return self.u @ self.v.T

    def rotate(self, q):
        return FactorPair(self.u @ q, self.v @ q)

    def check_against(self, features):
        if self.u.shape[0] != features.n1 or self.v.shape[0] != features.n2:
            raise IMCError(
                f"factor shapes {self.u.shape}, {self.v.shape} do not match features "
                f"(n1={features.n1}, n2={features.n2})"
            )


@dataclass(frozen=True)
class SampleSplit:
    omega0: ObservationSet
    subsets: tuple


@dataclass(frozen=True)
class CoherenceStats:
    mu0: float
    mu1: float


def orthonormalize(x_raw, tol=RANK_TOL):
    """Orthonormal basis for the column space of ``x_raw`` via thin QR.

    Raises IMCError if ``x_raw`` is numerically rank deficient.
    """
    x = _as_matrix(x_raw, "x_raw")
    d, n = x.shape
    if d < n:
        raise IMCError(f"need d >= n, got shape {x.shape}")
    s = np.linalg.svd(x, compute_uv=False)
    if s[0] == 0:
        raise IMCError(f"x_raw is zero; rank deficient by {n} columns")
    deficient = int(np.sum(s <= tol * s[0]))
    if deficient:
        raise IMCError(f"x_raw is rank deficient: {deficient} of {n} columns are dependent")
    q, _ = np.linalg.qr(x)
    return q


def _row_norm_inf_sq(a):
    return float(np.max(np.einsum("ij,ij->i", a, a)))


def coherence_mu0(features, truth):
    """Smallest mu0 with ``||X_L Ubar||_{2,inf} <= sqrt(mu0 r / d1)`` (and the right side)."""
    r = truth.rank
    if truth.u_star.shape[0] != features.n1 or truth.v_star.shape[0] != features.n2:
        raise IMCError("ground truth shapes do not match features")
    left = features.x_left @ truth.u_bar
    right = features.x_right @ truth.v_bar
    return max(
        features.d1 / r * _row_norm_inf_sq(left),
        features.d2 / r * _row_norm_inf_sq(right),
    )


def coherence_mu1(features):
    """Smallest mu1 with ``||X_L||_{2,inf} <= sqrt(mu1 n1 / d1)`` (and the right side)."""
    return max(
        features.d1 / features.n1 * _row_norm_inf_sq(features.x_left),
        features.d2 / features.n2 * _row_norm_inf_sq(features.x_right),
    )


def coherence(features, truth):
    return CoherenceStats(coherence_mu0(features, truth), coherence_mu1(features))


def _check_same_shape(z, z_star):
    if z.u.shape != z_star.u.shape or z.v.shape != z_star.v.shape:
        raise IMCError("factor pairs must have identical shapes")


def optimal_rotation(z, z_star):
    """Orthogonal R minimizing ``||Z - Z* R||_F``.

    With ``Z*^T Z = A S B^T``, the minimizer is ``R = A B^T``. Returns the identity
    when ``Z*^T Z`` vanishes, since every rotation is then optimal.
    """
    _check_same_shape(z, z_star)
    cross = z_star.u.T @ z.u + z_star.v.T @ z.v
    if not np.any(cross):
        return np.eye(cross.shape[0])
    a, _, bt = np.linalg.svd(cross)
    return a @ bt


def procrustes_distance(z, z_star):
    r = optimal_rotation(z, z_star)
    du = z.u - z_star.u @ r
    dv = z.v - z_star.v @ r
    return math.sqrt(float(np.sum(du * du) + np.sum(dv * dv)))


def split_observations(obs, s_count, seed):
    """Randomly partition ``obs`` into ``Omega_0`` and ``s_count`` disjoint subsets.

    ``Omega_0`` receives ``ceil(|Omega|/2)`` entries of a seeded uniform permutation;
    the remaining entries are dealt round-robin into the subsets.
    """
    if int(s_count) != s_count or s_count <= 0:
        raise IMCError(f"s_count must be a positive integer, got {s_count}")
    total = len(obs)
    if total < 2 * s_count:
        raise IMCError(f"need at least {2 * s_count} observations to split into {s_count} subsets, got {total}")
    from .rng import make_rng

    perm = make_rng(seed, "split").permutation(total)
    half = (total + 1) // 2
    omega0 = obs.subset(np.sort(perm[:half]))
    rest = perm[half:]
    subsets = tuple(obs.subset(np.sort(rest[s::s_count])) for s in range(s_count))
    return SampleSplit(omega0, subsets)


def relative_error(z, truth):
    """``||U V^T - M*||_F / ||M*||_F``.

    Equal to ``||X_L U V^T X_R^T - L*||_F / ||L*||_F`` because the features have
    orthonormal columns.
    """
    norm = np.linalg.norm(truth.m_star)
    if norm == 0:
        raise IMCError("ground truth is zero")
    return float(np.linalg.norm(z.product() - truth.m_star) / norm)
