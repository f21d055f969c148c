"""Synthetic IMC problems and observation samplers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeaturePair, GroundTruth, IMCError, ObservationSet
from .rng import make_rng


@dataclass(frozen=True)
class ProblemSpec:
    d1: int
    d2: int
    n1: int
    n2: int
    r: int
    seed: int = 0

    def __post_init__(self):
        for name in ("d1", "d2", "n1", "n2", "r"):
            if int(getattr(self, name)) < 1:
                raise IMCError(f"{name} must be a positive integer")
        if not (self.d1 >= self.n1 >= self.r and self.d2 >= self.n2 >= self.r):
            raise IMCError(
                f"need d1 >= n1 >= r and d2 >= n2 >= r, got d=({self.d1},{self.d2}) "
                f"n=({self.n1},{self.n2}) r={self.r}"
            )

    @classmethod
    def symmetric(cls, d, n, r, seed=0):
        return cls(d, d, n, n, r, seed)


def raw_factors(spec):
    """Unbalanced Gaussian factors with N(0, 1/n1) and N(0, 1/n2) entries."""
    u_raw = make_rng(spec.seed, "u_star").normal(0.0, 1.0 / np.sqrt(spec.n1), (spec.n1, spec.r))
    v_raw = make_rng(spec.seed, "v_star").normal(0.0, 1.0 / np.sqrt(spec.n2), (spec.n2, spec.r))
    return u_raw, v_raw


def generate_problem(spec):
    """Draw features and a rank-r ground truth.

    ``U*`` and ``V*`` have iid N(0, 1/n1) and N(0, 1/n2) entries; the stored factors
    are re-balanced from the SVD of ``M* = U* V*^T``. ``X_L`` and ``X_R`` are the
    leading n1 left and n2 right singular vectors of a (d1, d2) standard Gaussian
    matrix.
    """
    u_raw, v_raw = raw_factors(spec)
    truth = GroundTruth.from_matrix(u_raw @ v_raw.T, spec.r)

    f = make_rng(spec.seed, "features").standard_normal((spec.d1, spec.d2))
    y_left, _, y_right_t = np.linalg.svd(f, full_matrices=False)
    features = FeaturePair(
        np.ascontiguousarray(y_left[:, : spec.n1]),
        np.ascontiguousarray(y_right_t[: spec.n2].T),
    )
    return features, truth


def observed_values(features, truth, rows, cols):
    """Entries of ``L* = X_L M* X_R^T`` at the given coordinates, via the factors."""
    left = features.x_left[rows] @ truth.u_star
    right = features.x_right[cols] @ truth.v_star
    return np.einsum("ij,ij->i", left, right)


def sample_bernoulli(features, truth, p, seed):
    """Reveal each entry independently with probability ``p``."""
    if not 0 < p <= 1:
        raise IMCError(f"p must lie in (0, 1], got {p}")
    mask = make_rng(seed, "bernoulli").random((features.d1, features.d2)) < p
    rows, cols = np.nonzero(mask)
    return ObservationSet(rows, cols, observed_values(features, truth, rows, cols), features.d1, features.d2)


def sample_fixed_count(features, truth, m, seed):
    """Reveal a uniformly random set of exactly ``m`` distinct entries."""
    total = features.d1 * features.d2
    if int(m) != m or not 1 <= m <= total:
        raise IMCError(f"m must be an integer in [1, {total}], got {m}")
    flat = make_rng(seed, "fixed_count").choice(total, size=int(m), replace=False)
    rows, cols = np.divmod(flat, features.d2)
    return ObservationSet(rows, cols, observed_values(features, truth, rows, cols), features.d1, features.d2)
