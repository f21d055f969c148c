"""Approximate Euclidean projection onto the row-norm constraint sets.

The set is ``C = {U : ||X U||_{2,inf} <= b}`` for a feature matrix X with
orthonormal columns. Projecting onto C is a convex QCQP. We solve it with
Dykstra's alternating projections on the lifted variable ``W = X U``, between

* A = {W : every row of W has norm <= b}   (exact: per-row clipping)
* B = {W : W = X X^T W}                    (exact: column-space projection)

``U -> X U`` is an isometry onto B, so projecting ``X U_hat`` onto A n B and
mapping back with ``X^T`` gives the projection of ``U_hat`` onto C.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import IMCError

FEASIBILITY_RTOL = 1e-12
DEFAULT_MAX_SWEEPS = 20000


class ProjectionError(IMCError):
    def __init__(self, message, violation):
        super().__init__(message)
        self.violation = violation


@dataclass(frozen=True)
class RowNormConstraint:
    """``||feature @ U||_{2,inf} <= bound``; ``side`` is ``"left"`` or ``"right"``."""

    feature: np.ndarray
    bound: float
    side: str = "left"

    def __post_init__(self):
        if self.bound < 0:
            raise IMCError(f"bound must be non-negative, got {self.bound}")
        if self.side not in ("left", "right"):
            raise IMCError(f"side must be 'left' or 'right', got {self.side!r}")

    @classmethod
    def from_init(cls, feature, z_init, mu0, r, side="left"):
        return cls(feature, constraint_bound(z_init, mu0, r, feature.shape[0]), side)

    def tolerance(self):
        return FEASIBILITY_RTOL * (1 + self.bound)


def constraint_bound(z_init, mu0, r, d):
    """``sqrt(mu0 r / d) * ||[U_init; V_init]||_2``."""
    if not mu0 > 0 or r < 1 or d < 1:
        raise IMCError(f"need mu0 > 0, r >= 1, d >= 1; got mu0={mu0}, r={r}, d={d}")
    z = z_init.z
    sigma = float(np.linalg.norm(z, 2)) if z.size else 0.0
    return math.sqrt(mu0 * r / d) * sigma


def _row_norms(w):
    return np.sqrt(np.einsum("ij,ij->i", w, w))


def feasibility_violation(u, constraint):
    w = constraint.feature @ u
    if w.size == 0:
        return 0.0
    return max(0.0, float(_row_norms(w).max()) - constraint.bound)


def project_single_row(u_hat, x_row, b):
    """Exact projection of ``u_hat`` onto ``{U : ||x_row^T U||_2 <= b}``."""
    if b < 0:
        raise IMCError(f"b must be non-negative, got {b}")
    u_hat = np.asarray(u_hat, dtype=float)
    x = np.asarray(x_row, dtype=float)
    alpha2 = float(x @ x)
    if alpha2 == 0:
        return u_hat.copy()
    v = x @ u_hat
    nv = float(np.linalg.norm(v))
    if nv <= b:
        return u_hat.copy()
    return u_hat + np.outer(x, v) * ((b / nv - 1) / alpha2)


def _clip_rows(w, b):
    norms = _row_norms(w)
    scale = np.ones_like(norms)
    over = norms > b
    scale[over] = b / norms[over]
    return w * scale[:, None]


def project_qcqp(u_hat, constraint, delta, max_sweeps=DEFAULT_MAX_SWEEPS):
    """Dykstra projection of ``u_hat`` onto the row-norm set.

    Stops once ``X U`` is feasible to ``1e-12 (1 + b)`` and a full sweep moves the
    iterate by at most ``delta / 2`` (Frobenius). When the sweep criterion holds
    but a residual violation remains, a uniform shrink ``U <- c U`` with
    ``c = b / ||X U||_{2,inf}`` restores feasibility if it moves U by at most
    ``delta / 2``.

    :return: ``(U, gap)`` where ``gap`` is the last sweep change plus any shrink
        movement, an estimate of the distance to the exact projection.
    :raises ProjectionError: if feasibility is not reached within ``max_sweeps``.
    """
    if not delta > 0:
        raise IMCError(f"delta must be positive, got {delta}")
    x = constraint.feature
    b = constraint.bound
    tol = constraint.tolerance()
    u_hat = np.asarray(u_hat, dtype=float)
    w = x @ u_hat
    if w.size == 0 or _row_norms(w).max() - b <= tol:
        return u_hat.copy(), 0.0

    u = u_hat
    p = np.zeros_like(w)
    q = np.zeros_like(w)
    violation = math.inf
    for _ in range(int(max_sweeps)):
        y = _clip_rows(w + p, b)
        p = w + p - y
        u_new = x.T @ (y + q)
        w_new = x @ u_new
        q = y + q - w_new
        change = float(np.linalg.norm(w_new - w))
        u, w = u_new, w_new
        worst = float(_row_norms(w).max())
        violation = worst - b
        if change <= delta / 2:
            if violation <= tol:
                return u, change
            c = b / worst
            shrink = (1 - c) * float(np.linalg.norm(u))
            if shrink <= delta / 2:
                return u * c, change + shrink
    if violation <= tol:
        return u, change
    raise ProjectionError(
        f"projection did not reach feasibility in {max_sweeps} sweeps (violation {violation:.3e})",
        violation,
    )
