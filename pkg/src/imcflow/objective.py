"""Regularized sample loss and its gradient, evaluated through sparse residuals.

For ``Z = [U; V]`` the loss is::

    f(U, V) = 1/(2p) ||P_Omega(X_L U V^T X_R^T - L)||_F^2 + 1/8 ||U^T U - V^T V||_F^2

with ``p = |Omega| / (d1 d2)``. Nothing of size d1 x d2 is ever formed: the
residual lives on Omega and costs O(|Omega| r + d n r) to build.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .core import FactorPair, IMCError


@dataclass(frozen=True)
class ResidualCache:
    """Lifted factors and the residual on Omega (row-major order of ``obs``)."""

    left_lift: np.ndarray
    right_lift: np.ndarray
    residual: np.ndarray


def _predictions(left_lift, right_lift, obs):
    return np.einsum("ij,ij->i", left_lift[obs.rows], right_lift[obs.cols])


def build_cache(z, features, obs):
    z.check_against(features)
    left = features.x_left @ z.u
    right = features.x_right @ z.v
    return ResidualCache(left, right, _predictions(left, right, obs) - obs.values)


def _require_nonempty(obs):
    if len(obs) == 0:
        raise IMCError("observation set is empty (p = 0)")


def _balance(z):
    return z.u.T @ z.u - z.v.T @ z.v


def _data_gradient(cache, features, obs, weights):
    """Return ``X_L^T S X_R V`` and ``X_R^T S^T X_L U`` for the sparse matrix S on Omega."""
    s = sparse.csr_matrix((weights, obs.cols, obs.indptr), shape=(obs.d1, obs.d2))
    g_u = features.x_left.T @ (s @ cache.right_lift)
    g_v = features.x_right.T @ (s.T @ cache.left_lift)
    return g_u, g_v


def loss(z, features, obs, cache=None):
    _require_nonempty(obs)
    cache = cache or build_cache(z, features, obs)
    b = _balance(z)
    return float(cache.residual @ cache.residual / (2 * obs.p) + np.sum(b * b) / 8)


def gradient(z, features, obs, cache=None):
    """Gradient blocks ``(G_U, G_V)`` of the regularized loss, as a FactorPair."""
    _require_nonempty(obs)
    cache = cache or build_cache(z, features, obs)
    g_u, g_v = _data_gradient(cache, features, obs, cache.residual / obs.p)
    b = _balance(z)
    return FactorPair(g_u + 0.5 * z.u @ b, g_v - 0.5 * z.v @ b)


def _check_lambda(lam):
    if lam < 0:
        raise IMCError(f"lambda must be non-negative, got {lam}")


def loss_sparse_reg(z, features, obs, lam, cache=None):
    """Loss plus ``lam * ||P_{Omega^c}(X_L U V^T X_R^T)||_F^2``.

    Uses ``||P_{Omega^c}(A)||^2 = ||U V^T||_F^2 - ||P_Omega(A)||^2``, valid since the
    features are orthonormal.
    """
    _check_lambda(lam)
    cache = cache or build_cache(z, features, obs)
    base = loss(z, features, obs, cache)
    if lam == 0:
        return base
    pred = cache.residual + obs.values
    full = float(np.sum((z.u.T @ z.u) * (z.v.T @ z.v)))
    return base + lam * max(full - float(pred @ pred), 0.0)


def gradient_sparse_reg(z, features, obs, lam, cache=None):
    _check_lambda(lam)
    cache = cache or build_cache(z, features, obs)
    g = gradient(z, features, obs, cache)
    if lam == 0:
        return g
    pred = cache.residual + obs.values
    p_u, p_v = _data_gradient(cache, features, obs, pred)
    c_u = z.u @ (z.v.T @ z.v) - p_u
    c_v = z.v @ (z.u.T @ z.u) - p_v
    return FactorPair(g.u + 2 * lam * c_u, g.v + 2 * lam * c_v)
