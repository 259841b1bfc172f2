"""Conjugate updates for gap loadings, trend factors and trend loadings."""
from __future__ import annotations

import warnings

import numpy as np

from .model import DataPanel, LatentStatePath

__all__ = [
    "DegenerateRegressorWarning",
    "sample_measurement_loadings",
    "sample_trend_factor_path",
    "sample_trend_loadings",
    "free_loading_mask",
]


class DegenerateRegressorWarning(UserWarning):
    """The gap path carries no information; loadings fall back to the prior."""


def _scalar_regression(resp, x, var, prior_var, rng):
    # independent heteroscedastic regressions resp[:, i] = b_i x + e, e ~ N(0, var[:, i])
    w = 1.0 / var
    prec = (w * (x * x)[:, None]).sum(axis=0) + 1.0 / prior_var
    mean = (w * x[:, None] * resp).sum(axis=0) / prec
    return mean + rng.standard_normal(mean.size) / np.sqrt(prec), mean, 1.0 / prec


def sample_measurement_loadings(
    states: LatentStatePath,
    panel: DataPanel,
    h_paths,
    rng: np.random.Generator,
    alpha_prior_var: float = 1.0,
    beta_prior_var: float = 1.0,
    observed: bool = True,
):
    """
    Draw ``alpha`` and ``beta`` from their Gaussian full conditionals.

    Parameters
    ----------
    states : LatentStatePath
    panel : DataPanel
    h_paths : array_like, (T, 2N)
        Measurement log-variances ordered ``(y_1..y_N, pi_1..pi_N)``.
    observed : bool
        ``False`` drops the likelihood so the draws come from the prior.

    Returns
    -------
    alpha, beta : ndarray
        ``alpha[0]`` is fixed at one.
    """
    N = panel.N
    var = np.exp(np.asarray(h_paths, float))
    g = states.g if observed else np.zeros_like(states.g)
    if observed and not np.any(g != 0):
        warnings.warn("gap path is identically zero; loadings drawn from the prior", DegenerateRegressorWarning)
    ry = panel.y - states.tau_y
    rp = panel.pi - states.tau_pi
    alpha, _, _ = _scalar_regression(ry, g, var[:, :N], alpha_prior_var, rng)
    beta, _, _ = _scalar_regression(rp, g, var[:, N:], beta_prior_var, rng)
    alpha[0] = 1.0
    return alpha, beta


def sample_trend_factor_path(eta, Lambda, omega_vars, upsilon_vars, rng: np.random.Generator) -> np.ndarray:
    """
    Draw ``z_t | eta_t`` for every t from ``N(C L' W eta_t, C)`` with
    ``C = (L' W L + U^-1)^-1``, ``W = Omega_t^-1``, ``U = Upsilon_t``.

    Shapes: ``eta`` (T, N), ``Lambda`` (N, q), ``omega_vars`` (T, N),
    ``upsilon_vars`` (T, q). Returns (T, q).
    """
    eta = np.asarray(eta, float)
    L = np.asarray(Lambda, float)
    T = eta.shape[0]
    q = L.shape[1]
    if q == 0:
        return np.zeros((T, 0))
    w = 1.0 / np.asarray(omega_vars, float)
    u = np.asarray(upsilon_vars, float)
    prec = np.einsum("ik,ti,il->tkl", L, w, L)
    idx = np.arange(q)
    prec[:, idx, idx] += 1.0 / u
    rhs = np.einsum("ik,ti,ti->tk", L, w, eta)
    chol = np.linalg.cholesky(prec)
    # mean = prec^-1 rhs; draw = mean + chol^-T e
    y = np.linalg.solve(chol, rhs[..., None])
    e = rng.standard_normal((T, q, 1))
    z = np.linalg.solve(np.swapaxes(chol, 1, 2), y + e)
    return z[..., 0]


def free_loading_mask(N: int, q: int) -> np.ndarray:
    """Boolean N x q mask of unrestricted trend-loading entries."""
    mask = np.ones((N, q), bool)
    for i in range(min(q, N)):
        mask[i, i:] = False
    return mask


def sample_trend_loadings(eta, z, omega_vars, Lambda, rng: np.random.Generator, prior_var: float = 0.1) -> np.ndarray:
    """
    Row-wise conjugate draw of the free entries of one trend-loading matrix.

    Restricted entries (unit diagonal and zeros above it in the top q x q
    block) are copied from ``Lambda`` unchanged.
    """
    eta = np.asarray(eta, float)
    z = np.asarray(z, float)
    L = np.array(Lambda, float)
    N, q = L.shape
    if q == 0:
        return L
    w = 1.0 / np.asarray(omega_vars, float)
    mask = free_loading_mask(N, q)
    for i in range(N):
        free = mask[i]
        k = int(free.sum())
        if k == 0:
            continue
        fixed_part = z[:, ~free] @ L[i, ~free]
        resp = eta[:, i] - fixed_part
        X = z[:, free]
        prec = (X * w[:, i, None]).T @ X + np.eye(k) / prior_var
        rhs = (X * w[:, i, None]).T @ resp
        c = np.linalg.cholesky(prec)
        mean = np.linalg.solve(c.T, np.linalg.solve(c, rhs))
        L[i, free] = mean + np.linalg.solve(c.T, rng.standard_normal(k))
    return L
