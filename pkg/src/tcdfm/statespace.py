"""
Linear-Gaussian state space with VAR(2) states, Kalman filter and FFBS.

The generic system is::

    obs_t = Z f_t + e_t,                      e_t ~ N(0, diag(H_t))
    f_t   = Phi1 f_{t-1} + Phi2 f_{t-2} + n_t,  n_t ~ N(0, Sigma_t)

filtered in companion form over ``x_t = (f_t, f_{t-1})`` (dimension 2m).
Index 0 of every stored filter array is the prior on ``x_0 = (f_0, f_{-1})``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import backward_kernel, forward_kernel
from .model import DataPanel, LatentStatePath, LoadingSet, ModelConfig, ParameterDraw

__all__ = [
    "JITTER",
    "FilterError",
    "StateSpaceSystem",
    "FilterState",
    "assemble_sigma",
    "build_system",
    "kalman_forward",
    "ffbs_draw",
    "draw_states",
    "stacked_to_path",
]

JITTER = 1e-10
_LOG_2PI = np.log(2.0 * np.pi)


class FilterError(RuntimeError):
    """Numerical failure inside the filter or the backward sampler."""


def assemble_sigma(loadings: LoadingSet, factor_vars, idio_vars) -> np.ndarray:
    """
    State innovation covariance ``Lambda Upsilon Lambda' + Omega`` for one period.

    Parameters
    ----------
    loadings : LoadingSet
    factor_vars : array_like, length 2q
        Diagonal of Upsilon ordered ``(z_y, z_pi)``.
    idio_vars : array_like, length 2N + 1
        Diagonal of Omega ordered ``(tau_y, tau_pi, g)``.

    Returns
    -------
    ndarray, (2N + 1, 2N + 1)
        Block-diagonal over the output-trend, inflation-trend and gap blocks.
    """
    fv = np.asarray(factor_vars, dtype=float)
    iv = np.asarray(idio_vars, dtype=float)
    N, q = loadings.Lambda_y.shape
    if fv.shape != (2 * q,) or iv.shape != (2 * N + 1,):
        raise ValueError(f"expected {2 * q} factor and {2 * N + 1} idiosyncratic variances")
    if np.any(fv < 0) or np.any(iv < 0):
        raise ValueError("variances must be non-negative")
    sig = np.diag(iv)
    if q:
        ly = loadings.Lambda_y
        lp = loadings.Lambda_pi
        sig[:N, :N] += (ly * fv[:q]) @ ly.T
        sig[N:2 * N, N:2 * N] += (lp * fv[q:]) @ lp.T
    return sig


def _sigma_path(loadings: LoadingSet, factor_vars, idio_vars) -> np.ndarray:
    # vectorized assemble_sigma over a T x 2q / T x (2N+1) panel of variances
    fv = np.asarray(factor_vars, dtype=float)
    iv = np.asarray(idio_vars, dtype=float)
    T = iv.shape[0]
    N, q = loadings.Lambda_y.shape
    sig = np.zeros((T, 2 * N + 1, 2 * N + 1))
    idx = np.arange(2 * N + 1)
    sig[:, idx, idx] = iv
    if q:
        ly = loadings.Lambda_y
        lp = loadings.Lambda_pi
        sig[:, :N, :N] += np.einsum("ik,tk,jk->tij", ly, fv[:, :q], ly)
        sig[:, N:2 * N, N:2 * N] += np.einsum("ik,tk,jk->tij", lp, fv[:, q:], lp)
    return sig


@dataclass(frozen=True)
class StateSpaceSystem:
    """
    Time-varying state space with VAR(2) transition.

    Attributes
    ----------
    Z : (p, m) measurement loadings on ``f_t``.
    H : (T, p) measurement error variances.
    Phi1, Phi2 : (m, m) transition blocks.
    Sigma : (T, m, m) covariance of ``n_t`` for t = 1..T.
    init_mean, init_cov : prior moments of ``x_0 = (f_0, f_{-1})``.
    """

    Z: np.ndarray
    H: np.ndarray
    Phi1: np.ndarray
    Phi2: np.ndarray
    Sigma: np.ndarray
    init_mean: np.ndarray
    init_cov: np.ndarray

    def __post_init__(self):
        m = self.Phi1.shape[0]
        T, p = self.H.shape
        if self.Z.shape != (p, m):
            raise ValueError(f"Z has shape {self.Z.shape}, expected {(p, m)}")
        if self.Phi2.shape != (m, m) or self.Sigma.shape != (T, m, m):
            raise ValueError("transition blocks inconsistent with state dimension")
        if self.init_mean.shape != (2 * m,) or self.init_cov.shape != (2 * m, 2 * m):
            raise ValueError("initial prior must be over the 2m companion state")

    @property
    def m(self) -> int:
        return self.Phi1.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[0]

    @property
    def T(self) -> int:
        return self.H.shape[0]

    def companion(self) -> np.ndarray:
        m = self.m
        F = np.zeros((2 * m, 2 * m))
        F[:m, :m] = self.Phi1
        F[:m, m:] = self.Phi2
        F[m:, :m] = np.eye(m)
        return F


@dataclass(frozen=True)
class FilterState:
    """Filtered moments; index 0 holds the prior on ``x_0``."""

    means: np.ndarray
    covs: np.ndarray
    pred_means: np.ndarray
    pred_covs: np.ndarray
    loglik: float


def build_system(
    draw: ParameterDraw,
    cfg: ModelConfig,
    anchor: Optional[np.ndarray] = None,
) -> StateSpaceSystem:
    """
    Model state space for the current draw.

    ``anchor`` (length 2N) is the prior mean of the initial trends; the gap
    prior mean is zero. Every initial element has variance ``init_state_var``.
    """
    ld = draw.loadings
    N = ld.alpha.size
    M = 2 * N + 1
    Z = np.zeros((2 * N, M))
    Z[:, :2 * N] = np.eye(2 * N)
    Z[:N, 2 * N] = ld.alpha
    Z[N:, 2 * N] = ld.beta
    Phi1 = np.eye(M)
    Phi2 = np.zeros((M, M))
    Phi1[-1, -1] = draw.cycle.phi1
    Phi2[-1, -1] = draw.cycle.phi2
    sigma = _sigma_path(ld, np.exp(draw.sv_upsilon.path), np.exp(draw.sv_omega.path))
    mean = np.zeros(2 * M)
    if anchor is not None:
        mean[:2 * N] = anchor
        mean[M:M + 2 * N] = anchor
    cov = np.eye(2 * M) * cfg.init_state_var
    return StateSpaceSystem(Z, np.exp(draw.sv_h.path), Phi1, Phi2, sigma, mean, cov)


_FAILURES = {
    1: "non-finite innovation covariance",
    2: "innovation covariance not positive definite",
    3: "terminal filtered covariance not positive definite",
    4: "filtered covariance not positive definite",
    5: "backward innovation covariance not positive definite",
    6: "backward covariance not positive definite",
}


def _check(status, t):
    if status:
        raise FilterError(f"{_FAILURES[status]} at t={t}")


def kalman_forward(obs, sys: StateSpaceSystem, mask=None) -> FilterState:
    """
    Forward Kalman filter in companion form.

    Parameters
    ----------
    obs : DataPanel or array_like (T, p)
        A panel is stacked as ``[y, pi]``.
    sys : StateSpaceSystem
    mask : array_like of bool, length T, optional
        Periods with ``False`` skip the measurement update.

    Returns
    -------
    FilterState

    Raises
    ------
    FilterError
        Non-finite or non-positive-definite innovation covariance, with the
        0-based time index.
    """
    Y = obs.observations() if isinstance(obs, DataPanel) else np.asarray(obs, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    T, p = sys.T, sys.p
    if Y.shape != (T, p):
        raise ValueError(f"observations have shape {Y.shape}, system expects {(T, p)}")
    use = np.ones(T, bool) if mask is None else np.asarray(mask, bool)
    c = np.ascontiguousarray
    means, covs, pm, pc, ll, t, status = forward_kernel(
        c(Y, dtype=float), c(use), c(sys.Z, dtype=float), c(sys.H, dtype=float),
        c(sys.Phi1, dtype=float), c(sys.Phi2, dtype=float), c(sys.Sigma, dtype=float),
        c(sys.init_mean, dtype=float), c(sys.init_cov, dtype=float), JITTER,
    )
    _check(status, t)
    return FilterState(means, covs, pm, pc, float(ll))


def ffbs_draw(flt: FilterState, sys: StateSpaceSystem, rng: np.random.Generator, size=None) -> np.ndarray:
    """
    Backward sampling of ``f_{-1}, f_0, ..., f_T`` given filtered moments.

    Returns an array of shape ``(T + 2, m)`` (or ``(size, T + 2, m)``) whose
    row ``k`` is ``f_{k-1}``. Each backward step conditions the filtered
    companion state exactly on the already drawn ``f_t`` and on
    ``f_{t+1} - Phi1 f_t = Phi2 f_{t-1} + n_{t+1}``.
    """
    T, m = sys.T, sys.m
    k = 1 if size is None else int(size)
    E = rng.standard_normal((T + 2, k, m))
    c = np.ascontiguousarray
    f, t, status = backward_kernel(
        flt.means, flt.covs, c(sys.Phi1, dtype=float), c(sys.Phi2, dtype=float),
        c(sys.Sigma, dtype=float), E, JITTER,
    )
    _check(status, t)
    return f[0] if size is None else f


def stacked_to_path(f: np.ndarray, N: int) -> LatentStatePath:
    """Convert a ``(T + 2, 2N + 1)`` FFBS draw into a :class:`LatentStatePath`."""
    return LatentStatePath(
        tau_y=f[2:, :N],
        tau_pi=f[2:, N:2 * N],
        g=f[2:, 2 * N],
        tau_y0=f[1, :N],
        tau_pi0=f[1, N:2 * N],
        g_init=np.array([f[1, 2 * N], f[0, 2 * N]]),
    )


def draw_states(
    panel: DataPanel,
    draw: ParameterDraw,
    cfg: ModelConfig,
    rng: np.random.Generator,
    anchor: Optional[np.ndarray] = None,
    mask=None,
) -> tuple[LatentStatePath, float]:
    """FFBS draw of the model states; returns the path and the log-likelihood."""
    sys = build_system(draw, cfg, anchor)
    flt = kalman_forward(panel, sys, mask=mask)
    f = ffbs_draw(flt, sys, rng)
    return stacked_to_path(f, panel.N), flt.loglik
