"""
Stochastic volatility in non-centered form.

Each log-variance ``h_t = mu + sqrt_theta * w_t`` with a standardized AR(1)
``w_t = rho w_{t-1} + u_t``, ``u_t ~ N(0, 1)`` and stationary start
``w_1 ~ N(0, 1 / (1 - rho**2))``. Given residuals ``r_t`` the auxiliary
observation ``log(r_t**2 + 1e-10) = h_t + v_t`` has ``v_t ~ log chi2(1)``,
approximated by a ten-component Gaussian mixture. All functions work on
R processes at once; arrays are T x R.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit, logit, gammaln

from ._kernels import sv_smoother_kernel
from .adapt import AdaptiveScale
from .model import ModelConfig, SvBlock
from .shrinkage import sample_gig

__all__ = [
    "MIXTURE_WEIGHTS",
    "MIXTURE_MEANS",
    "MIXTURE_VARS",
    "OFFSET",
    "NonCenteredRegressionData",
    "transform_residuals",
    "sample_indicators",
    "indicator_probabilities",
    "sample_logvol_path",
    "sample_sv_params",
    "sample_rho",
    "interweave_centered",
    "sample_constant_variances",
    "update_sv_block",
    "log_rho_prior",
    "to_noncentered",
    "to_centered",
]

OFFSET = 1e-10

# Ten-component approximation of log chi2(1) from Omori, Chib, Shephard and
# Nakajima (2007, J. Econometrics 140, Table 1): weights, means, variances.
MIXTURE_WEIGHTS = np.array(
    [0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115]
)
MIXTURE_MEANS = np.array(
    [1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384, -14.65000]
)
MIXTURE_VARS = np.array(
    [0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342]
)


@dataclass(frozen=True)
class NonCenteredRegressionData:
    """
    Inputs of one non-centered SV update for R processes.

    ``indicators`` holds 0-based mixture component labels (0..9).
    """

    eps_tilde: np.ndarray
    omega_tilde: np.ndarray
    indicators: np.ndarray
    observed: bool = True

    def adjusted(self, means=MIXTURE_MEANS, variances=MIXTURE_VARS):
        """Mixture-corrected responses and their variances.

        Unobserved data get infinite variance, so every update reduces to
        its prior.
        """
        if not self.observed:
            return np.zeros_like(self.eps_tilde), np.full(self.eps_tilde.shape, np.inf)
        return self.eps_tilde - means[self.indicators], variances[self.indicators]


def transform_residuals(residuals) -> np.ndarray:
    """``log(r**2 + 1e-10)``, elementwise."""
    r = np.asarray(residuals, dtype=float)
    return np.log(r * r + OFFSET)


def to_noncentered(path, mu, sqrt_theta):
    return (np.asarray(path) - mu) / sqrt_theta


def to_centered(omega_tilde, mu, sqrt_theta):
    return mu + sqrt_theta * np.asarray(omega_tilde)


def indicator_probabilities(eps_tilde, path, weights=MIXTURE_WEIGHTS, means=MIXTURE_MEANS, variances=MIXTURE_VARS):
    """Discrete posterior over mixture components, shape ``eps_tilde.shape + (K,)``."""
    d = np.asarray(eps_tilde, float)[..., None] - np.asarray(path, float)[..., None] - means
    logp = np.log(weights) - 0.5 * np.log(variances) - 0.5 * d * d / variances
    logp -= logp.max(axis=-1, keepdims=True)
    p = np.exp(logp)
    return p / p.sum(axis=-1, keepdims=True)


def sample_indicators(eps_tilde, path, rng: np.random.Generator, weights=MIXTURE_WEIGHTS,
                      means=MIXTURE_MEANS, variances=MIXTURE_VARS) -> np.ndarray:
    """Draw each component label from its exact discrete conditional."""
    prob = indicator_probabilities(eps_tilde, path, weights, means, variances)
    cum = np.cumsum(prob, axis=-1)
    u = rng.random(prob.shape[:-1])[..., None]
    idx = (u > cum).sum(axis=-1)
    return np.minimum(idx, prob.shape[-1] - 1)


def sample_logvol_path(data: NonCenteredRegressionData, mu, rho, sqrt_theta, rng: np.random.Generator):
    """
    Joint draw of the standardized paths, then the centered log-variances.

    Returns ``(omega_tilde, path)``, both T x R.
    """
    y, v = data.adjusted()
    y = y - mu
    s = np.asarray(sqrt_theta, float)
    rho = np.asarray(rho, float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(s)) and np.all(np.isfinite(rho))):
        raise ValueError("non-finite input to the log-volatility sampler")
    z = rng.standard_normal(y.shape)
    w = sv_smoother_kernel(np.ascontiguousarray(y), np.ascontiguousarray(v), s.copy(), rho.copy(), z)
    return w, mu + s * w


def _ar1_loglik(w, rho):
    # log N(w_1; 0, 1/(1-rho^2)) + sum log N(w_t; rho w_{t-1}, 1), constants dropped
    e = w[1:] - rho * w[:-1]
    return 0.5 * np.log(1.0 - rho * rho) - 0.5 * (1.0 - rho * rho) * w[0] ** 2 - 0.5 * np.sum(e * e, axis=0)


def log_rho_prior(rho, cfg: ModelConfig):
    """Beta log-density of the persistence under the configured support."""
    rho = np.asarray(rho, float)
    a, b = cfg.rho_prior_a, cfg.rho_prior_b
    u = rho if cfg.rho_prior_support == "unit" else 0.5 * (rho + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (a - 1) * np.log(u) + (b - 1) * np.log1p(-u) - (gammaln(a) + gammaln(b) - gammaln(a + b))
        if cfg.rho_prior_support == "symmetric":
            out = out - np.log(2.0)
    return np.where((u > 0) & (u < 1), out, -np.inf)


def _rho_to_unit(rho, cfg):
    return rho if cfg.rho_prior_support == "unit" else 0.5 * (rho + 1.0)


def _unit_to_rho(u, cfg):
    return u if cfg.rho_prior_support == "unit" else 2.0 * u - 1.0


def sample_rho(w, rho, cfg: ModelConfig, rng: np.random.Generator, adapt: Optional[AdaptiveScale] = None):
    """
    Random-walk Metropolis-Hastings on the logit of the persistence.

    Returns ``(rho, accepted)``.
    """
    rho = np.asarray(rho, float)
    R = rho.size
    scale = adapt.scale if adapt is not None else np.full(R, 0.5)
    x = logit(_rho_to_unit(rho, cfg))
    xp = x + scale * rng.standard_normal(R)
    up = expit(xp)
    rp = _unit_to_rho(up, cfg)
    u = _rho_to_unit(rho, cfg)
    # log target in logit space includes the Jacobian u (1 - u)
    cur = _ar1_loglik(w, rho) + log_rho_prior(rho, cfg) + np.log(u) + np.log1p(-u)
    ok = (up > 0) & (up < 1) & (np.abs(rp) < 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        prop = _ar1_loglik(w, np.where(ok, rp, 0.0)) + log_rho_prior(rp, cfg) + np.log(up) + np.log1p(-up)
    prop = np.where(ok, prop, -np.inf)
    acc = np.log(rng.random(R)) < prop - cur
    if adapt is not None:
        adapt.update(acc)
    return np.where(acc, rp, rho), acc


def sample_sv_params(data: NonCenteredRegressionData, local_scales, cfg: ModelConfig, rng: np.random.Generator):
    """
    Joint conjugate draw of ``(mu, sqrt_theta)`` from the auxiliary regression
    ``eps_tilde - m_s = mu + sqrt_theta * omega_tilde + N(0, v_s)``.

    Priors: ``mu ~ N(0, mu_prior_var)``, ``sqrt_theta ~ N(0, B)``.
    """
    y, v = data.adjusted()
    w = data.omega_tilde
    prec_w = 1.0 / v
    B = np.asarray(local_scales, float)
    p11 = prec_w.sum(axis=0) + 1.0 / cfg.mu_prior_var
    p12 = (prec_w * w).sum(axis=0)
    p22 = (prec_w * w * w).sum(axis=0) + 1.0 / B
    r1 = (prec_w * y).sum(axis=0)
    r2 = (prec_w * w * y).sum(axis=0)
    det = p11 * p22 - p12 * p12
    c11 = p22 / det
    c12 = -p12 / det
    c22 = p11 / det
    m1 = c11 * r1 + c12 * r2
    m2 = c12 * r1 + c22 * r2
    l11 = np.sqrt(c11)
    l21 = c12 / l11
    l22 = np.sqrt(np.maximum(c22 - l21 * l21, 0.0))
    z = rng.standard_normal((2, B.size))
    mu = m1 + l11 * z[0]
    st = m2 + l21 * z[0] + l22 * z[1]
    return mu, st


def interweave_centered(data: NonCenteredRegressionData, mu, rho, sqrt_theta, local_scales,
                        cfg: ModelConfig, rng: np.random.Generator):
    """
    Ancillarity-sufficiency interweaving step in the centered parameterization.

    Redraws ``mu`` and ``theta`` given the centered path; the sign of
    ``sqrt_theta`` is kept. Returns ``(mu, sqrt_theta, omega_tilde)``.
    """
    h = mu + sqrt_theta * data.omega_tilde
    T, R = h.shape
    mu = np.array(mu, float)
    st = np.array(sqrt_theta, float)
    for r in range(R):
        th = st[r] ** 2
        if th == 0.0:
            # includes scales whose square underflows
            continue
        rr = rho[r]
        # mu | h, theta with stationary start
        a = np.concatenate([[np.sqrt(1 - rr * rr)], np.full(T - 1, 1 - rr)])
        b = np.concatenate([[np.sqrt(1 - rr * rr) * h[0, r]], h[1:, r] - rr * h[:-1, r]])
        prec = a @ a / th + 1.0 / cfg.mu_prior_var
        mean = (a @ b / th) / prec
        mu[r] = mean + rng.standard_normal() / np.sqrt(prec)
        d = h[:, r] - mu[r]
        S = (1 - rr * rr) * d[0] ** 2 + np.sum((d[1:] - rr * d[:-1]) ** 2)
        if not S > 0.0:
            # path numerically flat: keep theta, the mu step alone is still valid
            continue
        th_new = sample_gig(0.5 - 0.5 * T, S, 1.0 / local_scales[r], rng)
        st[r] = np.sign(st[r]) * np.sqrt(th_new)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(st != 0.0, (h - mu) / st, data.omega_tilde)
    return mu, st, w


def sample_constant_variances(residuals, shape0: float, scale0: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse-Gamma conjugate draw per column; returns log-variances."""
    r = np.asarray(residuals, float)
    T = r.shape[0]
    shape = shape0 + 0.5 * T
    scale = scale0 + 0.5 * np.sum(r * r, axis=0)
    return np.log(scale / rng.gamma(shape, 1.0, size=r.shape[1]))


def update_sv_block(block: SvBlock, residuals, local_scales, cfg: ModelConfig, rng: np.random.Generator,
                    adapt: Optional[AdaptiveScale] = None, observed: bool = True) -> SvBlock:
    """
    One full SV update (indicators, path, level/scale, persistence).

    With ``cfg.sv_enabled`` false the block is replaced by conjugate
    constant-variance draws. ``observed=False`` drops the residual
    likelihood (prior simulation).
    """
    residuals = np.asarray(residuals, float)
    if residuals.shape != block.path.shape:
        raise ValueError(f"residuals {residuals.shape} vs SV paths {block.path.shape}")
    if not cfg.sv_enabled:
        r = residuals if observed else residuals[:0]
        lv = sample_constant_variances(r, cfg.homo_prior_shape, cfg.homo_prior_scale, rng)
        return SvBlock(lv, block.rho, np.zeros_like(lv), np.tile(lv, (residuals.shape[0], 1)))
    eps = transform_residuals(residuals)
    ind = sample_indicators(eps, block.path, rng)
    data = NonCenteredRegressionData(eps, np.zeros_like(eps), ind, observed)
    w, _ = sample_logvol_path(data, block.mu, block.rho, block.sqrt_theta, rng)
    data = replace(data, omega_tilde=w)
    mu, st = sample_sv_params(data, local_scales, cfg, rng)
    if cfg.interweave:
        mu, st, w = interweave_centered(data, mu, block.rho, st, local_scales, cfg, rng)
    rho, _ = sample_rho(w, block.rho, cfg, rng, adapt)
    return SvBlock(mu, rho, st, mu + st * w)
