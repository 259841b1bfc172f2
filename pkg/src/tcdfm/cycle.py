"""
Polar-coordinate AR(2) cycle: priors, likelihood and the joint MH update.

``Q`` has a Beta prior on (0, 1); the period ``gamma`` has a Beta prior on
``(gamma - gamma_L) / (gamma_H - gamma_L)``. The sampler works on
``(logit Q, logit u)`` with the corresponding Jacobians.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.special import betaln, expit, logit

from .adapt import AdaptiveScale
from .model import CycleParams, LatentStatePath, ModelConfig

__all__ = [
    "polar_to_ar",
    "log_prior_cycle",
    "sample_prior_cycle",
    "prior_moments",
    "gap_loglik",
    "mh_step_cycle",
    "ar2_roots",
]

_LOG_2PI = math.log(2.0 * math.pi)


def polar_to_ar(Q: float, gamma: float) -> tuple[float, float]:
    """``(2 Q cos(2 pi / gamma), -Q**2)``; requires ``0 <= Q < 1`` and ``gamma > 2``."""
    if not (0.0 <= Q < 1.0):
        raise ValueError(f"Q must lie in [0, 1), got {Q}")
    if not gamma > 2.0:
        raise ValueError(f"gamma must exceed 2, got {gamma}")
    return 2.0 * Q * math.cos(2.0 * math.pi / gamma), -Q * Q


def ar2_roots(phi1: float, phi2: float) -> np.ndarray:
    """Roots of ``z**2 - phi1 z - phi2`` (inverse characteristic roots)."""
    return np.roots([1.0, -phi1, -phi2])


def _log_beta_pdf(x, a, b):
    return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)


def log_prior_cycle(Q, gamma, cfg: ModelConfig):
    """Joint log prior density of ``(Q, gamma)``; ``-inf`` outside the support."""
    Q = np.asarray(Q, float)
    gamma = np.asarray(gamma, float)
    width = cfg.gamma_H - cfg.gamma_L
    u = (gamma - cfg.gamma_L) / width
    inside = (Q > 0) & (Q < 1) & (u > 0) & (u < 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = (
            _log_beta_pdf(np.where(inside, Q, 0.5), cfg.a_Q, cfg.b_Q)
            + _log_beta_pdf(np.where(inside, u, 0.5), cfg.a_gamma, cfg.b_gamma)
            - np.log(width)
        )
    out = np.where(inside, lp, -np.inf)
    return float(out) if out.ndim == 0 else out


def sample_prior_cycle(cfg: ModelConfig, rng: np.random.Generator, size=None):
    """Independent prior draws of ``(Q, gamma)``."""
    Q = rng.beta(cfg.a_Q, cfg.b_Q, size=size)
    u = rng.beta(cfg.a_gamma, cfg.b_gamma, size=size)
    return Q, cfg.gamma_L + (cfg.gamma_H - cfg.gamma_L) * u


def prior_moments(cfg: ModelConfig) -> dict:
    """Closed-form prior means and standard deviations of ``Q`` and ``gamma``."""
    def _beta(a, b):
        m = a / (a + b)
        return m, math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1)))

    mq, sq = _beta(cfg.a_Q, cfg.b_Q)
    mu, su = _beta(cfg.a_gamma, cfg.b_gamma)
    w = cfg.gamma_H - cfg.gamma_L
    return {"Q_mean": mq, "Q_sd": sq, "gamma_mean": cfg.gamma_L + w * mu, "gamma_sd": w * su}


def gap_loglik(cycle: CycleParams, g, g_init, gap_vars) -> float:
    """Gaussian log-likelihood of the gap path under time-varying shock variances."""
    full = np.concatenate([np.asarray(g_init, float)[::-1], np.asarray(g, float)])
    e = full[2:] - cycle.phi1 * full[1:-1] - cycle.phi2 * full[:-2]
    v = np.asarray(gap_vars, float)
    return float(-0.5 * np.sum(_LOG_2PI + np.log(v) + e * e / v))


def _to_x(cycle: CycleParams, cfg):
    u = (cycle.gamma - cfg.gamma_L) / (cfg.gamma_H - cfg.gamma_L)
    return np.array([logit(cycle.Q), logit(u)])


def _from_x(x, cfg):
    Q = float(expit(x[0]))
    u = float(expit(x[1]))
    return Q, cfg.gamma_L + (cfg.gamma_H - cfg.gamma_L) * u, u


def mh_step_cycle(
    current: CycleParams,
    states: LatentStatePath,
    gap_vars,
    cfg: ModelConfig,
    rng: np.random.Generator,
    adapt: Optional[AdaptiveScale] = None,
    flat_likelihood: bool = False,
    proposal: str = "random_walk",
):
    """
    One Metropolis-Hastings update of ``(Q, gamma)``.

    Parameters
    ----------
    current : CycleParams
    states : LatentStatePath
        Supplies ``g`` and the pre-sample values ``g_init``.
    gap_vars : array_like, length T
        Gap shock variances ``exp(omega_g)``.
    adapt : AdaptiveScale, optional
        Two log-scales for the logit-space random walk.
    flat_likelihood : bool
        Replace the gap likelihood by a constant.
    proposal : {"random_walk", "prior"}
        ``"prior"`` is an independence sampler using the prior as proposal.

    Returns
    -------
    (CycleParams, bool)
    """
    def loglik(c):
        return 0.0 if flat_likelihood else gap_loglik(c, states.g, states.g_init, gap_vars)

    if proposal == "prior":
        Qp, gp = sample_prior_cycle(cfg, rng)
        Qp, gp = float(Qp), float(gp)
        if not (0 < Qp < 1 and cfg.gamma_L < gp < cfg.gamma_H):
            return current, False
        cand = CycleParams(Qp, gp)
        log_ratio = loglik(cand) - loglik(current)
    elif proposal == "random_walk":
        x = _to_x(current, cfg)
        scale = adapt.scale if adapt is not None else np.array([0.3, 0.3])
        xp = x + scale * rng.standard_normal(2)
        Qp, gp, up = _from_x(xp, cfg)
        u = (current.gamma - cfg.gamma_L) / (cfg.gamma_H - cfg.gamma_L)
        valid = 0 < Qp < 1 and 0 < up < 1
        if valid:
            cand = CycleParams(Qp, gp)
            log_ratio = (
                loglik(cand) + log_prior_cycle(Qp, gp, cfg) + math.log(Qp * (1 - Qp) * up * (1 - up))
                - loglik(current) - log_prior_cycle(current.Q, current.gamma, cfg)
                - math.log(current.Q * (1 - current.Q) * u * (1 - u))
            )
        else:
            log_ratio = -np.inf
    else:
        raise ValueError(f"unknown proposal {proposal!r}")
    accept = bool(np.log(rng.random()) < log_ratio)
    if adapt is not None and proposal == "random_walk":
        adapt.update(np.array([accept, accept]))
    return (cand if accept else current), accept
