"""
Gibbs sampler: one sweep, chains, restarts and basic diagnostics.

A sweep runs

(i)   states by FFBS with the trend factors integrated out, followed at once
      by a draw of the factors given the new trend shocks;
(ii)  every log-volatility block (measurement, state, factor);
(iii) gap loadings alpha, beta;
(iv)  trend factors z;
(v)   trend loadings Lambda;
(vi)  cycle parameters (Q, gamma) by Metropolis-Hastings;
(vii) local shrinkage scales, then the global scale of each block.
"""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter1d

from . import __version__
from .adapt import AdaptiveScale
from .cycle import mh_step_cycle, prior_moments, sample_prior_cycle
from .factors import sample_measurement_loadings, sample_trend_factor_path, sample_trend_loadings
from .model import (
    CycleParams,
    DataPanel,
    FactorPath,
    LatentStatePath,
    LoadingSet,
    ModelConfig,
    ParameterDraw,
    SvBlock,
    validate_config,
)
from .shrinkage import ShrinkageBlock, sample_global_scale, sample_local_scales
from .statespace import (
    FilterError,
    StateSpaceSystem,
    build_system,
    ffbs_draw,
    kalman_forward,
    stacked_to_path,
)
from .svol import update_sv_block

__all__ = [
    "SamplerError",
    "SweepContext",
    "ChainOutput",
    "initial_draw",
    "gibbs_sweep",
    "run_chain",
    "run_restarts",
    "effective_sample_size",
    "default_threads",
    "measurement_residuals",
    "state_residuals",
]

log = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    """A sweep failed; carries the sweep index and the partial chain."""

    def __init__(self, message, sweep: int, partial: Optional["ChainOutput"] = None):
        super().__init__(f"sweep {sweep}: {message}")
        self.sweep = sweep
        self.partial = partial


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("TCDFM_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SweepContext:
    """
    Mutable per-chain sampler state that is not part of the posterior draw.

    ``fixed_gap`` switches to the plug-in model (gap held at a given path);
    ``prior_only`` masks every likelihood contribution of the data.
    """

    anchor: Optional[np.ndarray] = None
    fixed_gap: Optional[np.ndarray] = None
    prior_only: bool = False
    cycle_adapt: AdaptiveScale = field(default_factory=lambda: AdaptiveScale(2, init=0.3))
    rho_adapt: dict = field(default_factory=dict)
    loglik: float = 0.0
    cycle_accepted: bool = False

    def rho_scale(self, name: str, size: int) -> AdaptiveScale:
        if name not in self.rho_adapt:
            self.rho_adapt[name] = AdaptiveScale(size, init=0.5)
        return self.rho_adapt[name]

    def freeze(self) -> None:
        self.cycle_adapt.freeze()
        for a in self.rho_adapt.values():
            a.freeze()

    def acceptance(self) -> dict:
        out = {"cycle": float(np.nanmean(self.cycle_adapt.acceptance_rate()))}
        for k, a in self.rho_adapt.items():
            out[f"rho_{k}"] = float(np.nanmean(a.acceptance_rate())) if a.proposed.any() else float("nan")
        return out


@dataclass(frozen=True)
class ChainOutput:
    """Retained draws and run metadata."""

    draws: tuple
    loglik: np.ndarray
    acceptance: dict
    manifest: dict
    partial: bool = False

    def __len__(self):
        return len(self.draws)

    def stack(self, getter) -> np.ndarray:
        """Array of ``getter(draw)`` over retained draws."""
        return np.array([getter(d) for d in self.draws])


# ---------------------------------------------------------------------------
# residuals

def measurement_residuals(panel: DataPanel, states: LatentStatePath, loadings: LoadingSet) -> np.ndarray:
    """T x 2N measurement errors ordered ``(y, pi)``."""
    ey = panel.y - states.tau_y - np.outer(states.g, loadings.alpha)
    ep = panel.pi - states.tau_pi - np.outer(states.g, loadings.beta)
    return np.hstack([ey, ep])


def state_residuals(states: LatentStatePath, factors: FactorPath, loadings: LoadingSet, cycle: CycleParams):
    """Idiosyncratic state innovations ``(eps_y, eps_pi, eta_g)``, T x (2N+1)."""
    dy, dpi = states.trend_shocks()
    ey = dy - factors.z_y @ loadings.Lambda_y.T
    ep = dpi - factors.z_pi @ loadings.Lambda_pi.T
    return np.column_stack([ey, ep, states.gap_shocks(cycle)])


# ---------------------------------------------------------------------------
# initialization

def initial_draw(panel: DataPanel, cfg: ModelConfig, rng: Optional[np.random.Generator] = None,
                 dispersion: float = 0.0) -> ParameterDraw:
    """
    Deterministic starting point, optionally perturbed for dispersed restarts.

    Trends are 8-quarter centered moving averages of the data, the gap is the
    cross-country mean of output minus trend, ``alpha = 1``, ``beta = 0.3``,
    log-volatilities sit at log sample variances and ``(Q, gamma)`` at their
    prior means.
    """
    N, T, q = panel.N, panel.T, cfg.q
    tau_y = uniform_filter1d(panel.y, size=8, axis=0, mode="nearest")
    tau_pi = uniform_filter1d(panel.pi, size=8, axis=0, mode="nearest")
    g = np.mean(panel.y - tau_y, axis=1)
    alpha = np.ones(N)
    beta = np.full(N, 0.3)
    pm = prior_moments(cfg)
    Q, gamma = pm["Q_mean"], pm["gamma_mean"]
    if rng is not None and dispersion > 0:
        Qd, gd = sample_prior_cycle(cfg, rng)
        Q, gamma = float(Qd), float(gd)
        alpha[1:] += dispersion * rng.standard_normal(N - 1) * 0.5
        beta += dispersion * rng.standard_normal(N) * 0.3
    lam = np.zeros((N, q))
    lam[:q, :q] = np.eye(q)
    loadings = LoadingSet(alpha, beta, lam, lam.copy())
    states = LatentStatePath(
        tau_y, tau_pi, g, tau_y[0], tau_pi[0], np.zeros(2)
    )
    cycle = CycleParams(Q, gamma)
    factors = FactorPath(np.zeros((T, q)), np.zeros((T, q)))

    def _logvar(x):
        return np.log(np.maximum(np.var(x, axis=0), 1e-8))

    h0 = _logvar(measurement_residuals(panel, states, loadings))
    om0 = _logvar(state_residuals(states, factors, loadings, cycle))
    up0 = np.full(2 * q, float(np.mean(om0[:2 * N]))) if q else np.zeros(0)
    rho0 = 0.8 if cfg.rho_prior_support == "unit" else 0.6
    return ParameterDraw(
        loadings=loadings,
        cycle=cycle,
        sv_h=SvBlock.constant(h0, T, rho0),
        sv_upsilon=SvBlock.constant(up0, T, rho0),
        sv_omega=SvBlock.constant(om0, T, rho0),
        shrink_h=ShrinkageBlock("h", cfg.kappa_h, np.ones(2 * N), 1.0, cfg.e0, cfg.e1),
        shrink_upsilon=ShrinkageBlock("upsilon", cfg.kappa_upsilon, np.ones(max(2 * q, 1)), 1.0, cfg.d0, cfg.d1),
        shrink_omega=ShrinkageBlock("omega", cfg.kappa_omega, np.ones(2 * N + 1), 1.0, cfg.c0, cfg.c1),
        factors=factors,
        states=states,
    )


def _small_sv_start(draw: ParameterDraw, rng: np.random.Generator) -> ParameterDraw:
    # nonzero sqrt(theta) so the non-centered path is identified at the start
    def bump(b: SvBlock):
        if b.size == 0:
            return b
        return replace(b, sqrt_theta=0.05 * np.sign(rng.standard_normal(b.size)))
    return replace(draw, sv_h=bump(draw.sv_h), sv_omega=bump(draw.sv_omega), sv_upsilon=bump(draw.sv_upsilon))


# ---------------------------------------------------------------------------
# one sweep

def _plugin_system(draw: ParameterDraw, cfg: ModelConfig, panel: DataPanel, gap, anchor) -> tuple:
    N = panel.N
    m = 2 * N
    ld = draw.loadings
    obs = np.hstack([panel.y - np.outer(gap, ld.alpha), panel.pi - np.outer(gap, ld.beta)])
    from .statespace import _sigma_path

    sigma = _sigma_path(ld, np.exp(draw.sv_upsilon.path), np.exp(draw.sv_omega.path))[:, :m, :m]
    mean = np.zeros(2 * m)
    if anchor is not None:
        mean[:m] = anchor
        mean[m:] = anchor
    sys = StateSpaceSystem(
        np.eye(m), np.exp(draw.sv_h.path), np.eye(m), np.zeros((m, m)), sigma, mean,
        np.eye(2 * m) * cfg.init_state_var,
    )
    return obs, sys


def _draw_states(draw, panel, cfg, rng, ctx: SweepContext):
    N = panel.N
    mask = np.zeros(panel.T, bool) if ctx.prior_only else None
    if ctx.fixed_gap is None:
        sys = build_system(draw, cfg, ctx.anchor)
        flt = kalman_forward(panel, sys, mask=mask)
        f = ffbs_draw(flt, sys, rng)
        return stacked_to_path(f, N), flt.loglik
    gap = np.asarray(ctx.fixed_gap, float)
    obs, sys = _plugin_system(draw, cfg, panel, gap, ctx.anchor)
    flt = kalman_forward(obs, sys, mask=mask)
    f = ffbs_draw(flt, sys, rng)
    states = LatentStatePath(f[2:, :N], f[2:, N:], gap, f[1, :N], f[1, N:], np.zeros(2))
    return states, flt.loglik


def _draw_factors(draw: ParameterDraw, states: LatentStatePath, rng) -> FactorPath:
    N = states.N
    q = draw.q
    dy, dpi = states.trend_shocks()
    om = np.exp(draw.sv_omega.path)
    up = np.exp(draw.sv_upsilon.path)
    ld = draw.loadings
    z_y = sample_trend_factor_path(dy, ld.Lambda_y, om[:, :N], up[:, :q], rng)
    z_pi = sample_trend_factor_path(dpi, ld.Lambda_pi, om[:, N:2 * N], up[:, q:], rng)
    return FactorPath(z_y, z_pi)


def gibbs_sweep(state: ParameterDraw, panel: DataPanel, cfg: ModelConfig, rng: np.random.Generator,
                context: Optional[SweepContext] = None) -> ParameterDraw:
    """
    One full Gibbs pass (steps i to vii). Returns the new draw; the
    marginal log-likelihood of step (i) is left in ``context.loglik``.
    """
    ctx = context if context is not None else SweepContext(anchor=_anchor(panel, cfg))
    N, q = panel.N, cfg.q
    observed = not ctx.prior_only
    d = state

    # (i) states, then factors given the new trend shocks
    states, ll = _draw_states(d, panel, cfg, rng, ctx)
    ctx.loglik = ll
    d = replace(d, states=states)
    d = replace(d, factors=_draw_factors(d, states, rng))

    # (ii) log-volatilities
    res_h = measurement_residuals(panel, d.states, d.loadings)
    res_om = state_residuals(d.states, d.factors, d.loadings, d.cycle)
    sv_h = update_sv_block(d.sv_h, res_h, d.shrink_h.local_scales, cfg, rng,
                           ctx.rho_scale("h", 2 * N), observed=observed)
    sv_om = update_sv_block(d.sv_omega, res_om, d.shrink_omega.local_scales, cfg, rng,
                            ctx.rho_scale("omega", 2 * N + 1))
    sv_up = d.sv_upsilon
    if q:
        res_up = np.hstack([d.factors.z_y, d.factors.z_pi])
        sv_up = update_sv_block(d.sv_upsilon, res_up, d.shrink_upsilon.local_scales, cfg, rng,
                                ctx.rho_scale("upsilon", 2 * q))
    d = replace(d, sv_h=sv_h, sv_omega=sv_om, sv_upsilon=sv_up)

    # (iii) gap loadings
    alpha, beta = sample_measurement_loadings(
        d.states, panel, d.sv_h.path, rng, cfg.alpha_prior_var, cfg.beta_prior_var, observed=observed
    )
    ld = replace(d.loadings, alpha=alpha, beta=beta)
    d = replace(d, loadings=ld)

    # (iv) trend factors
    d = replace(d, factors=_draw_factors(d, d.states, rng))

    # (v) trend loadings
    if q:
        dy, dpi = d.states.trend_shocks()
        om = np.exp(d.sv_omega.path)
        lam_y = sample_trend_loadings(dy, d.factors.z_y, om[:, :N], ld.Lambda_y, rng, cfg.lambda_prior_var)
        lam_pi = sample_trend_loadings(dpi, d.factors.z_pi, om[:, N:2 * N], ld.Lambda_pi, rng, cfg.lambda_prior_var)
        d = replace(d, loadings=replace(ld, Lambda_y=lam_y, Lambda_pi=lam_pi))

    # (vi) cycle
    gap_vars = np.exp(d.sv_omega.path[:, 2 * N])
    if ctx.prior_only:
        cyc, acc = mh_step_cycle(d.cycle, d.states, gap_vars, cfg, rng, flat_likelihood=True, proposal="prior")
    else:
        cyc, acc = mh_step_cycle(d.cycle, d.states, gap_vars, cfg, rng, adapt=ctx.cycle_adapt)
    ctx.cycle_accepted = acc
    d = replace(d, cycle=cyc)

    # (vii) shrinkage: local scales first, then the global scale
    if cfg.sv_enabled:
        blocks = []
        for blk, sv in ((d.shrink_h, d.sv_h), (d.shrink_omega, d.sv_omega), (d.shrink_upsilon, d.sv_upsilon)):
            if sv.size == 0:
                blocks.append(blk)
                continue
            blk = sample_local_scales(blk, sv.sqrt_theta, rng)
            blocks.append(sample_global_scale(blk, rng))
        d = replace(d, shrink_h=blocks[0], shrink_omega=blocks[1], shrink_upsilon=blocks[2])
    return d


# ---------------------------------------------------------------------------
# chains

def _anchor(panel: DataPanel, cfg: ModelConfig) -> np.ndarray:
    if cfg.init_anchor == "zero":
        return np.zeros(2 * panel.N)
    return np.concatenate([panel.y[0], panel.pi[0]])


def _data_digest(panel: DataPanel) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(np.ascontiguousarray(panel.y).tobytes())
    h.update(np.ascontiguousarray(panel.pi).tobytes())
    h.update("|".join(panel.dates + panel.countries).encode())
    return h.hexdigest()


def effective_sample_size(x) -> float:
    """
    Effective sample size from the initial positive sequence of
    autocorrelation pair sums.
    """
    x = np.asarray(x, float)
    n = x.size
    if n < 4 or np.var(x) == 0:
        return float(n)
    xc = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, m)
    acf = np.fft.irfft(f * np.conj(f), m)[:n]
    acf = acf / acf[0]
    s = 0.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        s += pair
    tau = max(2.0 * s - 1.0, 1.0 / n)
    return float(min(n / tau, n * np.log10(n)))


def _summary_ess(draws) -> dict:
    if len(draws) < 4:
        return {}
    Q = np.array([d.cycle.Q for d in draws])
    gam = np.array([d.cycle.gamma for d in draws])
    g_last = np.array([d.states.g[-1] for d in draws])
    return {"Q": effective_sample_size(Q), "gamma": effective_sample_size(gam), "g_T": effective_sample_size(g_last)}


def run_chain(
    panel: DataPanel,
    cfg: ModelConfig,
    rng: np.random.Generator,
    init: Optional[ParameterDraw] = None,
    context: Optional[SweepContext] = None,
    dispersion: float = 0.0,
    callback=None,
) -> ChainOutput:
    """
    Run ``cfg.sweeps`` Gibbs sweeps and keep every ``thin``-th draw after burn-in.

    Proposal scales adapt during burn-in and are frozen afterward.

    Raises
    ------
    SamplerError
        With the failing sweep index and the draws retained so far.
    """
    validate_config(cfg)
    if cfg.N != panel.N or cfg.T != panel.T:
        raise ValueError(f"config (N={cfg.N}, T={cfg.T}) does not match panel (N={panel.N}, T={panel.T})")
    ctx = context if context is not None else SweepContext()
    if ctx.anchor is None:
        ctx.anchor = _anchor(panel, cfg)
    if init is None:
        d = initial_draw(panel, cfg, rng, dispersion)
        if cfg.sv_enabled:
            d = _small_sv_start(d, rng)
        if ctx.fixed_gap is not None:
            d = replace(d, states=replace(d.states, g=np.asarray(ctx.fixed_gap, float), g_init=np.zeros(2)))
    else:
        d = init
    if cfg.burn_in == 0:
        ctx.freeze()
    draws = []
    lls = []
    started = time.time()
    manifest = {
        "seed": cfg.seed,
        "config_digest": cfg.digest(),
        "data_digest": _data_digest(panel),
        "version": __version__,
        "sweeps": cfg.sweeps,
        "burn_in": cfg.burn_in,
        "thin": cfg.thin,
    }
    for s in range(cfg.sweeps):
        try:
            d = gibbs_sweep(d, panel, cfg, rng, ctx)
        except (FilterError, np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            partial = ChainOutput(tuple(draws), np.array(lls), ctx.acceptance(),
                                  dict(manifest, seconds=time.time() - started), partial=True)
            raise SamplerError(str(exc), s, partial) from exc
        if not np.isfinite(ctx.loglik):
            partial = ChainOutput(tuple(draws), np.array(lls), ctx.acceptance(),
                                  dict(manifest, seconds=time.time() - started), partial=True)
            raise SamplerError("non-finite log-likelihood", s, partial)
        if s + 1 == cfg.burn_in:
            ctx.freeze()
        if s >= cfg.burn_in and (s - cfg.burn_in) % cfg.thin == 0:
            draws.append(d)
            lls.append(ctx.loglik)
        if callback is not None:
            callback(s, d)
    elapsed = time.time() - started
    manifest.update(seconds=elapsed, acceptance=ctx.acceptance(), ess=_summary_ess(draws))
    log.info("chain finished: %d sweeps in %.1fs", cfg.sweeps, elapsed)
    return ChainOutput(tuple(draws), np.array(lls), ctx.acceptance(), manifest)


def _restart_job(args):
    panel, cfg, seed_seq, dispersion = args
    rng = np.random.default_rng(seed_seq)
    return run_chain(panel, cfg, rng, dispersion=dispersion)


def run_restarts(panel: DataPanel, cfg: ModelConfig, n_chains: int, seed: Optional[int] = None,
                 dispersion: float = 1.0, threads: Optional[int] = None) -> list:
    """
    Independent chains from dispersed starting values.

    Each chain gets its own child of ``SeedSequence(seed)``; results do not
    depend on ``threads``.
    """
    seed = cfg.seed if seed is None else seed
    children = np.random.SeedSequence(seed).spawn(n_chains)
    jobs = [(panel, cfg, c, dispersion) for c in children]
    threads = default_threads() if threads is None else threads
    if threads <= 1 or n_chains == 1:
        return [_restart_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_restart_job, jobs))
