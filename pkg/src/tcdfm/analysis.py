"""Posterior summaries: gap bands, inflation shock decomposition, gap IRFs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import DataPanel, ParameterDraw

__all__ = [
    "QUANTILES",
    "GapSummary",
    "DecompositionRecord",
    "IrfResult",
    "gap_summary",
    "historical_decomposition",
    "decompose_draw",
    "gap_impulse_path",
    "irf_gap",
]

QUANTILES = (0.16, 0.5, 0.84)


def _draws(chain) -> Sequence[ParameterDraw]:
    draws = getattr(chain, "draws", chain)
    if len(draws) == 0:
        raise ValueError("chain has no retained draws")
    return draws


@dataclass(frozen=True)
class GapSummary:
    """Pointwise 16/50/84 percent quantiles of the gap and its shock variance."""

    gap_lower: np.ndarray
    gap_median: np.ndarray
    gap_upper: np.ndarray
    vol_lower: np.ndarray
    vol_median: np.ndarray
    vol_upper: np.ndarray


def gap_summary(chain) -> GapSummary:
    """Quantiles over retained draws of ``g_t`` and ``exp(omega_g,t)``."""
    draws = _draws(chain)
    N = draws[0].N
    g = np.array([d.states.g for d in draws])
    v = np.array([np.exp(d.sv_omega.path[:, 2 * N]) for d in draws])
    gq = np.quantile(g, QUANTILES, axis=0)
    vq = np.quantile(v, QUANTILES, axis=0)
    return GapSummary(gq[0], gq[1], gq[2], vq[0], vq[1], vq[2])


@dataclass(frozen=True)
class DecompositionRecord:
    """
    Per-draw inflation shock contributions, arrays of shape (D, T, N).

    ``target`` is inflation net of the lagged trend and the predictable part
    of the gap; the three shock arrays sum to it.
    """

    target: np.ndarray
    euro_area_trend_shock: np.ndarray
    gap_shock: np.ndarray
    country_shock: np.ndarray

    def medians(self) -> dict:
        return {
            name: np.median(getattr(self, name), axis=0)
            for name in ("target", "euro_area_trend_shock", "gap_shock", "country_shock")
        }

    def max_additivity_error(self) -> float:
        total = self.euro_area_trend_shock + self.gap_shock + self.country_shock
        return float(np.max(np.abs(total - self.target)))


def decompose_draw(draw: ParameterDraw, panel: DataPanel):
    """Return ``(target, trend_shock, gap_shock, country_shock)`` for one draw (T x N each)."""
    st = draw.states
    ld = draw.loadings
    tau_prev = np.vstack([st.tau_pi0, st.tau_pi[:-1]])
    g1, g2 = st.lagged_gap()
    target = panel.pi - tau_prev - np.outer(draw.cycle.phi1 * g1 + draw.cycle.phi2 * g2, ld.beta)
    trend = draw.factors.z_pi @ ld.Lambda_pi.T
    gap = np.outer(st.gap_shocks(draw.cycle), ld.beta)
    country = target - trend - gap
    return target, trend, gap, country


def historical_decomposition(chain, panel: DataPanel) -> DecompositionRecord:
    """
    Split inflation into area-wide trend shocks ``[Lambda_pi z_pi,t]_i``, gap
    shocks ``beta_i eta_g,t`` and country shocks (trend plus measurement
    idiosyncratic terms, taken as the remainder).
    """
    draws = _draws(chain)
    parts = [decompose_draw(d, panel) for d in draws]
    return DecompositionRecord(*(np.array([p[k] for p in parts]) for k in range(4)))


@dataclass(frozen=True)
class IrfResult:
    """
    Responses to a one standard deviation fall in the gap shock.

    ``gap`` is (D, H+1); ``inflation`` and ``output`` are (D, H+1, N).
    ``quantiles`` maps each of those names to an array with a leading axis
    over ``QUANTILES``. The ``peak_*`` arrays (D, N) hold each draw's
    largest-magnitude country response and the horizon where it occurs.
    """

    horizons: np.ndarray
    gap: np.ndarray
    inflation: np.ndarray
    output: np.ndarray
    quantiles: dict
    peak_inflation: np.ndarray
    peak_inflation_horizon: np.ndarray
    peak_output: np.ndarray
    peak_output_horizon: np.ndarray


def gap_impulse_path(phi1: float, phi2: float, impact: float, H: int) -> np.ndarray:
    """``g_0 = impact``, ``g_h = phi1 g_{h-1} + phi2 g_{h-2}`` for h = 1..H."""
    out = np.zeros(H + 1)
    out[0] = impact
    if H >= 1:
        out[1] = phi1 * out[0]
    for h in range(2, H + 1):
        out[h] = phi1 * out[h - 1] + phi2 * out[h - 2]
    return out


def irf_gap(chain, H: int, shock: str = "period_T") -> IrfResult:
    """
    Impulse responses to an unexpected one standard deviation decrease of the
    gap shock.

    Parameters
    ----------
    chain : ChainOutput or sequence of ParameterDraw
    H : int
        Last horizon (>= 1).
    shock : {"period_T", "unconditional"}
        Size of the standard deviation: the draw's last-period gap volatility
        ``exp(omega_g,T / 2)`` or its level ``exp(mu / 2)``.
    """
    if H < 1:
        raise ValueError("H must be at least 1")
    if shock not in ("period_T", "unconditional"):
        raise ValueError(f"unknown shock size convention {shock!r}")
    draws = _draws(chain)
    N = draws[0].N
    gap = np.empty((len(draws), H + 1))
    alpha = np.empty((len(draws), N))
    beta = np.empty((len(draws), N))
    for k, d in enumerate(draws):
        if shock == "period_T":
            sd = np.exp(0.5 * d.sv_omega.path[-1, 2 * N])
        else:
            sd = np.exp(0.5 * d.sv_omega.mu[2 * N])
        gap[k] = gap_impulse_path(d.cycle.phi1, d.cycle.phi2, -sd, H)
        alpha[k] = d.loadings.alpha
        beta[k] = d.loadings.beta
    infl = gap[:, :, None] * beta[:, None, :]
    outp = gap[:, :, None] * alpha[:, None, :]
    pi_h = np.abs(infl).argmax(axis=1)
    y_h = np.abs(outp).argmax(axis=1)
    q = {
        "gap": np.quantile(gap, QUANTILES, axis=0),
        "inflation": np.quantile(infl, QUANTILES, axis=0),
        "output": np.quantile(outp, QUANTILES, axis=0),
    }
    return IrfResult(
        horizons=np.arange(H + 1),
        gap=gap,
        inflation=infl,
        output=outp,
        quantiles=q,
        peak_inflation=np.take_along_axis(infl, pi_h[:, None, :], axis=1)[:, 0],
        peak_inflation_horizon=pi_h,
        peak_output=np.take_along_axis(outp, y_h[:, None, :], axis=1)[:, 0],
        peak_output_horizon=y_h,
    )
