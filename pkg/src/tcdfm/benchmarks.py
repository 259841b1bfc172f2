"""
Competing gap estimators and benchmark models.

HP and Hamilton filters, cross-country aggregation, plug-in DFMs that hold
the gap at a filter estimate, unobserved-components models as restricted
configurations of the main sampler, and a conjugate Bayesian AR(1).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import solveh_banded
from scipy.special import gammaln

from .model import DataPanel, ModelConfig
from .sampler import ChainOutput, SweepContext, run_chain

__all__ = [
    "GapEstimate",
    "BenchmarkModelSpec",
    "Ar1Posterior",
    "hp_filter",
    "hamilton_filter",
    "aggregate_panel",
    "fit_plugin_dfm",
    "fit_ucp",
    "fit_ar1",
    "panel_gap",
]


@dataclass(frozen=True)
class GapEstimate:
    """
    Filter output. ``cycle`` and ``trend`` are NaN where undefined (the
    first ``h + p - 1`` points of the Hamilton filter).
    """

    method: str
    cycle: np.ndarray
    trend: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def first_valid(self) -> int:
        ok = np.flatnonzero(np.isfinite(self.cycle))
        return int(ok[0]) if ok.size else len(self.cycle)


@dataclass(frozen=True)
class BenchmarkModelSpec:
    """
    One competing forecast model.

    ``kind`` is one of ``DFM``, ``AR1``, ``UCP-single``, ``UCP-aggregate``,
    ``DFM-plugin-HP``, ``DFM-plugin-Hamilton``.
    """

    kind: str
    sv: bool = True
    label: Optional[str] = None

    KINDS = ("DFM", "AR1", "UCP-single", "UCP-aggregate", "DFM-plugin-HP", "DFM-plugin-Hamilton")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; choose from {self.KINDS}")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "AR1":
            return "AR1"
        return f"{self.kind}-SV" if self.sv else self.kind

    @property
    def scope(self) -> str:
        if self.kind in ("DFM", "DFM-plugin-HP", "DFM-plugin-Hamilton"):
            return "multi-country"
        if self.kind == "UCP-single":
            return "single-country"
        if self.kind == "UCP-aggregate":
            return "EA-level"
        return "benchmark"


def hp_filter(series, lam: float = 1600.0) -> GapEstimate:
    """
    Hodrick-Prescott filter.

    The trend solves ``(I + lam D'D) trend = series`` with ``D`` the second
    difference operator; the system is pentadiagonal and solved in banded
    form.
    """
    y = np.asarray(series, dtype=float)
    T = y.size
    if T < 4:
        raise ValueError(f"HP filter needs at least 4 observations, got {T}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    # upper banded storage of I + lam D'D
    diag = np.full(T, 6.0)
    diag[[0, -1]] = 1.0
    diag[[1, -2]] = 5.0
    off1 = np.full(T - 1, -4.0)
    off1[[0, -1]] = -2.0
    off2 = np.ones(T - 2)
    ab = np.zeros((3, T))
    ab[0, 2:] = lam * off2
    ab[1, 1:] = lam * off1
    ab[2] = 1.0 + lam * diag
    trend = solveh_banded(ab, y)
    return GapEstimate("HP", y - trend, trend, {"lambda": lam})


def hamilton_filter(series, h: int = 8, p: int = 4, strict: bool = False) -> GapEstimate:
    """
    Regression filter: the cycle at t is the residual of ``series_t`` on a
    constant and ``series_{t-h}, ..., series_{t-h-p+1}``.

    Collinear regressors (e.g. an exactly linear series) are handled with the
    minimum-norm least-squares solution, which still fits the span exactly;
    ``strict=True`` raises instead.
    """
    y = np.asarray(series, dtype=float)
    T = y.size
    if h < 1 or p < 1:
        raise ValueError("h and p must be positive")
    if T <= h + p:
        raise ValueError(f"Hamilton filter needs T > h + p = {h + p}, got T = {T}")
    start = h + p - 1
    rows = np.arange(start, T)
    X = np.column_stack([np.ones(rows.size)] + [y[rows - h - j] for j in range(p)])
    coef, _, rank, sv = np.linalg.lstsq(X, y[rows], rcond=None)
    if strict and rank < X.shape[1]:
        raise ValueError(f"collinear Hamilton regressors (rank {rank} < {X.shape[1]})")
    fit = X @ coef
    cycle = np.full(T, np.nan)
    trend = np.full(T, np.nan)
    cycle[rows] = y[rows] - fit
    trend[rows] = fit
    return GapEstimate("Hamilton", cycle, trend, {"h": h, "p": p, "coef": coef, "rank": int(rank)})


def aggregate_panel(panel: DataPanel, label: str = "EA") -> DataPanel:
    """Unweighted cross-country mean of output and inflation."""
    return DataPanel(panel.dates, (label,), panel.y.mean(axis=1), panel.pi.mean(axis=1))


def panel_gap(panel: DataPanel, method: str, **kwargs) -> GapEstimate:
    """Filter the cross-country mean of output with ``method`` in {"hp", "hamilton"}."""
    agg = panel.y.mean(axis=1)
    if method.lower() == "hp":
        return hp_filter(agg, **kwargs)
    if method.lower() == "hamilton":
        return hamilton_filter(agg, **kwargs)
    raise ValueError(f"unknown gap filter {method!r}")


def fit_plugin_dfm(panel: DataPanel, ghat, cfg: ModelConfig, rng: np.random.Generator,
                   **chain_kwargs) -> ChainOutput:
    """
    Run the sampler with the gap held fixed at ``ghat``.

    Undefined leading points of ``ghat`` are trimmed together with the panel.
    Trends are drawn by FFBS on the data net of the loaded gap; loadings,
    volatilities and the cycle parameters are updated as usual.
    """
    g = np.asarray(getattr(ghat, "cycle", ghat), dtype=float)
    if g.size != panel.T:
        raise ValueError(f"gap estimate has {g.size} points, panel has {panel.T}")
    ok = np.flatnonzero(np.isfinite(g))
    if ok.size == 0:
        raise ValueError("gap estimate is undefined everywhere")
    start = int(ok[0])
    if not np.all(np.isfinite(g[start:])):
        raise ValueError("gap estimate has interior missing values")
    sub = panel.tail(start) if start else panel
    g = g[start:]
    cfg = replace(cfg, N=sub.N, T=sub.T)
    ctx = SweepContext(fixed_gap=g)
    return run_chain(sub, cfg, rng, context=ctx, **chain_kwargs)


def fit_ucp(panel: DataPanel, cfg: ModelConfig, rng: np.random.Generator, **chain_kwargs) -> ChainOutput:
    """Single-series unobserved-components model: the main sampler with N = 1, q = 0."""
    if panel.N != 1:
        raise ValueError("UCP runs on a single-country panel; use select() or aggregate_panel()")
    return run_chain(panel, replace(cfg, N=1, T=panel.T, q=0), rng, **chain_kwargs)


@dataclass(frozen=True)
class Ar1Posterior:
    """
    Normal-inverse-Gamma posterior of ``x_t = c + rho x_{t-1} + e_t``.

    ``coef | s2 ~ N(mean, s2 * cov)``, ``s2 ~ IG(shape, scale)``.
    """

    mean: np.ndarray
    cov: np.ndarray
    shape: float
    scale: float
    last: float

    def sample(self, n: int, rng: np.random.Generator):
        s2 = self.scale / rng.gamma(self.shape, 1.0, size=n)
        L = np.linalg.cholesky(self.cov)
        coef = self.mean + (rng.standard_normal((n, 2)) @ L.T) * np.sqrt(s2)[:, None]
        return coef[:, 0], coef[:, 1], s2

    def predictive_moments(self, H: int, n: int, rng: np.random.Generator):
        """
        Per-draw Gaussian predictive moments for horizons 1..H.

        Returns ``(means, variances)``, each (n, H).
        """
        c, rho, s2 = self.sample(n, rng)
        means = np.empty((n, H))
        var = np.empty((n, H))
        m = np.full(n, self.last)
        v = np.zeros(n)
        for h in range(H):
            m = c + rho * m
            v = rho * rho * v + s2
            means[:, h] = m
            var[:, h] = v
        return means, var

    def one_step_logpdf(self, x: float) -> float:
        """Closed-form Student-t one-step predictive log density."""
        z = np.array([1.0, self.last])
        loc = z @ self.mean
        sc2 = self.scale / self.shape * (1.0 + z @ self.cov @ z)
        nu = 2.0 * self.shape
        r = (x - loc) ** 2 / (nu * sc2)
        return float(
            gammaln(0.5 * (nu + 1)) - gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi * sc2)
            - 0.5 * (nu + 1) * np.log1p(r)
        )


def fit_ar1(series, prior_precision: float = 1e-4, shape0: float = 0.01, scale0: float = 0.01) -> Ar1Posterior:
    """
    Conjugate Bayesian AR(1) with intercept.

    Prior ``coef | s2 ~ N(0, s2 / prior_precision I)`` and
    ``s2 ~ IG(shape0, scale0)``.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 8:
        raise ValueError(f"AR(1) needs at least 8 observations, got {x.size}")
    if np.ptp(x) == 0:
        raise ValueError("constant series: AR(1) regression is degenerate")
    X = np.column_stack([np.ones(x.size - 1), x[:-1]])
    y = x[1:]
    prec0 = prior_precision * np.eye(2)
    prec = X.T @ X + prec0
    cov = np.linalg.inv(prec)
    mean = cov @ (X.T @ y)
    shape = shape0 + 0.5 * y.size
    scale = scale0 + 0.5 * (y @ y - mean @ prec @ mean)
    return Ar1Posterior(mean, cov, float(shape), float(scale), float(x[-1]))
