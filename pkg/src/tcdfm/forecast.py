"""
Recursive out-of-sample forecasting and scoring.

Each model and origin yields, per retained posterior draw, a Gaussian
predictive density for every country and horizon, conditional on one
simulated future path of the log-volatilities. Point forecasts are medians
of draws simulated from those Gaussians; log predictive scores evaluate the
mixture of the Gaussians (a log-mean-exp over draws).
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .benchmarks import (
    BenchmarkModelSpec,
    aggregate_panel,
    fit_ar1,
    fit_plugin_dfm,
    fit_ucp,
    panel_gap,
)
from .model import DataPanel, ModelConfig, ParameterDraw
from .sampler import default_threads, run_chain
from .statespace import _sigma_path

__all__ = [
    "ForecastRecord",
    "EvalTable",
    "simulate_predictive",
    "predictive_moments",
    "mixture_logpdf",
    "compute_scores",
    "forecast_origin",
    "recursive_evaluation",
    "horizon_label",
]

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)
EA = "EA"


def horizon_label(h: int) -> str:
    return f"{h}-Qt"


# ---------------------------------------------------------------------------
# predictive simulation

def _future_logvols(block, H, rng):
    # AR(1) continuation of every process in a block: (H, R)
    R = block.size
    out = np.empty((H, R))
    prev = block.path[-1]
    for j in range(H):
        prev = block.mu + block.rho * (prev - block.mu) + block.sqrt_theta * rng.standard_normal(R)
        out[j] = prev
    return out


def _terminal_state(draw: ParameterDraw):
    st = draw.states
    fT = np.concatenate([st.tau_y[-1], st.tau_pi[-1], [st.g[-1]]])
    if st.T >= 2:
        fT1 = np.concatenate([st.tau_y[-2], st.tau_pi[-2], [st.g[-2]]])
    else:
        fT1 = np.concatenate([st.tau_y0, st.tau_pi0, [st.g_init[0]]])
    return fT, fT1


def simulate_predictive(draw: ParameterDraw, h: int, rng: np.random.Generator):
    """
    One joint predictive path of ``(y, pi)`` for horizons 1..h.

    Volatilities follow their AR(1) laws, trend shocks include the factor
    structure, the gap follows its AR(2) law and measurement errors are
    added last. Returns ``(y, pi)``, each (h, N).
    """
    N = draw.N
    q = draw.q
    ld = draw.loadings
    hh = _future_logvols(draw.sv_h, h, rng)
    om = _future_logvols(draw.sv_omega, h, rng)
    up = _future_logvols(draw.sv_upsilon, h, rng) if q else np.zeros((h, 0))
    fT, fT1 = _terminal_state(draw)
    tau_y, tau_pi, g = fT[:N].copy(), fT[N:2 * N].copy(), fT[-1]
    g1 = fT1[-1]
    ys = np.empty((h, N))
    ps = np.empty((h, N))
    for j in range(h):
        z = rng.standard_normal(2 * q) * np.exp(0.5 * up[j])
        e = rng.standard_normal(2 * N + 1) * np.exp(0.5 * om[j])
        tau_y = tau_y + ld.Lambda_y @ z[:q] + e[:N]
        tau_pi = tau_pi + ld.Lambda_pi @ z[q:] + e[N:2 * N]
        g, g1 = draw.cycle.phi1 * g + draw.cycle.phi2 * g1 + e[-1], g
        m = rng.standard_normal(2 * N) * np.exp(0.5 * hh[j])
        ys[j] = tau_y + ld.alpha * g + m[:N]
        ps[j] = tau_pi + ld.beta * g + m[N:]
    return ys, ps


def predictive_moments(draw: ParameterDraw, H: int, rng: np.random.Generator):
    """
    Gaussian predictive moments of ``(y, pi)`` given one simulated future
    volatility path.

    Returns ``(means, covs)`` with shapes (H, 2N) and (H, 2N, 2N).
    """
    N = draw.N
    q = draw.q
    M = 2 * N + 1
    ld = draw.loadings
    hh = _future_logvols(draw.sv_h, H, rng)
    om = _future_logvols(draw.sv_omega, H, rng)
    up = _future_logvols(draw.sv_upsilon, H, rng) if q else np.zeros((H, 0))
    sig = _sigma_path(ld, np.exp(up), np.exp(om))
    fT, fT1 = _terminal_state(draw)
    F = np.zeros((2 * M, 2 * M))
    F[:M, :M] = np.eye(M)
    F[M - 1, M - 1] = draw.cycle.phi1
    F[M - 1, 2 * M - 1] = draw.cycle.phi2
    F[M:, :M] = np.eye(M)
    Z = np.zeros((2 * N, M))
    Z[:, :2 * N] = np.eye(2 * N)
    Z[:N, -1] = ld.alpha
    Z[N:, -1] = ld.beta
    x = np.concatenate([fT, fT1])
    P = np.zeros((2 * M, 2 * M))
    means = np.empty((H, 2 * N))
    covs = np.empty((H, 2 * N, 2 * N))
    for j in range(H):
        x = F @ x
        P = F @ P @ F.T
        P[:M, :M] += sig[j]
        means[j] = Z @ x[:M]
        covs[j] = Z @ P[:M, :M] @ Z.T + np.diag(np.exp(hh[j]))
    return means, covs


def mixture_logpdf(x: float, means, variances) -> float:
    """Log density at ``x`` of the equal-weight Gaussian mixture."""
    m = np.asarray(means, float)
    v = np.asarray(variances, float)
    comp = -0.5 * (_LOG_2PI + np.log(v) + (x - m) ** 2 / v)
    return float(logsumexp(comp) - np.log(m.size))


# ---------------------------------------------------------------------------
# records and tables

@dataclass(frozen=True)
class ForecastRecord:
    """
    Predictive distribution for one model, origin, horizon and target.

    ``means``/``variances`` are the per-draw Gaussian components;
    ``draws`` are simulated from them (one per component).
    """

    origin: int
    horizon: int
    model: str
    scope: str
    sv: bool
    country: str
    means: np.ndarray
    variances: np.ndarray
    draws: np.ndarray
    realized: float

    @property
    def median(self) -> float:
        return float(np.median(self.draws))

    def log_score(self) -> float:
        return mixture_logpdf(self.realized, self.means, self.variances)


@dataclass(frozen=True)
class EvalTable:
    """Long-format score table; ``rows`` are dicts keyed by ``COLUMNS``."""

    rows: tuple

    COLUMNS = ("model", "scope", "sv", "horizon", "country", "metric", "value")

    def value(self, model: str, horizon: int, country: str, metric: str) -> float:
        for r in self.rows:
            if (r["model"], r["horizon"], r["country"], r["metric"]) == (model, horizon_label(horizon), country, metric):
                return r["value"]
        raise KeyError((model, horizon, country, metric))

    def models(self) -> list:
        seen = []
        for r in self.rows:
            if r["model"] not in seen:
                seen.append(r["model"])
        return seen

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r["model"], r["scope"], "SV" if r["sv"] else "non-SV", r["horizon"], r["country"],
                        r["metric"], repr(float(r["value"]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalTable":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != cls.COLUMNS:
            raise ValueError(f"evaluation table header must be {','.join(cls.COLUMNS)}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            d = dict(zip(cls.COLUMNS, rec))
            d["sv"] = d["sv"] == "SV"
            d["value"] = float(d["value"])
            rows.append(d)
        return cls(tuple(rows))

    def render(self, country: str = EA) -> str:
        """Text table: horizons as rows, one relative-RMSE / LPS column pair per model."""
        models = [m for m in self.models() if m != "AR1"]
        horizons = sorted({r["horizon"] for r in self.rows}, key=lambda s: int(s.split("-")[0]))
        head = f"{'':6s}" + "".join(f"{m:>24s}" for m in models)
        sub = f"{'':6s}" + "".join(f"{'RMSE':>12s}{'LPS':>12s}" for _ in models)
        lines = [head, sub]
        cell = {(r["model"], r["horizon"], r["metric"]): r["value"] for r in self.rows if r["country"] == country}
        for h in horizons:
            line = f"{h:6s}"
            for m in models:
                rm = cell.get((m, h, "rel_rmse"), np.nan)
                lp = cell.get((m, h, "lps_diff"), np.nan)
                line += f"{rm:12.1f}{lp:12.1f}"
            lines.append(line)
        return "\n".join(lines)


def compute_scores(records: Sequence[ForecastRecord], benchmark: Sequence[ForecastRecord]) -> EvalTable:
    """
    Relative RMSE (percent of the benchmark) and LPS difference per model,
    horizon and target, summed or averaged over origins.

    Raises
    ------
    ValueError
        If a model cell and its benchmark cell cover different origins.
    """
    def cells(recs):
        out = {}
        for r in recs:
            out.setdefault((r.model, r.scope, r.sv, r.horizon, r.country), []).append(r)
        return out

    bench = {}
    for (model, scope, sv, h, c), rs in cells(benchmark).items():
        bench[(h, c)] = {r.origin: r for r in rs}
    rows = []
    all_cells = cells(list(benchmark) + list(records))
    for (model, scope, sv, h, c), rs in all_cells.items():
        if (h, c) not in bench:
            raise ValueError(f"no benchmark records for horizon {h}, target {c}")
        b = bench[(h, c)]
        origins = sorted(r.origin for r in rs)
        if origins != sorted(b):
            raise ValueError(f"origin grids differ for {model} at horizon {h}, target {c}")
        err = np.array([r.median - r.realized for r in rs])
        berr = np.array([b[r.origin].median - b[r.origin].realized for r in rs])
        lps = sum(r.log_score() for r in rs)
        blps = sum(b[r.origin].log_score() for r in rs)
        rmse = np.sqrt(np.mean(err**2))
        brmse = np.sqrt(np.mean(berr**2))
        if all(r is b[r.origin] for r in rs):
            # the benchmark against itself, exact by construction
            rel, dlps = 100.0, 0.0
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = float(100.0 * rmse / brmse)
            dlps = float(lps - blps)
        base = dict(model=model, scope=scope, sv=sv, horizon=horizon_label(h), country=c)
        rows.append(dict(base, metric="rel_rmse", value=rel))
        rows.append(dict(base, metric="lps_diff", value=dlps))
        rows.append(dict(base, metric="rmse", value=float(rmse)))
        rows.append(dict(base, metric="lps", value=float(lps)))
    return EvalTable(tuple(rows))


# ---------------------------------------------------------------------------
# recursive design

def _gaussian_records(spec_name, scope, sv, origin, targets, means, variances, rng, realized_fn):
    # means/variances: dict country -> (D, H)
    recs = []
    for c, m in means.items():
        v = variances[c]
        D, H = m.shape
        sims = m + np.sqrt(v) * rng.standard_normal(m.shape)
        for h in range(1, H + 1):
            if h not in targets:
                continue
            recs.append(ForecastRecord(origin, h, spec_name, scope, sv, c, m[:, h - 1].copy(),
                                       v[:, h - 1].copy(), sims[:, h - 1].copy(), realized_fn(c, targets[h])))
    return recs


def _chain_moments(draws, N, H, n_pred, rng, countries):
    # per-country and EA Gaussian components from a multi-country chain
    reps = int(np.ceil(n_pred / len(draws)))
    w = np.full(N, 1.0 / N)
    means = {c: [] for c in list(countries) + [EA]}
    var = {c: [] for c in list(countries) + [EA]}
    for d in draws:
        for _ in range(reps):
            mu, cov = predictive_moments(d, H, rng)
            mp = mu[:, N:]
            cp = cov[:, N:, N:]
            dv = np.diagonal(cp, axis1=1, axis2=2)
            for i, c in enumerate(countries):
                means[c].append(mp[:, i])
                var[c].append(dv[:, i])
            means[EA].append(mp @ w)
            var[EA].append(np.einsum("i,hij,j->h", w, cp, w))
    return {c: np.array(v) for c, v in means.items()}, {c: np.array(v) for c, v in var.items()}


def _model_cfg(cfg: ModelConfig, panel: DataPanel, sv: bool, q: Optional[int] = None) -> ModelConfig:
    if q is None:
        q = min(cfg.q, panel.N - 1)
    return replace(cfg, N=panel.N, T=panel.T, q=q, sv_enabled=sv, gamma_H=None)


def forecast_origin(panel: DataPanel, origin: int, spec: BenchmarkModelSpec, cfg: ModelConfig,
                    H: int, rng: np.random.Generator, n_pred: int = 500):
    """
    Estimate ``spec`` on the first ``origin`` periods and return its forecast
    records for horizons 1..H whose targets fall inside the panel.

    Only ``panel.head(origin)`` is passed to any estimator.
    """
    if origin < 8:
        raise ValueError(f"origin {origin} leaves fewer than 8 estimation points")
    if origin >= panel.T:
        raise ValueError("origin leaves no hold-out observation")
    est = panel.head(origin)
    targets = {h: origin + h - 1 for h in range(1, H + 1) if origin + h - 1 < panel.T}
    countries = panel.countries
    ea_pi = panel.pi.mean(axis=1)

    def realized(c, t):
        if c == EA:
            return float(ea_pi[t])
        return float(panel.pi[t, countries.index(c)])

    if spec.kind == "AR1":
        n = max(n_pred, 1000)
        series = {c: est.pi[:, i] for i, c in enumerate(countries)}
        series[EA] = est.pi.mean(axis=1)
        m, v = {}, {}
        for c, x in series.items():
            m[c], v[c] = fit_ar1(x).predictive_moments(H, n, rng)
        return _gaussian_records("AR1", "benchmark", False, origin, targets, m, v, rng, realized)

    if spec.kind in ("DFM", "DFM-plugin-HP", "DFM-plugin-Hamilton"):
        mcfg = _model_cfg(cfg, est, spec.sv)
        if spec.kind == "DFM":
            chain = run_chain(est, mcfg, rng)
        else:
            method = "hp" if spec.kind.endswith("HP") else "hamilton"
            chain = fit_plugin_dfm(est, panel_gap(est, method), mcfg, rng)
        m, v = _chain_moments(chain.draws, est.N, H, n_pred, rng, countries)
    elif spec.kind == "UCP-single":
        m, v = {}, {}
        for i, c in enumerate(countries):
            sub = est.select([i])
            chain = fit_ucp(sub, _model_cfg(cfg, sub, spec.sv, q=0), rng)
            mm, vv = _chain_moments(chain.draws, 1, H, n_pred, rng, (c,))
            m[c], v[c] = mm[c], vv[c]
        k = min(x.shape[0] for x in m.values())
        m[EA] = np.mean([m[c][:k] for c in countries], axis=0)
        v[EA] = np.sum([v[c][:k] for c in countries], axis=0) / len(countries) ** 2
    elif spec.kind == "UCP-aggregate":
        agg = aggregate_panel(est)
        chain = fit_ucp(agg, _model_cfg(cfg, agg, spec.sv, q=0), rng)
        mm, vv = _chain_moments(chain.draws, 1, H, n_pred, rng, (EA + "_agg",))
        m, v = {EA: mm[EA]}, {EA: vv[EA]}
    else:  # pragma: no cover - guarded by BenchmarkModelSpec
        raise ValueError(spec.kind)
    return _gaussian_records(spec.name, spec.scope, spec.sv, origin, targets, m, v, rng, realized)


def _origin_job(args):
    panel, origin, k, spec, cfg, H, seed, n_pred = args
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(origin, k)))
    return forecast_origin(panel, origin, spec, cfg, H, rng, n_pred)


def recursive_evaluation(
    panel: DataPanel,
    specs: Sequence[BenchmarkModelSpec],
    cfg: ModelConfig,
    n_holdout: int,
    H: int = 4,
    seed: int = 0,
    n_pred: int = 500,
    threads: Optional[int] = None,
):
    """
    Expanding-window evaluation over the last ``n_holdout`` periods.

    At origin ``o`` every model is fit on periods ``0..o-1`` and forecasts
    ``o-1+h`` for h = 1..H. The AR(1) benchmark is always included. Each
    (origin, model) job draws from its own seed stream, so results do not
    depend on ``threads``.

    Returns
    -------
    (EvalTable, list of ForecastRecord)
    """
    first = panel.T - n_holdout
    if n_holdout < 1:
        raise ValueError("need at least one hold-out observation")
    if first < 8:
        raise ValueError(f"split leaves only {first} estimation points (need >= 8)")
    specs = list(specs)
    if not any(s.kind == "AR1" for s in specs):
        specs = [BenchmarkModelSpec("AR1", sv=False)] + specs
    jobs = [(panel, o, k, s, cfg, H, seed, n_pred) for o in range(first, panel.T) for k, s in enumerate(specs)]
    threads = default_threads() if threads is None else threads
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_origin_job, jobs))
    else:
        results = [_origin_job(j) for j in jobs]
    records = [r for rs in results for r in rs]
    bench = [r for r in records if r.model == "AR1"]
    others = [r for r in records if r.model != "AR1"]
    return compute_scores(others, bench), records
