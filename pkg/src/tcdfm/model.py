"""
Domain types, configuration and the synthetic data generator.

Stacking conventions used everywhere in the package:

* states ``f_t = (tau_y[0..N-1], tau_pi[0..N-1], g)``, so ``M = 2N + 1``;
* measurement log-variances ``h``: ``(y_1..y_N, pi_1..pi_N)``;
* state log-variances ``omega``: same order as ``f_t``;
* factor log-variances ``upsilon``: ``(z_y[0..q-1], z_pi[0..q-1])``.

The placeholder zero for the gap row in the stacked factor vector is not
stored; only the ``2q`` informative factor elements are kept.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .shrinkage import ShrinkageBlock

__all__ = [
    "ConfigError",
    "DataPanel",
    "ModelConfig",
    "validate_config",
    "LoadingSet",
    "CycleParams",
    "SvBlock",
    "SvProcess",
    "FactorPath",
    "LatentStatePath",
    "ParameterDraw",
    "Simulation",
    "simulate_dgp",
    "make_truth",
    "quarter_labels",
    "parse_quarter",
]


class ConfigError(ValueError):
    """Configuration violates an invariant."""


# ---------------------------------------------------------------------------
# dates

_QUARTER_RE = re.compile(r"^\s*(\d{4})\s*[-:/ ]?\s*[Qq]([1-4])\s*$")
_ISO_RE = re.compile(r"^\s*(\d{4})-(\d{2})(?:-(\d{2}))?\s*$")


def parse_quarter(label) -> int:
    """Quarter label -> integer ``4 * year + (quarter - 1)``.

    Accepts ``1997Q2``, ``1997:Q2``, ``1997-Q2`` and ISO dates (month mapped
    to its quarter).
    """
    s = str(label)
    m = _QUARTER_RE.match(s)
    if m:
        return 4 * int(m.group(1)) + int(m.group(2)) - 1
    m = _ISO_RE.match(s)
    if m:
        month = int(m.group(2))
        if not 1 <= month <= 12:
            raise ValueError(f"invalid month in date {label!r}")
        return 4 * int(m.group(1)) + (month - 1) // 3
    raise ValueError(f"unrecognized quarter label {label!r}")


def quarter_labels(start: str, n: int) -> tuple[str, ...]:
    k = parse_quarter(start)
    return tuple(f"{(k + i) // 4}Q{(k + i) % 4 + 1}" for i in range(n))


# ---------------------------------------------------------------------------
# data

@dataclass(frozen=True)
class DataPanel:
    """Balanced T x N panel of output (400 log level) and inflation."""

    dates: tuple
    countries: tuple
    y: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        pi = np.array(self.pi, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if pi.ndim == 1:
            pi = pi[:, None]
        object.__setattr__(self, "dates", tuple(str(d) for d in self.dates))
        object.__setattr__(self, "countries", tuple(str(c) for c in self.countries))
        if y.shape != pi.shape:
            raise ValueError(f"y and pi shapes differ: {y.shape} vs {pi.shape}")
        T, N = y.shape
        if len(self.dates) != T:
            raise ValueError(f"{len(self.dates)} dates for {T} periods")
        if len(self.countries) != N:
            raise ValueError(f"{len(self.countries)} country labels for {N} columns")
        if N < 1:
            raise ValueError("panel needs at least one country")
        if T < 12:
            raise ValueError(f"panel needs T >= 12 periods, got {T}")
        for name, arr in (("y", y), ("pi", pi)):
            bad = np.argwhere(~np.isfinite(arr))
            if bad.size:
                t, i = bad[0]
                raise ValueError(
                    f"missing or non-finite {name} at date {self.dates[t]}, country {self.countries[i]}"
                )
        codes = [parse_quarter(d) for d in self.dates]
        for t in range(1, T):
            if codes[t] != codes[t - 1] + 1:
                raise ValueError(
                    f"dates must increase by one quarter: {self.dates[t - 1]} -> {self.dates[t]}"
                )
        y.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "pi", pi)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def N(self) -> int:
        return self.y.shape[1]

    def head(self, n: int) -> "DataPanel":
        """First ``n`` periods."""
        return DataPanel(self.dates[:n], self.countries, self.y[:n], self.pi[:n])

    def tail(self, start: int) -> "DataPanel":
        return DataPanel(self.dates[start:], self.countries, self.y[start:], self.pi[start:])

    def select(self, countries: Sequence[int]) -> "DataPanel":
        idx = list(countries)
        return DataPanel(
            self.dates, tuple(self.countries[i] for i in idx), self.y[:, idx], self.pi[:, idx]
        )

    def observations(self) -> np.ndarray:
        """T x 2N matrix ``[y, pi]``."""
        return np.hstack([self.y, self.pi])


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ModelConfig:
    """Model dimensions, prior hyperparameters and MCMC settings.

    ``gamma_H`` defaults to ``T``. Loading prior values are variances.
    ``rho_prior_support`` is ``"unit"`` (Beta on rho in (0, 1)) or
    ``"symmetric"`` (Beta on (rho + 1) / 2). ``init_anchor`` selects the
    initial-state prior mean: ``"first_obs"`` or ``"zero"``.
    """

    N: int
    T: int
    q: int = 1
    sv_enabled: bool = True
    a_Q: float = 5.82
    b_Q: float = 2.45
    a_gamma: float = 2.96
    b_gamma: float = 10.7
    gamma_L: float = 2.0
    gamma_H: Optional[float] = None
    kappa_omega: float = 0.1
    kappa_upsilon: float = 0.1
    kappa_h: float = 0.1
    c0: float = 0.01
    c1: float = 0.01
    d0: float = 0.01
    d1: float = 0.01
    e0: float = 0.01
    e1: float = 0.01
    alpha_prior_var: float = 1.0
    beta_prior_var: float = 1.0
    lambda_prior_var: float = 0.1
    mu_prior_var: float = 100.0
    rho_prior_a: float = 25.0
    rho_prior_b: float = 5.0
    rho_prior_support: str = "unit"
    init_state_var: float = 100.0
    init_anchor: str = "first_obs"
    homo_prior_shape: float = 1.0
    homo_prior_scale: float = 0.01
    interweave: bool = False
    irf_shock: str = "period_T"
    sweeps: int = 50000
    burn_in: int = 25000
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.gamma_H is None:
            object.__setattr__(self, "gamma_H", float(self.T))

    @classmethod
    def for_panel(cls, panel: DataPanel, **overrides) -> "ModelConfig":
        q = overrides.pop("q", 1 if panel.N > 1 else 0)
        return cls(N=panel.N, T=panel.T, q=q, **overrides)

    @property
    def M(self) -> int:
        return 2 * self.N + 1

    @property
    def retained(self) -> int:
        return len(range(self.burn_in, self.sweeps, self.thin))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def validate_config(cfg: ModelConfig) -> ModelConfig:
    """Return ``cfg`` unchanged, or raise :class:`ConfigError` naming the first violation."""
    checks = [
        (isinstance(cfg.N, (int, np.integer)) and cfg.N >= 1, "N must be a positive integer"),
        (isinstance(cfg.T, (int, np.integer)) and cfg.T >= 12, "T must be an integer >= 12"),
        (isinstance(cfg.q, (int, np.integer)) and cfg.q >= 0, "q must be a non-negative integer"),
        (cfg.q < cfg.N, f"q < N required (q={cfg.q}, N={cfg.N})"),
        (cfg.a_Q > 0 and cfg.b_Q > 0, "Beta prior on Q needs positive a_Q, b_Q"),
        (cfg.a_gamma > 0 and cfg.b_gamma > 0, "Beta prior on gamma needs positive a_gamma, b_gamma"),
        (cfg.gamma_L > 0, "gamma_L must be positive"),
        (cfg.gamma_L < cfg.gamma_H, f"gamma_L < gamma_H required ({cfg.gamma_L} vs {cfg.gamma_H})"),
        (cfg.kappa_omega > 0, "kappa_omega must be positive"),
        (cfg.kappa_upsilon > 0, "kappa_upsilon must be positive"),
        (cfg.kappa_h > 0, "kappa_h must be positive"),
        (min(cfg.c0, cfg.c1) > 0, "c0, c1 must be positive"),
        (min(cfg.d0, cfg.d1) > 0, "d0, d1 must be positive"),
        (min(cfg.e0, cfg.e1) > 0, "e0, e1 must be positive"),
        (cfg.alpha_prior_var > 0, "alpha_prior_var must be positive"),
        (cfg.beta_prior_var > 0, "beta_prior_var must be positive"),
        (cfg.lambda_prior_var > 0, "lambda_prior_var must be positive"),
        (cfg.mu_prior_var > 0, "mu_prior_var must be positive"),
        (cfg.rho_prior_a > 0 and cfg.rho_prior_b > 0, "rho prior parameters must be positive"),
        (cfg.rho_prior_support in ("unit", "symmetric"), "rho_prior_support must be 'unit' or 'symmetric'"),
        (cfg.init_state_var > 0, "init_state_var must be positive"),
        (cfg.init_anchor in ("first_obs", "zero"), "init_anchor must be 'first_obs' or 'zero'"),
        (cfg.homo_prior_shape > 0 and cfg.homo_prior_scale > 0, "homoscedastic IG prior must be proper"),
        (cfg.irf_shock in ("period_T", "unconditional"), "irf_shock must be 'period_T' or 'unconditional'"),
        (cfg.sweeps >= 1, "sweeps must be >= 1"),
        (0 <= cfg.burn_in < cfg.sweeps, f"burn_in < sweeps required ({cfg.burn_in} vs {cfg.sweeps})"),
        (cfg.thin >= 1, "thin must be >= 1"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
    return cfg


# ---------------------------------------------------------------------------
# parameter containers

def _frozen_array(x, dtype=float):
    a = np.array(x, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LoadingSet:
    alpha: np.ndarray
    beta: np.ndarray
    Lambda_y: np.ndarray
    Lambda_pi: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "beta", "Lambda_y", "Lambda_pi"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        N = self.alpha.size
        for name in ("Lambda_y", "Lambda_pi"):
            lam = getattr(self, name)
            if lam.ndim != 2 or lam.shape[0] != N:
                object.__setattr__(self, name, _frozen_array(lam.reshape(N, -1)))

    @property
    def q(self) -> int:
        return self.Lambda_y.shape[1]

    def identification_errors(self) -> list[str]:
        errs = []
        if not np.isclose(self.alpha[0], 1.0, rtol=0, atol=0):
            errs.append(f"alpha_1 = {self.alpha[0]} != 1")
        q = self.q
        for name in ("Lambda_y", "Lambda_pi"):
            top = getattr(self, name)[:q, :q]
            if not (np.all(np.diag(top) == 1.0) and np.all(np.triu(top, 1) == 0.0)):
                errs.append(f"{name} top {q}x{q} block is not unit lower-triangular")
        return errs


@dataclass(frozen=True)
class CycleParams:
    """Polar parameterization of the AR(2) gap: amplitude Q, period gamma."""

    Q: float
    gamma: float

    @property
    def phi1(self) -> float:
        return 2.0 * self.Q * np.cos(2.0 * np.pi / self.gamma)

    @property
    def phi2(self) -> float:
        return -self.Q**2


@dataclass(frozen=True)
class SvProcess:
    """One log-variance process; ``sqrt_theta`` is the signed innovation SD."""

    mu: float
    rho: float
    sqrt_theta: float
    path: np.ndarray

    @property
    def theta(self) -> float:
        return self.sqrt_theta**2


@dataclass(frozen=True)
class SvBlock:
    """R log-variance processes stored column-wise (``path`` is T x R)."""

    mu: np.ndarray
    rho: np.ndarray
    sqrt_theta: np.ndarray
    path: np.ndarray

    def __post_init__(self):
        for name in ("mu", "rho", "sqrt_theta"):
            object.__setattr__(self, name, _frozen_array(np.atleast_1d(getattr(self, name))))
        path = np.array(self.path, dtype=float)
        if path.ndim == 1:
            path = path[:, None]
        path.setflags(write=False)
        object.__setattr__(self, "path", path)
        if np.any(np.abs(self.rho) >= 1):
            raise ValueError("SV persistence must lie in (-1, 1)")

    @property
    def size(self) -> int:
        return self.mu.size

    @property
    def theta(self) -> np.ndarray:
        return self.sqrt_theta**2

    def __getitem__(self, r: int) -> SvProcess:
        return SvProcess(float(self.mu[r]), float(self.rho[r]), float(self.sqrt_theta[r]), self.path[:, r])

    @classmethod
    def constant(cls, log_var, T: int, rho: float = 0.0) -> "SvBlock":
        lv = np.atleast_1d(np.asarray(log_var, dtype=float))
        return cls(lv, np.full(lv.size, rho), np.zeros(lv.size), np.tile(lv, (T, 1)))

    def variances(self) -> np.ndarray:
        return np.exp(self.path)


@dataclass(frozen=True)
class FactorPath:
    z_y: np.ndarray
    z_pi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z_y", _frozen_array(self.z_y))
        object.__setattr__(self, "z_pi", _frozen_array(self.z_pi))


@dataclass(frozen=True)
class LatentStatePath:
    """Trend and gap histories plus the pre-sample values they start from.

    ``tau_y0``/``tau_pi0`` are the trends at t = 0; ``g_init = (g_0, g_{-1})``.
    """

    tau_y: np.ndarray
    tau_pi: np.ndarray
    g: np.ndarray
    tau_y0: np.ndarray
    tau_pi0: np.ndarray
    g_init: np.ndarray

    def __post_init__(self):
        for name in ("tau_y", "tau_pi", "g", "tau_y0", "tau_pi0", "g_init"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @property
    def T(self) -> int:
        return self.g.size

    @property
    def N(self) -> int:
        return self.tau_y.shape[1]

    @property
    def M(self) -> int:
        return 2 * self.N + 1

    def stacked(self) -> np.ndarray:
        """T x M matrix of ``f_t``."""
        return np.column_stack([self.tau_y, self.tau_pi, self.g])

    def lagged_gap(self):
        """(g_{t-1}, g_{t-2}) aligned with t = 1..T."""
        full = np.concatenate([self.g_init[::-1], self.g])
        return full[1:-1], full[:-2]

    def trend_shocks(self):
        """First differences of the trends, t = 1..T (T x N each)."""
        dy = np.diff(np.vstack([self.tau_y0, self.tau_y]), axis=0)
        dpi = np.diff(np.vstack([self.tau_pi0, self.tau_pi]), axis=0)
        return dy, dpi

    def gap_shocks(self, cycle: CycleParams) -> np.ndarray:
        g1, g2 = self.lagged_gap()
        return self.g - cycle.phi1 * g1 - cycle.phi2 * g2


@dataclass(frozen=True)
class ParameterDraw:
    """One joint draw of every parameter and latent path."""

    loadings: LoadingSet
    cycle: CycleParams
    sv_h: SvBlock
    sv_upsilon: SvBlock
    sv_omega: SvBlock
    shrink_h: ShrinkageBlock
    shrink_upsilon: ShrinkageBlock
    shrink_omega: ShrinkageBlock
    factors: FactorPath
    states: LatentStatePath

    @property
    def N(self) -> int:
        return self.loadings.alpha.size

    @property
    def q(self) -> int:
        return self.loadings.q

    def identification_errors(self) -> list[str]:
        return self.loadings.identification_errors()

    def sigma(self, t: int) -> np.ndarray:
        """State innovation covariance at period index ``t`` (0-based)."""
        from .statespace import assemble_sigma

        return assemble_sigma(
            self.loadings, np.exp(self.sv_upsilon.path[t]), np.exp(self.sv_omega.path[t])
        )


# ---------------------------------------------------------------------------
# data generating process

@dataclass(frozen=True)
class Simulation:
    """Simulated panel plus every latent quantity used to build it."""

    panel: DataPanel
    states: LatentStatePath
    factors: FactorPath
    eps_y: np.ndarray
    eps_pi: np.ndarray
    idio_y: np.ndarray
    idio_pi: np.ndarray
    eta_g: np.ndarray


def _check_stationary_cycle(cycle: CycleParams):
    if not (0.0 <= cycle.Q < 1.0):
        raise ValueError(f"non-stationary cycle: Q = {cycle.Q} must lie in [0, 1)")
    if cycle.gamma <= 0:
        raise ValueError(f"cycle period must be positive, got {cycle.gamma}")


def simulate_dgp(
    cfg: ModelConfig,
    truth: ParameterDraw,
    rng: np.random.Generator,
    start: str = "2000Q1",
    countries: Optional[Sequence[str]] = None,
) -> Simulation:
    """
    Draw a panel from the measurement and state equations.

    The log-variance paths, loadings, cycle parameters and the pre-sample
    states (``truth.states.tau_y0``, ``tau_pi0``, ``g_init``) are taken from
    ``truth``; factors, idiosyncratic trend shocks, gap shocks and measurement
    errors are drawn fresh.
    """
    N, T, q = cfg.N, cfg.T, cfg.q
    if truth.N != N or truth.q != q:
        raise ValueError(f"truth dimensions (N={truth.N}, q={truth.q}) do not match config (N={N}, q={q})")
    for blk, rows in ((truth.sv_h, 2 * N), (truth.sv_omega, 2 * N + 1), (truth.sv_upsilon, 2 * q)):
        if blk.path.shape != (T, rows):
            raise ValueError(f"SV path has shape {blk.path.shape}, expected {(T, rows)}")
    errs = truth.identification_errors()
    if errs:
        raise ValueError("truth violates identification: " + "; ".join(errs))
    _check_stationary_cycle(truth.cycle)

    ld = truth.loadings
    sd_h = np.exp(0.5 * truth.sv_h.path)
    sd_om = np.exp(0.5 * truth.sv_omega.path)
    sd_up = np.exp(0.5 * truth.sv_upsilon.path)

    z = rng.standard_normal((T, 2 * q)) * sd_up
    idio = rng.standard_normal((T, 2 * N + 1)) * sd_om
    eps = rng.standard_normal((T, 2 * N)) * sd_h

    z_y, z_pi = z[:, :q], z[:, q:]
    eta_y = z_y @ ld.Lambda_y.T + idio[:, :N]
    eta_pi = z_pi @ ld.Lambda_pi.T + idio[:, N:2 * N]
    eta_g = idio[:, 2 * N]

    tau_y = truth.states.tau_y0 + np.cumsum(eta_y, axis=0)
    tau_pi = truth.states.tau_pi0 + np.cumsum(eta_pi, axis=0)
    phi1, phi2 = truth.cycle.phi1, truth.cycle.phi2
    g = np.empty(T)
    g1, g2 = truth.states.g_init
    for t in range(T):
        g[t] = phi1 * g1 + phi2 * g2 + eta_g[t]
        g1, g2 = g[t], g1

    y = tau_y + np.outer(g, ld.alpha) + eps[:, :N]
    pi = tau_pi + np.outer(g, ld.beta) + eps[:, N:]
    if countries is None:
        countries = tuple(f"C{i + 1:02d}" for i in range(N))
    panel = DataPanel(quarter_labels(start, T), tuple(countries), y, pi)
    states = LatentStatePath(tau_y, tau_pi, g, truth.states.tau_y0, truth.states.tau_pi0, truth.states.g_init)
    return Simulation(
        panel=panel,
        states=states,
        factors=FactorPath(z_y, z_pi),
        eps_y=eps[:, :N],
        eps_pi=eps[:, N:],
        idio_y=idio[:, :N],
        idio_pi=idio[:, N:2 * N],
        eta_g=eta_g,
    )


def _ar1_paths(mu, rho, sqrt_theta, T, rng):
    mu = np.asarray(mu, float)
    rho = np.asarray(rho, float)
    s = np.asarray(sqrt_theta, float)
    x = np.empty((T, mu.size))
    x[0] = rng.standard_normal(mu.size) / np.sqrt(1.0 - rho**2)
    for t in range(1, T):
        x[t] = rho * x[t - 1] + rng.standard_normal(mu.size)
    return mu + s * x


def make_truth(
    cfg: ModelConfig,
    rng: np.random.Generator,
    *,
    alpha=None,
    beta=None,
    Q: float = 0.68,
    gamma: float = 26.0,
    lambda_y=None,
    lambda_pi=None,
    log_var_h=0.0,
    log_var_omega=None,
    log_var_upsilon=0.0,
    rho: float = 0.9,
    sqrt_theta_h=0.0,
    sqrt_theta_omega=0.0,
    sqrt_theta_upsilon=0.0,
    h_paths=None,
    tau0=0.0,
) -> ParameterDraw:
    """
    Assemble a ground-truth :class:`ParameterDraw` for simulation studies.

    Scalar arguments broadcast over their block. SV paths are drawn from the
    stationary AR(1) laws unless ``h_paths`` (T x 2N) is given. Free
    loadings default to draws from their priors with ``alpha_1 = 1``.
    """
    N, T, q = cfg.N, cfg.T, cfg.q
    if alpha is None:
        alpha = np.concatenate([[1.0], rng.uniform(0.5, 1.5, N - 1)])
    if beta is None:
        beta = rng.uniform(0.1, 0.6, N)
    alpha = np.asarray(alpha, float).copy()
    alpha[0] = 1.0

    def _lam(given):
        if given is not None:
            lam = np.array(given, float).reshape(N, q)
        else:
            lam = rng.normal(0.0, np.sqrt(cfg.lambda_prior_var), (N, q))
        lam[:q, :q] = np.tril(lam[:q, :q], -1) + np.eye(q)
        return lam

    loadings = LoadingSet(alpha, beta, _lam(lambda_y), _lam(lambda_pi))
    if log_var_omega is None:
        log_var_omega = np.concatenate([np.full(N, np.log(0.25)), np.full(N, np.log(0.04)), [0.0]])

    def _block(mu, st, R):
        mu = np.broadcast_to(np.asarray(mu, float), (R,)).copy()
        st = np.broadcast_to(np.asarray(st, float), (R,)).copy()
        rr = np.full(R, rho)
        return SvBlock(mu, rr, st, _ar1_paths(mu, rr, st, T, rng))

    sv_h = _block(log_var_h, sqrt_theta_h, 2 * N)
    if h_paths is not None:
        sv_h = replace(sv_h, path=np.asarray(h_paths, float))
    sv_omega = _block(log_var_omega, sqrt_theta_omega, 2 * N + 1)
    sv_up = _block(log_var_upsilon, sqrt_theta_upsilon, 2 * q)

    tau0 = np.broadcast_to(np.asarray(tau0, float), (2 * N,))
    states = LatentStatePath(
        np.zeros((T, N)), np.zeros((T, N)), np.zeros(T), tau0[:N], tau0[N:], np.zeros(2)
    )
    return ParameterDraw(
        loadings=loadings,
        cycle=CycleParams(Q, gamma),
        sv_h=sv_h,
        sv_upsilon=sv_up,
        sv_omega=sv_omega,
        shrink_h=ShrinkageBlock("h", cfg.kappa_h, np.ones(2 * N), 1.0, cfg.e0, cfg.e1),
        shrink_upsilon=ShrinkageBlock("upsilon", cfg.kappa_upsilon, np.ones(max(2 * q, 1)), 1.0, cfg.d0, cfg.d1),
        shrink_omega=ShrinkageBlock("omega", cfg.kappa_omega, np.ones(2 * N + 1), 1.0, cfg.c0, cfg.c1),
        factors=FactorPath(np.zeros((T, q)), np.zeros((T, q))),
        states=states,
    )
