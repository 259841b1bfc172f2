import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import digamma

from tcdfm.model import ModelConfig, SvBlock
from tcdfm.svol import (
    MIXTURE_MEANS,
    MIXTURE_VARS,
    MIXTURE_WEIGHTS,
    NonCenteredRegressionData,
    indicator_probabilities,
    interweave_centered,
    log_rho_prior,
    sample_constant_variances,
    sample_indicators,
    sample_logvol_path,
    sample_rho,
    sample_sv_params,
    to_centered,
    to_noncentered,
    transform_residuals,
    update_sv_block,
)

LOG_CHI2_MEAN = digamma(0.5) + np.log(2.0)  # -1.2703628454614782
LOG_CHI2_VAR = np.pi**2 / 2


def test_mixture_approximates_log_chi2():
    assert MIXTURE_WEIGHTS.sum() == pytest.approx(1.0, abs=1e-6)
    m = MIXTURE_WEIGHTS @ MIXTURE_MEANS
    v = MIXTURE_WEIGHTS @ (MIXTURE_VARS + MIXTURE_MEANS**2) - m**2
    assert m == pytest.approx(LOG_CHI2_MEAN, abs=1e-3)
    assert v == pytest.approx(LOG_CHI2_VAR, abs=2e-3)


def test_transform():
    assert transform_residuals(np.array([0.0]))[0] == pytest.approx(np.log(1e-10))
    assert transform_residuals(np.array([np.e]))[0] == pytest.approx(2.0, abs=1e-9)


def test_indicator_probabilities_are_bayes_rule():
    eps, h = 0.3, -0.5
    p = indicator_probabilities(np.array([eps]), np.array([h]))[0]
    dens = MIXTURE_WEIGHTS * np.exp(-0.5 * (eps - h - MIXTURE_MEANS) ** 2 / MIXTURE_VARS) / np.sqrt(MIXTURE_VARS)
    assert np.allclose(p, dens / dens.sum(), atol=1e-14)


def test_indicator_draw_frequencies():
    rng = np.random.default_rng(0)
    eps = np.full(200_000, -2.0)
    ind = sample_indicators(eps, np.zeros_like(eps), rng)
    freq = np.bincount(ind, minlength=10) / ind.size
    p = indicator_probabilities(np.array([-2.0]), np.array([0.0]))[0]
    assert np.allclose(freq, p, atol=4e-3)


@settings(max_examples=50, deadline=None)
@given(mu=st.floats(-5, 5), s=st.floats(0.01, 3) | st.floats(-3, -0.01), x=st.floats(-10, 10))
def test_centering_roundtrip(mu, s, x):
    assert to_noncentered(to_centered(x, mu, s), mu, s) == pytest.approx(x, abs=1e-9)


def _dense_posterior(y, v, s, rho):
    T = y.size
    idx = np.arange(T)
    P = rho ** np.abs(idx[:, None] - idx[None, :]) / (1 - rho * rho)
    S = s * s * P + np.diag(v)
    K = s * P @ np.linalg.inv(S)
    return K @ y, P - K @ (s * P)


def test_logvol_smoother_matches_dense_conditioning():
    rng = np.random.default_rng(1)
    T, R = 6, 40_000
    y = rng.normal(size=T)
    ind = rng.integers(0, 10, T)
    mu, s, rho = 0.4, 0.7, 0.85
    eps = np.tile((y + MIXTURE_MEANS[ind])[:, None], (1, R))
    data = NonCenteredRegressionData(eps, np.zeros_like(eps), np.tile(ind[:, None], (1, R)))
    w, path = sample_logvol_path(data, np.full(R, mu), np.full(R, rho), np.full(R, s), rng)
    mean, cov = _dense_posterior(y - mu, MIXTURE_VARS[ind], s, rho)
    se = np.sqrt(np.diag(cov) / R)
    assert np.all(np.abs(w.mean(axis=1) - mean) < 4 * se)
    assert np.allclose(np.cov(w), cov, atol=0.03)
    assert np.allclose(path, mu + s * w)


def test_logvol_unobserved_is_prior():
    rng = np.random.default_rng(2)
    T, R = 5, 40_000
    data = NonCenteredRegressionData(np.zeros((T, R)), np.zeros((T, R)), np.zeros((T, R), int), observed=False)
    w, _ = sample_logvol_path(data, np.zeros(R), np.full(R, 0.5), np.ones(R), rng)
    assert np.allclose(w.var(axis=1), 1 / (1 - 0.25), rtol=0.03)


def test_sv_params_conjugate_moments():
    rng = np.random.default_rng(3)
    T, R = 30, 50_000
    cfg = ModelConfig(N=1, T=T)
    w0 = rng.normal(size=T)
    ind = rng.integers(0, 10, T)
    y = -0.5 + 0.3 * w0 + rng.normal(size=T) * np.sqrt(MIXTURE_VARS[ind])
    eps = np.tile((y + MIXTURE_MEANS[ind])[:, None], (1, R))
    data = NonCenteredRegressionData(eps, np.tile(w0[:, None], (1, R)), np.tile(ind[:, None], (1, R)))
    B = 0.5
    mu, st = sample_sv_params(data, np.full(R, B), cfg, rng)
    X = np.column_stack([np.ones(T), w0])
    W = np.diag(1 / MIXTURE_VARS[ind])
    prec = X.T @ W @ X + np.diag([1 / cfg.mu_prior_var, 1 / B])
    cov = np.linalg.inv(prec)
    mean = cov @ X.T @ W @ y
    assert np.allclose([mu.mean(), st.mean()], mean, atol=4 * np.sqrt(np.diag(cov) / R).max())
    # elementwise MC SE is about 6e-5 here
    assert np.allclose(np.cov(np.vstack([mu, st])), cov, rtol=0, atol=3e-4)


@pytest.mark.parametrize("support", ["unit", "symmetric"])
def test_rho_prior_normalized(support):
    cfg = ModelConfig(N=1, T=20, rho_prior_support=support)
    lo = 0.0 if support == "unit" else -1.0
    assert quad(lambda r: np.exp(log_rho_prior(r, cfg)), lo, 1.0)[0] == pytest.approx(1.0, abs=1e-8)
    assert log_rho_prior(1.0, cfg) == -np.inf


def test_rho_mh_targets_grid_posterior():
    cfg = ModelConfig(N=1, T=50)
    rng = np.random.default_rng(4)
    T = 50
    w = np.empty(T)
    w[0] = rng.normal() / np.sqrt(1 - 0.7**2)
    for t in range(1, T):
        w[t] = 0.7 * w[t - 1] + rng.normal()
    grid = np.linspace(1e-4, 1 - 1e-4, 20_000)
    e = w[1:, None] - grid * w[:-1, None]
    lp = (0.5 * np.log(1 - grid**2) - 0.5 * (1 - grid**2) * w[0] ** 2 - 0.5 * (e * e).sum(axis=0)
          + log_rho_prior(grid, cfg))
    p = np.exp(lp - lp.max())
    target = (p * grid).sum() / p.sum()
    R = 4000
    rho = np.full(R, 0.5)
    W = np.tile(w[:, None], (1, R))
    for _ in range(150):
        rho, _ = sample_rho(W, rho, cfg, rng)
    assert rho.mean() == pytest.approx(target, abs=4 * rho.std() / np.sqrt(R))


def test_constant_variances_posterior_mean():
    rng = np.random.default_rng(5)
    r = rng.normal(size=(40, 1)) * 2.0
    draws = np.exp([sample_constant_variances(r, 2.0, 1.0, rng)[0] for _ in range(40_000)])
    shape, scale = 2.0 + 20.0, 1.0 + 0.5 * np.sum(r**2)
    assert draws.mean() == pytest.approx(scale / (shape - 1), rel=0.01)


def test_homoscedastic_block_is_constant():
    cfg = ModelConfig(N=1, T=20, sv_enabled=False)
    rng = np.random.default_rng(6)
    blk = SvBlock.constant(np.zeros(2), 20, 0.8)
    out = update_sv_block(blk, rng.normal(size=(20, 2)), np.ones(2), cfg, rng)
    assert np.all(out.path == out.path[0]) and np.all(out.sqrt_theta == 0)


def test_sv_block_update_is_finite_and_deterministic():
    cfg = ModelConfig(N=1, T=30)
    res = np.random.default_rng(7).normal(size=(30, 3))
    blk = SvBlock(np.zeros(3), np.full(3, 0.9), np.full(3, 0.1), np.zeros((30, 3)))
    a = update_sv_block(blk, res, np.ones(3), cfg, np.random.default_rng(8))
    b = update_sv_block(blk, res, np.ones(3), cfg, np.random.default_rng(8))
    assert np.all(np.isfinite(a.path)) and np.array_equal(a.path, b.path)
    assert np.all((a.rho > 0) & (a.rho < 1))


def test_interweave_step_targets_centered_posterior():
    # with the centered path held fixed, repeated steps are a Gibbs sampler on (mu, theta) | h
    rng = np.random.default_rng(31)
    T, rho, B = 30, 0.8, 0.5
    cfg = ModelConfig(N=1, T=T, mu_prior_var=4.0)
    h = np.empty(T)
    h[0] = -1.0 + rng.normal() * 0.4 / np.sqrt(1 - rho**2)
    for t in range(1, T):
        h[t] = -1.0 + rho * (h[t - 1] + 1.0) + 0.4 * rng.normal()
    mu, st = np.array([0.0]), np.array([0.5])
    zeros = np.zeros((T, 1), dtype=int)
    data = NonCenteredRegressionData(np.zeros((T, 1)), (h[:, None] - mu) / st, zeros)
    keep = []
    for k in range(12000):
        mu, st, w = interweave_centered(data, mu, np.array([rho]), st, np.array([B]), cfg, rng)
        data = NonCenteredRegressionData(data.eps_tilde, w, zeros)
        if k >= 500:
            keep.append((mu[0], st[0] ** 2))
    np.testing.assert_allclose(mu + st * w[:, 0], h, atol=1e-10)
    keep = np.array(keep)

    # grid posterior: stationary AR(1) likelihood, N(0, V) on mu, Gamma(1/2, 2B) on theta
    mg = np.linspace(-3.5, 1.5, 400)[:, None]
    tg = np.linspace(1e-4, 0.8, 400)[None, :]
    d = h[None, :] - mg
    S = (1 - rho**2) * d[:, 0] ** 2 + np.sum((d[:, 1:] - rho * d[:, :-1]) ** 2, axis=1)
    lp = -0.5 * T * np.log(tg) - S[:, None] / (2 * tg) - mg**2 / (2 * cfg.mu_prior_var) \
        - 0.5 * np.log(tg) - tg / (2 * B)
    p = np.exp(lp - lp.max())
    p /= p.sum()
    assert keep[:, 0].mean() == pytest.approx(np.sum(p * mg), abs=0.05)
    assert keep[:, 1].mean() == pytest.approx(np.sum(p * tg), rel=0.05)


def test_interweave_skips_flat_paths():
    cfg = ModelConfig(N=1, T=20)
    data = NonCenteredRegressionData(np.zeros((20, 2)), np.zeros((20, 2)), np.zeros((20, 2), dtype=int))
    mu, st, w = interweave_centered(data, np.array([0.3, 0.3]), np.array([0.9, 0.9]), np.array([0.0, 1e-200]),
                                    np.array([1.0, 1.0]), cfg, np.random.default_rng(0))
    assert st[0] == 0.0 and st[1] == 1e-200
    assert np.all(np.isfinite(mu)) and np.all(np.isfinite(w))
