import numpy as np
import pytest

from tcdfm.cycle import prior_moments
from tcdfm.model import ModelConfig
from tcdfm.sampler import (
    SamplerError,
    SweepContext,
    effective_sample_size,
    gibbs_sweep,
    initial_draw,
    run_chain,
    run_restarts,
)


def _cfg(panel, **kw):
    base = dict(sweeps=30, burn_in=10, thin=4, seed=1)
    base.update(kw)
    return ModelConfig.for_panel(panel, **base)


def test_retained_count_matches_config(short_chain):
    cfg, _, chain = short_chain
    assert len(chain) == cfg.retained == 20
    assert chain.loglik.shape == (20,)
    assert np.all(np.isfinite(chain.loglik))
    assert not chain.partial
    assert set(chain.manifest) >= {"seed", "config_digest", "data_digest", "version", "ess", "acceptance"}


def test_draws_are_valid(short_chain):
    _, panel, chain = short_chain
    for d in chain.draws:
        assert d.identification_errors() == []
        assert 0 < d.cycle.Q < 1
        assert d.states.T == panel.T
        assert np.all(np.isfinite(d.states.stacked()))


def test_fixed_seed_reproducible(small_sim):
    _, _, sim = small_sim
    cfg = _cfg(sim.panel)
    a = run_chain(sim.panel, cfg, np.random.default_rng(7))
    b = run_chain(sim.panel, cfg, np.random.default_rng(7))
    c = run_chain(sim.panel, cfg, np.random.default_rng(8))
    np.testing.assert_array_equal(a.loglik, b.loglik)
    for x, y in zip(a.draws, b.draws):
        np.testing.assert_array_equal(x.states.stacked(), y.states.stacked())
        assert x.cycle == y.cycle
    assert not np.array_equal(a.loglik, c.loglik)


def test_homoscedastic_paths_constant(small_sim):
    _, _, sim = small_sim
    chain = run_chain(sim.panel, _cfg(sim.panel, sv_enabled=False), np.random.default_rng(3))
    for d in chain.draws:
        for blk in (d.sv_h, d.sv_omega, d.sv_upsilon):
            assert np.all(blk.path == blk.path[0])
        assert np.all(d.shrink_h.local_scales == 1.0)


def test_burn_in_zero_freezes_immediately(small_sim):
    _, _, sim = small_sim
    ctx = SweepContext()
    chain = run_chain(sim.panel, _cfg(sim.panel, sweeps=6, burn_in=0, thin=1), np.random.default_rng(0), context=ctx)
    assert len(chain) == 6
    assert not ctx.cycle_adapt.active


def test_prior_only_cycle_matches_prior_moments(small_sim):
    _, _, sim = small_sim
    panel = sim.panel
    cfg = _cfg(panel, sv_enabled=False)
    rng = np.random.default_rng(21)
    ctx = SweepContext(prior_only=True)
    d = initial_draw(panel, cfg, rng)
    ctx.anchor = np.zeros(2 * panel.N)
    Q, gam = [], []
    for _ in range(3000):
        d = gibbs_sweep(d, panel, cfg, rng, ctx)
        Q.append(d.cycle.Q)
        gam.append(d.cycle.gamma)
    m = prior_moments(cfg)
    # independent draws from the prior: 4 standard errors
    assert abs(np.mean(Q) - m["Q_mean"]) < 4 * m["Q_sd"] / np.sqrt(3000)
    assert abs(np.mean(gam) - m["gamma_mean"]) < 4 * m["gamma_sd"] / np.sqrt(3000)


def test_nonfinite_likelihood_raises_with_partial(small_sim):
    _, _, sim = small_sim
    calls = {"n": 0}

    class Boom(SweepContext):
        def __setattr__(self, name, value):
            if name == "loglik":
                calls["n"] += 1
                # the first assignment is the dataclass default
                if calls["n"] == 5:
                    value = float("nan")
            object.__setattr__(self, name, value)

    cfg = _cfg(sim.panel, sweeps=10, burn_in=2, thin=1)
    with pytest.raises(SamplerError) as err:
        run_chain(sim.panel, cfg, np.random.default_rng(0), context=Boom())
    assert err.value.sweep == 3
    assert err.value.partial.partial
    assert len(err.value.partial) == 1
    assert "non-finite" in str(err.value)


def test_config_panel_mismatch(small_sim):
    _, _, sim = small_sim
    with pytest.raises(ValueError, match="does not match panel"):
        run_chain(sim.panel, ModelConfig(N=2, T=40, sweeps=2, burn_in=1, thin=1), np.random.default_rng(0))


def test_restarts_independent_of_worker_count(small_sim):
    _, _, sim = small_sim
    cfg = _cfg(sim.panel, sweeps=8, burn_in=4, thin=2)
    serial = run_restarts(sim.panel, cfg, 2, threads=1)
    pooled = run_restarts(sim.panel, cfg, 2, threads=2)
    for a, b in zip(serial, pooled):
        np.testing.assert_array_equal(a.loglik, b.loglik)
    assert not np.array_equal(serial[0].loglik, serial[1].loglik)


def test_ess_of_iid_and_ar1():
    rng = np.random.default_rng(4)
    n = 4000
    assert effective_sample_size(rng.normal(size=n)) == pytest.approx(n, rel=0.15)
    x = np.empty(n)
    x[0] = 0.0
    e = rng.normal(size=n)
    for t in range(1, n):
        x[t] = 0.9 * x[t - 1] + e[t]
    # integrated autocorrelation time of an AR(1) is (1 + rho) / (1 - rho) = 19
    assert effective_sample_size(x) == pytest.approx(n / 19, rel=0.35)
    assert effective_sample_size(np.ones(10)) == 10.0
