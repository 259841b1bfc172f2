import numpy as np
import pytest

from tcdfm.model import ModelConfig, make_truth, simulate_dgp
from tcdfm.sampler import run_chain


@pytest.fixture(scope="session")
def small_sim():
    cfg = ModelConfig(N=3, T=40, q=1)
    rng = np.random.default_rng(2024)
    truth = make_truth(cfg, rng)
    return cfg, truth, simulate_dgp(cfg, truth, rng)


@pytest.fixture(scope="session")
def short_chain(small_sim):
    cfg, _, sim = small_sim
    run_cfg = ModelConfig(N=3, T=40, q=1, sweeps=60, burn_in=20, thin=2, seed=5)
    return run_cfg, sim.panel, run_chain(sim.panel, run_cfg, np.random.default_rng(5))
