import math

import numpy as np
import pytest

from d2dnoma.scenario import ScenarioConfig, generate_scenario


def direct_cu_rates(p, h, cross, q, noise):
    """Achieved CU rates by plugging powers into the SINR definition (strongest users cancelled)."""
    p = np.asarray(p, dtype=float)
    above = np.cumsum(p[::-1])[::-1] - p
    return np.log2(1.0 + p * h / (h * above + q * cross + noise))


def recursion_powers(u, gamma):
    """Backward recursion p_i = (2^g_i - 1)(u_i + sum_{t>i} p_t)."""
    p = np.zeros(len(u))
    tail = 0.0
    for i in range(len(u) - 1, -1, -1):
        p[i] = (2.0 ** gamma[i] - 1.0) * (u[i] + tail)
        tail += p[i]
    return p


def random_sc(rng, m, gamma_hi=3.0):
    """Random ascending CU gains, cross gains, and rate targets for one SC."""
    h = np.sort(10 ** rng.uniform(-12, -7, m))
    cross = 10 ** rng.uniform(-13, -7, m)
    gamma = rng.uniform(0.1, gamma_hi, m)
    return h, cross, gamma


@pytest.fixture
def small_real():
    return generate_scenario(ScenarioConfig(n_subchannels=4, cus_per_sc=2, n_d2d_pairs=3, seed=7))


@pytest.fixture
def default_real():
    return generate_scenario(ScenarioConfig(seed=11))


LN2 = math.log(2.0)
