import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from d2dnoma.cupower import (
    INF, compute_coefficients, compute_xi_delta, cu_powers, cumulative_power, d2d_rate,
    d2d_rate_coeffs, d2d_rate_linear, gamma_coefficients, q_cap_budget, q_cap_sic, q_cap_total,
)
from d2dnoma.scenario import ScenarioConfig, generate_scenario

from conftest import direct_cu_rates, random_sc, recursion_powers

XI = np.array([0.5, 1.0])
DELTA = np.array([2.0, 1.0])
GAMMA = np.array([1.0, 1.0])


def test_xi_delta_hand_values(small_real):
    xi, delta = compute_xi_delta(small_real, 1.0)
    assert xi[0, 0, 0] == pytest.approx(small_real.cross_gain[0, 0, 0] / small_real.cu_gain[0, 0])
    assert delta[0, 1] == pytest.approx(1.0 / small_real.cu_gain[0, 1])


def test_xi_delta_simple_ratio():
    class R:
        cu_gain = np.array([[4.0, 1.0]])
        cross_gain = np.array([[[2.0, 1.0]]])
    xi, delta = compute_xi_delta(R, 1.0)
    assert xi[0, 0, 0] == 0.5
    assert delta[0, 1] == 1.0


def test_delta_non_increasing():
    for seed in range(100):
        r = generate_scenario(ScenarioConfig(n_subchannels=5, cus_per_sc=3, n_d2d_pairs=2, seed=seed))
        _, delta = compute_xi_delta(r, r.config.noise_w)
        assert np.all(np.diff(delta, axis=1) <= 0)


def test_gamma_coefficients():
    assert gamma_coefficients([1.0, 1.0]).tolist() == [1.0, 2.0]
    assert np.all(gamma_coefficients(np.zeros(4)) == 0)
    assert gamma_coefficients([1.7]) == pytest.approx([2 ** 1.7 - 1])
    with pytest.raises(ValueError):
        gamma_coefficients([-1.0])


def test_cumulative_power_hand_example():
    assert cumulative_power(1, 0.0, XI, DELTA, GAMMA) == pytest.approx(1.0)
    assert cumulative_power(0, 0.0, XI, DELTA, GAMMA) == pytest.approx(4.0)
    assert cumulative_power(0, 2.0, XI, DELTA, np.zeros(2)) == 0.0
    with pytest.raises(IndexError):
        cumulative_power(2, 0.0, XI, DELTA, GAMMA)


def test_cu_powers_hand_example():
    assert cu_powers(0.0, XI, DELTA, GAMMA) == pytest.approx([3.0, 1.0])
    # direct SINR check with |h|^2 = (0.5, 1), sigma^2 = 1
    rates = direct_cu_rates([3.0, 1.0], np.array([0.5, 1.0]), np.zeros(2), 0.0, 1.0)
    assert rates == pytest.approx([1.0, 1.0], rel=1e-12)


def test_cu_powers_single_user():
    assert cu_powers(0.7, [0.3], [2.0], [1.5]) == pytest.approx([(2 ** 1.5 - 1) * (0.7 * 0.3 + 2.0)])


@given(st.integers(1, 5), st.integers(0, 10**6), st.floats(0.0, 10.0))
@settings(max_examples=150, deadline=None)
def test_closed_form_matches_recursion(m, seed, q):
    rng = np.random.default_rng(seed)
    xi = rng.uniform(0.01, 3.0, m)
    delta = np.sort(rng.uniform(0.1, 5.0, m))[::-1]
    gamma = rng.uniform(0.0, 3.0, m)
    p = cu_powers(q, xi, delta, gamma)
    ref = recursion_powers(q * xi + delta, gamma)
    assert np.allclose(p, ref, rtol=1e-12, atol=0)
    for i in range(m):
        assert cumulative_power(i, q, xi, delta, gamma) == pytest.approx(ref[i:].sum(), rel=1e-12)


@given(st.integers(1, 4), st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_cu_powers_monotone_in_q(m, seed):
    rng = np.random.default_rng(seed)
    h, cross, gamma = random_sc(rng, m)
    xi, delta = cross / h, 1e-14 / h
    qs = np.linspace(0, 0.5, 20)
    ps = np.array([cu_powers(q, xi, delta, gamma) for q in qs])
    assert np.all(np.diff(ps, axis=0) >= 0)


def test_budget_cap():
    G = gamma_coefficients(GAMMA)
    assert q_cap_budget(XI, DELTA, G, 10.0) == pytest.approx(2.4)
    assert q_cap_budget(XI, DELTA, G, 3.0) == 0.0
    assert q_cap_budget(XI, DELTA, np.zeros(2), 10.0) == INF


def test_sic_cap():
    assert q_cap_sic(XI, DELTA) == pytest.approx(2.0)
    assert q_cap_sic([1.0, 0.5], DELTA) == INF
    # two binding positions: (3-4)/(0.2-0.5) = 10/3 and (2-3)/(0.5-1) = 2
    assert q_cap_sic([0.2, 0.5, 1.0], [4.0, 3.0, 2.0]) == pytest.approx(2.0)
    assert q_cap_sic([0.2, 0.5, 0.7], [4.0, 3.0, 2.0]) == pytest.approx(10 / 3)
    assert q_cap_sic([0.3], [1.0]) == INF


def test_total_cap():
    assert q_cap_total(2.4, 2.0) == 2.0
    assert q_cap_total(0.0, INF) == 0.0
    assert q_cap_total(INF, INF) == INF


def test_rate_hand_values():
    assert d2d_rate(0.0, 3.0, 1.0) == 0.0
    assert d2d_rate(1.0, 3.0, 1.0) == pytest.approx(math.log2(2.5))
    assert d2d_rate(1e12, 3.0, 1.0) == pytest.approx(2.0)
    assert d2d_rate_linear(1.0, 3.0) == pytest.approx(2.0)


def test_rate_concave():
    rng = np.random.default_rng(5)
    for _ in range(20):
        d, e = 10 ** rng.uniform(-2, 2), 10 ** rng.uniform(-2, 2)
        q = np.linspace(0, 10 * e, 1000)
        assert np.all(np.diff(d2d_rate(q, d, e), 2) <= 1e-12)


def test_rate_coeffs_match_direct_rate():
    rng = np.random.default_rng(8)
    noise = 1e-14
    for _ in range(20):
        m = int(rng.integers(1, 5))
        h, cross, gamma = random_sc(rng, m)
        g, g_b = 10 ** rng.uniform(-9, -6), 10 ** rng.uniform(-12, -8)
        xi, delta = cross / h, noise / h
        G = gamma_coefficients(gamma)
        d, e = d2d_rate_coeffs(g, g_b, xi, delta, G, noise)
        cap = q_cap_budget(xi, delta, G, 10 ** 0.5)
        for q in rng.uniform(0, min(cap, 1.0), 100):
            p = cu_powers(q, xi, delta, gamma)
            direct = math.log2(1 + q * g / (g_b * p.sum() + noise))
            assert d2d_rate(q, d, e) == pytest.approx(direct, rel=1e-12, abs=1e-300)
    assert d2d_rate_coeffs(1.0, 1.0, [1.0], [1.0], [0.0], 1.0) == (INF, INF)


def test_compute_coefficients_matches_scalar_ops(small_real):
    co = compute_coefficients(small_real)
    n, k, m = small_real.shape
    for sc in range(n):
        for pair in range(k):
            assert co.budget_cap[sc, pair] == pytest.approx(
                q_cap_budget(co.xi[sc, pair], co.delta[sc], co.big_gamma[sc], co.p_c_max_w), rel=1e-12)
            assert co.sic_cap[sc, pair] == pytest.approx(q_cap_sic(co.xi[sc, pair], co.delta[sc]), rel=1e-12)
            d, e = d2d_rate_coeffs(small_real.d2d_gain[sc, pair], small_real.bs_to_d2d_gain[sc, pair],
                                   co.xi[sc, pair], co.delta[sc], co.big_gamma[sc], co.noise_w)
            assert (co.d[sc, pair], co.e[sc, pair]) == pytest.approx((d, e), rel=1e-12)
    assert not co.cu_infeasible.any()


def test_zero_rate_degenerate():
    r = generate_scenario(ScenarioConfig(n_subchannels=3, n_d2d_pairs=2, gamma=0.0, seed=1))
    co = compute_coefficients(r)
    # silent CUs need no BS power; the ordering constraints still apply
    assert co.zero_rate.all() and np.all(np.isinf(co.budget_cap))
    assert np.array_equal(co.q_cap, co.sic_cap)
    assert np.all(co.cu_powers(0, 1, 0.1) == 0)
    assert co.rate(0, 1, 0.1) == pytest.approx(math.log2(1 + 0.1 * r.d2d_gain[0, 1] / co.noise_w))


def test_cu_infeasible_flag():
    r = generate_scenario(ScenarioConfig(n_subchannels=3, n_d2d_pairs=2, gamma=30.0, seed=1))
    co = compute_coefficients(r)
    assert co.cu_infeasible.all()
    assert np.all(co.q_cap == 0)
