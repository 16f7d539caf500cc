"""Closed-form NOMA CU power control, D2D power caps and D2D rate coefficients.

All per-SC vectors are indexed by the SIC position ``i = 0 .. M-1`` (weakest
CU first).  A cap of ``math.inf`` means "unconstrained" and must be handled
explicitly by consumers; it is never replaced by a large finite number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import ChannelRealization, ScenarioConfig

INF = math.inf
CAP_ATOL = 1e-12  # watts


def compute_xi_delta(realization: ChannelRealization, noise_w: float):
    """Normalized interference ``xi[n,k,i]`` and normalized noise ``delta[n,i]``."""
    h = np.asarray(realization.cu_gain, dtype=float)
    cross = np.asarray(realization.cross_gain, dtype=float)
    if np.any(~(h > 0)) or np.any(~(cross > 0)):
        raise ValueError("channel gains must be strictly positive")
    if not noise_w > 0:
        raise ValueError("noise power must be positive")
    xi = cross / h[:, None, :]
    delta = noise_w / h
    return xi, delta


def gamma_coefficients(gamma_row) -> np.ndarray:
    """Weights ``G_j = 2^(gamma_0 + ... + gamma_{j-1}) * (2^gamma_j - 1)``.

    The total BS power on a SC is ``sum_j G_j * (q*xi_j + delta_j)``.
    Works on the last axis, so an (N, M) matrix yields per-SC rows.
    """
    g = np.asarray(gamma_row, dtype=float)
    if np.any(g < 0):
        raise ValueError("rate requirements must be non-negative")
    prefix = np.cumsum(g, axis=-1) - g
    return np.exp2(prefix) * np.expm1(g * math.log(2.0))


def _effective_noise(q_w, xi_col, delta_col):
    return q_w * np.asarray(xi_col, dtype=float) + np.asarray(delta_col, dtype=float)


def cumulative_power(i: int, q_w: float, xi_col, delta_col, gamma_row) -> float:
    """Total power ``S_i`` of CUs ``i .. M-1`` when every CU rate is met with equality."""
    g = np.asarray(gamma_row, dtype=float)
    m = g.size
    if not 0 <= i < m:
        raise IndexError(f"CU index {i} out of range for M={m}")
    if q_w < 0:
        raise ValueError("D2D power must be non-negative")
    u = _effective_noise(q_w, xi_col, delta_col)[i:]
    gi = g[i:]
    # exponent for term j is gamma_i + ... + gamma_{j-1}
    expo = np.cumsum(gi) - gi
    return float(np.sum(np.exp2(expo) * np.expm1(gi * math.log(2.0)) * u))


def cu_powers(q_w: float, xi_col, delta_col, gamma_row) -> np.ndarray:
    """Minimum CU powers meeting all rate targets under D2D power ``q_w``.

    ``p_i = (2^gamma_i - 1) * (q*xi_i + delta_i + sum_{t>i} p_t)`` written out
    in closed form; the last CU reduces to ``(2^gamma - 1)(q*xi + delta)``.
    """
    if q_w < 0:
        raise ValueError("D2D power must be non-negative")
    g = np.asarray(gamma_row, dtype=float)
    m = g.size
    u = _effective_noise(q_w, xi_col, delta_col)
    lin = np.expm1(g * math.log(2.0))
    p = np.empty(m)
    for i in range(m):
        tail = g[i + 1:]
        # exponent for j = 1 .. M-1-i is gamma_{i+1} + ... + gamma_{i+j-1}
        expo = np.cumsum(tail) - tail
        inner = np.sum(np.exp2(expo) * lin[i + 1:] * u[i + 1:])
        p[i] = lin[i] * (inner + u[i])
    return p


def q_cap_budget(xi_col_at_k, delta_col, big_gamma, p_c_max_w: float) -> float:
    """Largest D2D power keeping the BS within ``p_c_max_w`` on this SC."""
    G = np.asarray(big_gamma, dtype=float)
    denom = float(np.dot(G, xi_col_at_k))
    num = p_c_max_w - float(np.dot(G, delta_col))
    if denom <= 0.0:
        return INF
    return max(0.0, num / denom)


def q_cap_sic(xi_col_at_k, delta_col) -> float:
    """Largest D2D power preserving the ascending SIC decoding order.

    Only adjacent positions with ``xi_i < xi_{i+1}`` constrain the power.
    """
    xi = np.asarray(xi_col_at_k, dtype=float)
    de = np.asarray(delta_col, dtype=float)
    dxi = xi[:-1] - xi[1:]
    binding = dxi < 0
    if not np.any(binding):
        return INF
    ratios = (de[1:][binding] - de[:-1][binding]) / dxi[binding]
    return float(max(0.0, ratios.min()))


def q_cap_total(budget_cap: float, sic_cap: float) -> float:
    """Per-(SC, pair) D2D power cap; ``inf`` only if both caps are unbounded."""
    return min(budget_cap, sic_cap)


def d2d_rate_coeffs(g: float, g_b: float, xi_col_at_k, delta_col, big_gamma, noise_w: float):
    """``(d, e)`` such that the D2D rate is ``log2(1 + d q / (q + e))``.

    Returns ``(inf, inf)`` when every CU has a zero rate target; the rate is then
    ``log2(1 + q g / noise)`` (see :func:`snr_slope`).
    """
    G = np.asarray(big_gamma, dtype=float)
    a = float(np.dot(G, xi_col_at_k))
    b = float(np.dot(G, delta_col))
    if a <= 0.0:
        return INF, INF
    d = g / (g_b * a)
    e = (g_b * b + noise_w) / (g_b * a)
    return d, e


def d2d_rate(q_w, d, e):
    """D2D rate in bits/s/Hz as a function of its transmit power."""
    q = np.asarray(q_w, dtype=float)
    r = np.log2(1.0 + d * q / (q + e))
    return float(r) if r.ndim == 0 else r


def d2d_rate_linear(q_w, snr_slope):
    """Rate when CUs transmit nothing: ``log2(1 + q * |g|^2 / noise)``."""
    r = np.log2(1.0 + snr_slope * np.asarray(q_w, dtype=float))
    return float(r) if r.ndim == 0 else r


@dataclass(frozen=True)
class CoefficientSet:
    xi: np.ndarray  # (N, K, M)
    delta: np.ndarray  # (N, M)
    big_gamma: np.ndarray  # (N, M)
    gamma: np.ndarray  # (N, M)
    budget_cap: np.ndarray  # (N, K)
    sic_cap: np.ndarray  # (N, K)
    q_cap: np.ndarray  # (N, K)
    d: np.ndarray  # (N, K); inf on zero-rate SCs
    e: np.ndarray  # (N, K); inf on zero-rate SCs
    snr_slope: np.ndarray  # (N, K), |g|^2 / noise
    zero_rate: np.ndarray  # (N,) all CU targets are zero
    cu_infeasible: np.ndarray  # (N,) CU targets exceed P^C even without D2D
    p_c_max_w: float
    p_d_max_w: float
    noise_w: float

    @property
    def linear(self) -> np.ndarray:
        return np.broadcast_to(self.zero_rate[:, None], self.d.shape)

    def cu_powers(self, n: int, k: int | None, q_w: float) -> np.ndarray:
        """CU powers on SC ``n`` with pair ``k`` (or nobody) transmitting ``q_w``."""
        if k is None:
            xi_col, q_w = np.zeros(self.delta.shape[1]), 0.0
        else:
            xi_col = self.xi[n, k]
        return cu_powers(q_w, xi_col, self.delta[n], self.gamma[n])

    def rate(self, n: int, k: int, q_w):
        if self.zero_rate[n]:
            return d2d_rate_linear(q_w, self.snr_slope[n, k])
        return d2d_rate(q_w, self.d[n, k], self.e[n, k])


def compute_coefficients(realization: ChannelRealization, config: ScenarioConfig | None = None) -> CoefficientSet:
    """Vectorized evaluation of every per-SC and per-(SC, pair) quantity."""
    cfg = config or realization.config
    noise = cfg.noise_w
    p_c = cfg.p_c_max_w
    gamma = cfg.gamma_matrix()
    xi, delta = compute_xi_delta(realization, noise)
    G = gamma_coefficients(gamma)

    a = np.einsum("nj,nkj->nk", G, xi)  # sum_j G_j xi_{k,j}
    b = np.einsum("nj,nj->n", G, delta)  # sum_j G_j delta_j
    zero_rate = np.all(G == 0.0, axis=1)
    cu_infeasible = b > p_c

    with np.errstate(divide="ignore", invalid="ignore"):
        budget = np.where(a > 0, np.maximum(0.0, (p_c - b)[:, None] / a), INF)

        dxi = xi[:, :, :-1] - xi[:, :, 1:]
        ddelta = (delta[:, 1:] - delta[:, :-1])[:, None, :]
        ratios = np.where(dxi < 0, ddelta / dxi, INF)
    sic = np.maximum(0.0, ratios.min(axis=2)) if xi.shape[2] > 1 else np.full(a.shape, INF)
    q_cap = np.minimum(budget, sic)

    g = realization.d2d_gain
    g_b = realization.bs_to_d2d_gain
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(a > 0, g / (g_b * a), INF)
        e = np.where(a > 0, (g_b * b[:, None] + noise) / (g_b * a), INF)

    return CoefficientSet(
        xi=xi, delta=delta, big_gamma=G, gamma=gamma,
        budget_cap=budget, sic_cap=sic, q_cap=q_cap,
        d=d, e=e, snr_slope=g / noise,
        zero_rate=zero_rate, cu_infeasible=cu_infeasible,
        p_c_max_w=p_c, p_d_max_w=cfg.p_d_max_w, noise_w=noise,
    )
