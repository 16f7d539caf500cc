"""MCU-OFDMA comparison scheme.

Each SC is split into ``M`` equal orthogonal subbands, one per CU, so CUs do not
interfere with each other but each needs ``2^(M gamma) - 1`` SINR on a
``1/M``-wide band whose noise is ``sigma^2 / M``.  The D2D pair spans the whole
SC, sees full noise, and is interfered by the sum of all ``M`` CU powers.

This is not the joint algorithm used by the original comparison; the same dual
solver as :mod:`d2dnoma.dbira` is run on the OFDMA rate model so that only the
multiple-access scheme differs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cupower import INF
from .dbira import NO_OWNER, Allocation, RateModel, SolverSettings, dual_solve
from .oracle import FeasibilityReport, _check_shapes, _exclusivity, d2d_interference
from .scenario import ChannelRealization, ScenarioConfig


def _sinr_target(gamma, m: int):
    return np.expm1(m * np.asarray(gamma, dtype=float) * math.log(2.0))


def ofdma_cu_power(q_w: float, cu_gain: float, cross_gain: float, gamma: float, m: int, noise_w: float) -> float:
    """Smallest power giving rate ``gamma`` on a ``1/M`` subband under D2D power ``q_w``."""
    if q_w < 0:
        raise ValueError("D2D power must be non-negative")
    return float(_sinr_target(gamma, m) * (q_w * cross_gain + noise_w / m) / cu_gain)


def ofdma_d2d_rate(q_w, g: float, g_b: float, cu_powers, noise_w: float):
    """D2D rate with the summed CU powers as interference."""
    q = np.asarray(q_w, dtype=float)
    r = np.log2(1.0 + q * g / (g_b * float(np.sum(cu_powers)) + noise_w))
    return float(r) if r.ndim == 0 else r


@dataclass(frozen=True)
class OfdmaCoefficients:
    cu_slope: np.ndarray  # (N, K, M) watts of CU power per watt of D2D power
    cu_base: np.ndarray  # (N, M) CU power with no D2D
    q_cap: np.ndarray  # (N, K)
    d: np.ndarray
    e: np.ndarray
    snr_slope: np.ndarray
    zero_rate: np.ndarray
    cu_infeasible: np.ndarray
    p_c_max_w: float
    p_d_max_w: float
    noise_w: float

    @property
    def linear(self) -> np.ndarray:
        return np.broadcast_to(self.zero_rate[:, None], self.d.shape)

    def cu_powers(self, n: int, k: int | None, q_w: float) -> np.ndarray:
        if k is None:
            return self.cu_base[n].copy()
        return self.cu_base[n] + q_w * self.cu_slope[n, k]


def compute_ofdma_coefficients(realization: ChannelRealization, config: ScenarioConfig | None = None) -> OfdmaCoefficients:
    cfg = config or realization.config
    noise = cfg.noise_w
    m = cfg.cus_per_sc
    target = _sinr_target(cfg.gamma_matrix(), m)  # (N, M)
    h = realization.cu_gain
    slope = target[:, None, :] * realization.cross_gain / h[:, None, :]
    base = target * (noise / m) / h
    a = slope.sum(axis=2)
    b = base.sum(axis=1)
    g, g_b = realization.d2d_gain, realization.bs_to_d2d_gain
    with np.errstate(divide="ignore", invalid="ignore"):
        cap = np.where(a > 0, np.maximum(0.0, (cfg.p_c_max_w - b)[:, None] / a), INF)
        d = np.where(a > 0, g / (g_b * a), INF)
        e = np.where(a > 0, (g_b * b[:, None] + noise) / (g_b * a), INF)
    return OfdmaCoefficients(
        cu_slope=slope, cu_base=base, q_cap=cap, d=d, e=e, snr_slope=g / noise,
        zero_rate=np.all(target == 0.0, axis=1), cu_infeasible=b > cfg.p_c_max_w,
        p_c_max_w=cfg.p_c_max_w, p_d_max_w=cfg.p_d_max_w, noise_w=noise,
    )


def ofdma_solve(realization: ChannelRealization, config: ScenarioConfig | None = None,
                settings: SolverSettings = SolverSettings()):
    """Dual-subgradient allocation under MCU-OFDMA; returns ``(Allocation, DualState)``."""
    cfg = config or realization.config
    co = compute_ofdma_coefficients(realization, cfg)
    model = RateModel(co.d, co.e, co.snr_slope, co.linear, co.q_cap, co.p_d_max_w)
    res = dual_solve(model, co.p_d_max_w, settings)

    n, k = res.x.shape
    q = np.zeros((n, k))
    p = np.zeros((n, cfg.cus_per_sc))
    rates = np.zeros(n)
    for sc in range(n):
        owner = int(res.assignment[sc])
        if owner == NO_OWNER:
            p[sc] = co.cu_powers(sc, None, 0.0)
            continue
        q[sc, owner] = res.x[sc, owner]
        p[sc] = co.cu_powers(sc, owner, q[sc, owner])
        rates[sc] = ofdma_d2d_rate(q[sc, owner], realization.d2d_gain[sc, owner],
                                   realization.bs_to_d2d_gain[sc, owner], p[sc], co.noise_w)
    alloc = Allocation(res.assignment.astype(int), q, p, rates, float(rates.sum()), scheme="ofdma",
                       converged=res.converged, iterations=res.iterations)
    return alloc, res.state


def verify_feasible_ofdma(alloc: Allocation, realization: ChannelRealization,
                          config: ScenarioConfig | None = None) -> FeasibilityReport:
    """Direct check of the OFDMA constraints; SIC fields are empty (no SIC)."""
    _check_shapes(alloc, realization)
    cfg = config or realization.config
    n, k, m = realization.shape
    noise = cfg.noise_w
    gamma = cfg.gamma_matrix()
    interf = d2d_interference(alloc, realization)
    sinr = alloc.cu_power * realization.cu_gain / (interf + noise / m)
    achieved = np.log2(1.0 + sinr) / m
    return FeasibilityReport(
        sic_adjacent_margin=np.zeros((n, 0)),
        sic_pairwise_margin=np.full((n, m, m), np.nan),
        sic_decode_margin=np.full((n, m, m), np.nan),
        cu_rate_margin=achieved - gamma,
        d2d_budget_slack=cfg.p_d_max_w - alloc.d2d_power.sum(axis=0),
        bs_budget_slack=cfg.p_c_max_w - alloc.cu_power.sum(axis=1),
        exclusivity_ok=_exclusivity(alloc),
        gamma=gamma,
    )

