"""Ground-truth tooling: a direct-SINR feasibility check and a brute-force optimizer.

Nothing here calls the closed forms in :mod:`d2dnoma.cupower`.  CU powers are
obtained by solving the rate equalities from the raw SINR expression, and the
D2D power caps come from writing every constraint as an affine function of
the D2D power.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dbira import NO_OWNER, Allocation
from .scenario import ChannelRealization, ScenarioConfig

RATE_RTOL = 1e-9
POWER_ATOL = 1e-9
MAX_ASSIGNMENTS = 10**5
MAX_GRID_EVALS = 5 * 10**6
REFINE_ROUNDS = 16
REFINE_ATOL = 1e-13


class InstanceTooLarge(ValueError):
    pass


# -- direct evaluation ----------------------------------------------------

def d2d_interference(alloc: Allocation, realization: ChannelRealization) -> np.ndarray:
    """``I[n, i] = sum_k q[n, k] |h_{k,i}^n|^2`` using the transmitted powers."""
    return np.einsum("nk,nki->ni", alloc.d2d_power, realization.cross_gain)


def cu_sinr_direct(n: int, i: int, j: int, p, alloc: Allocation, realization: ChannelRealization,
                   noise_w: float) -> float:
    """SINR at CU ``i`` when decoding the signal of CU ``j <= i`` on SC ``n``."""
    if not 0 <= j <= i < len(p):
        raise IndexError(f"need 0 <= j <= i < M, got i={i}, j={j}")
    h = realization.cu_gain[n, i]
    interf = float(np.dot(alloc.d2d_power[n], realization.cross_gain[n, :, i]))
    return p[j] * h / (h * float(np.sum(p[j + 1:])) + interf + noise_w)


@dataclass
class FeasibilityReport:
    sic_adjacent_margin: np.ndarray  # (N, M-1), SIC order i vs i+1, relative
    sic_pairwise_margin: np.ndarray  # (N, M, M), [n, j, i] for j < i, nan elsewhere
    sic_decode_margin: np.ndarray  # (N, M, M), SINR_{i->j} / SINR_{j->j} - 1 for j < i
    cu_rate_margin: np.ndarray  # (N, M), achieved - required (bits/s/Hz)
    d2d_budget_slack: np.ndarray  # (K,)
    bs_budget_slack: np.ndarray  # (N,)
    exclusivity_ok: np.ndarray  # (N,)
    gamma: np.ndarray = field(repr=False, default=None)

    @property
    def sic_adjacent_ok(self) -> np.ndarray:
        return self.sic_adjacent_margin >= -RATE_RTOL

    @property
    def sic_pairwise_ok(self) -> np.ndarray:
        return np.where(np.isnan(self.sic_pairwise_margin), True, self.sic_pairwise_margin >= -RATE_RTOL)

    @property
    def sic_order_ok(self) -> bool:
        return bool(self.sic_adjacent_ok.all() and self.sic_pairwise_ok.all())

    @property
    def sic_decode_ok(self) -> np.ndarray:
        return np.where(np.isnan(self.sic_decode_margin), True, self.sic_decode_margin >= -RATE_RTOL)

    @property
    def cu_rate_ok(self) -> np.ndarray:
        return self.cu_rate_margin >= -RATE_RTOL * np.maximum(self.gamma, 1.0)

    @property
    def d2d_budget_ok(self) -> np.ndarray:
        return self.d2d_budget_slack >= -POWER_ATOL

    @property
    def bs_budget_ok(self) -> np.ndarray:
        return self.bs_budget_slack >= -POWER_ATOL

    @property
    def overall(self) -> bool:
        return bool(self.sic_order_ok and self.sic_decode_ok.all() and self.cu_rate_ok.all()
                    and self.d2d_budget_ok.all() and self.bs_budget_ok.all() and self.exclusivity_ok.all())

    def violations(self) -> list[str]:
        out = []
        for n, i in zip(*np.nonzero(~self.sic_adjacent_ok)):
            out.append(f"sic_adjacent sc={n} cu={i}->{i + 1} margin={self.sic_adjacent_margin[n, i]:.3e}")
        for n, j, i in zip(*np.nonzero(~self.sic_pairwise_ok)):
            out.append(f"sic_pairwise sc={n} cu={j}<{i} margin={self.sic_pairwise_margin[n, j, i]:.3e}")
        for n, j, i in zip(*np.nonzero(~self.sic_decode_ok)):
            out.append(f"sic_decode sc={n} cu={i} decoding {j} margin={self.sic_decode_margin[n, j, i]:.3e}")
        for n, i in zip(*np.nonzero(~self.cu_rate_ok)):
            out.append(f"cu_rate sc={n} cu={i} margin={self.cu_rate_margin[n, i]:.3e}")
        for k in np.nonzero(~self.d2d_budget_ok)[0]:
            out.append(f"d2d_budget pair={k} slack={self.d2d_budget_slack[k]:.3e}")
        for n in np.nonzero(~self.bs_budget_ok)[0]:
            out.append(f"bs_budget sc={n} slack={self.bs_budget_slack[n]:.3e}")
        for n in np.nonzero(~self.exclusivity_ok)[0]:
            out.append(f"exclusivity sc={n}")
        return out

    def to_dict(self) -> dict:
        def clean(a):
            return np.where(np.isnan(a), None, a).tolist() if np.asarray(a).dtype.kind == "f" else a.tolist()

        return {
            "overall": self.overall,
            "sic_order_ok": self.sic_order_ok,
            "sic_adjacent_ok": self.sic_adjacent_ok.tolist(),
            "sic_pairwise_ok": self.sic_pairwise_ok.tolist(),
            "sic_decode_ok": self.sic_decode_ok.tolist(),
            "cu_rate_ok": self.cu_rate_ok.tolist(),
            "d2d_budget_ok": self.d2d_budget_ok.tolist(),
            "bs_budget_ok": self.bs_budget_ok.tolist(),
            "exclusivity_ok": self.exclusivity_ok.tolist(),
            "margins": {
                "sic_adjacent": clean(self.sic_adjacent_margin),
                "cu_rate": clean(self.cu_rate_margin),
                "d2d_budget_slack": clean(self.d2d_budget_slack),
                "bs_budget_slack": clean(self.bs_budget_slack),
            },
            "violations": self.violations(),
        }


def _check_shapes(alloc: Allocation, realization: ChannelRealization) -> None:
    n, k, m = realization.shape
    expected = {"assignment": (n,), "d2d_power": (n, k), "cu_power": (n, m)}
    for name, shape in expected.items():
        got = np.shape(getattr(alloc, name))
        if got != shape:
            raise ValueError(f"allocation {name}: expected shape {shape}, got {got}")


def _exclusivity(alloc: Allocation) -> np.ndarray:
    q = alloc.d2d_power
    active = q > 0
    n, k = q.shape
    owner_mask = np.zeros((n, k), dtype=bool)
    owned = alloc.assignment >= 0
    owner_mask[np.nonzero(owned)[0], alloc.assignment[owned]] = True
    return (active.sum(axis=1) <= 1) & ~np.any(active & ~owner_mask, axis=1) & np.all(q >= 0, axis=1)


def verify_feasible(alloc: Allocation, realization: ChannelRealization,
                    config: ScenarioConfig | None = None) -> FeasibilityReport:
    """Check every constraint of the NOMA problem by direct evaluation."""
    _check_shapes(alloc, realization)
    cfg = config or realization.config
    noise = cfg.noise_w
    gamma = cfg.gamma_matrix()
    h = realization.cu_gain
    p = alloc.cu_power
    n_sc, k, m = realization.shape
    interf = d2d_interference(alloc, realization)
    # effective noise seen by each CU, normalized by its own gain
    eff = (interf + noise) / h
    adjacent = eff[:, :-1] / eff[:, 1:] - 1.0
    lower = np.tril(np.ones((m, m), dtype=bool), -1).T  # [j, i] with j < i
    pairwise = np.where(lower, eff[:, :, None] / eff[:, None, :] - 1.0, np.nan)

    # sinr[n, i, j]: CU i decoding CU j, with everything above j as interference
    above = np.cumsum(p[:, ::-1], axis=1)[:, ::-1] - p
    sinr = p[:, None, :] * h[:, :, None] / (h[:, :, None] * above[:, None, :] + (interf + noise)[:, :, None])
    own = np.einsum("nii->ni", sinr)
    rate_margin = np.log2(1.0 + own) - gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.swapaxes(sinr, 1, 2) / own[:, :, None] - 1.0  # [n, j, i]
    ratio = np.where(own[:, :, None] > 0, ratio, 0.0)
    decode = np.where(lower, ratio, np.nan)

    return FeasibilityReport(
        sic_adjacent_margin=adjacent,
        sic_pairwise_margin=pairwise,
        sic_decode_margin=decode,
        cu_rate_margin=rate_margin,
        d2d_budget_slack=cfg.p_d_max_w - alloc.d2d_power.sum(axis=0),
        bs_budget_slack=cfg.p_c_max_w - p.sum(axis=1),
        exclusivity_ok=_exclusivity(alloc),
        gamma=gamma,
    )


# -- brute force ------------------------------------------------------------

def tight_cu_powers(h, interference, gamma, noise_w: float) -> np.ndarray:
    """Solve ``log2(1 + SINR_{i->i}) = gamma_i`` for all CUs, strongest first."""
    m = len(h)
    p = np.zeros(m)
    tail = 0.0
    for i in range(m - 1, -1, -1):
        target = 2.0 ** gamma[i] - 1.0
        p[i] = target * (tail + (interference[i] + noise_w) / h[i])
        tail += p[i]
    return p


@dataclass
class _Link:
    """Affine description of SC ``n`` reused by pair ``k``."""

    p0: np.ndarray  # CU powers at q = 0
    p_slope: np.ndarray  # dp/dq
    cap: float  # largest feasible q (before the pair budget)
    g: float
    g_b: float

    def cu_powers(self, q):
        return self.p0 + q * self.p_slope

    def rate(self, q, noise_w):
        total = self.p0.sum() + q * self.p_slope.sum()
        return np.log2(1.0 + q * self.g / (self.g_b * total + noise_w))


def _link(n: int, k: int, realization: ChannelRealization, gamma, cfg: ScenarioConfig) -> _Link:
    noise = cfg.noise_w
    h = realization.cu_gain[n]
    c = realization.cross_gain[n, k]
    p0 = tight_cu_powers(h, np.zeros_like(h), gamma[n], noise)
    p1 = tight_cu_powers(h, c, gamma[n], noise)
    slope = p1 - p0

    caps = []
    budget_room = cfg.p_c_max_w - p0.sum()
    if budget_room < 0:
        caps.append(0.0)
    elif slope.sum() > 0:
        caps.append(budget_room / slope.sum())
    # (q c_j + noise)/h_j >= (q c_i + noise)/h_i for every j < i
    for i in range(len(h)):
        for j in range(i):
            a = c[j] / h[j] - c[i] / h[i]
            b = noise / h[j] - noise / h[i]
            if a < 0:
                caps.append(max(0.0, b / -a))
            elif b < 0:
                caps.append(0.0)
    cap = min(caps) if caps else math.inf
    return _Link(p0, slope, cap, realization.d2d_gain[n, k], realization.bs_to_d2d_gain[n, k])


def _best_split(links: list[_Link], p_d_max: float, noise_w: float, grid_points: int):
    """Maximize the summed rate of one pair over its owned SCs.

    Grid over all but the last SC; the last one takes whatever budget is left
    (rates are increasing).  The best grid point is then refined by repeated
    10x zooms until the cell width drops below ``REFINE_ATOL`` watts.
    """
    ubs = np.array([min(l.cap, p_d_max) for l in links])
    last = links[-1]

    def evaluate(axes):
        mesh = np.meshgrid(*axes, indexing="ij") if axes else []
        pts = np.stack([m.ravel() for m in mesh], axis=1) if axes else np.zeros((1, 0))
        used = pts.sum(axis=1)
        q_last = np.minimum(ubs[-1], p_d_max - used)
        ok = q_last >= -1e-15
        q_last = np.maximum(q_last, 0.0)
        total = last.rate(q_last, noise_w)
        for j, l in enumerate(links[:-1]):
            total = total + l.rate(pts[:, j], noise_w)
        total = np.where(ok, total, -np.inf)
        b = int(np.argmax(total))
        return float(total[b]), np.append(pts[b], q_last[b])

    s = len(links) - 1
    if grid_points ** s > MAX_GRID_EVALS:
        raise InstanceTooLarge(f"a pair owning {len(links)} SCs needs {grid_points}^{s} grid evaluations")
    axes = [np.linspace(0.0, ub, grid_points) for ub in ubs[:-1]]
    val, q = evaluate(axes)
    width = ubs[:-1] / (grid_points - 1)
    # zoom: 21 points across +-1 cell of the incumbent, 10x finer each round
    for _ in range(REFINE_ROUNDS if s else 0):
        if not np.any(width > REFINE_ATOL):
            break
        fine = [np.linspace(max(0.0, q[j] - w), min(ub, q[j] + w), 21)
                for j, (ub, w) in enumerate(zip(ubs[:-1], width))]
        val2, q2 = evaluate(fine)
        if val2 >= val:
            val, q = val2, q2
        width = width / 10.0
    return val, q


def brute_force(realization: ChannelRealization, config: ScenarioConfig | None = None,
                grid_points: int = 200) -> Allocation:
    """Exhaustive assignment enumeration with per-pair grid power search."""
    cfg = config or realization.config
    n, k, m = realization.shape
    if (k + 1) ** n > MAX_ASSIGNMENTS:
        raise InstanceTooLarge(f"(K+1)^N = {k + 1}^{n} exceeds the enumeration bound {MAX_ASSIGNMENTS}")
    if grid_points < 50:
        raise ValueError("grid_points must be >= 50")
    gamma = cfg.gamma_matrix()
    noise = cfg.noise_w
    p_d = cfg.p_d_max_w
    links = [[_link(sc, pair, realization, gamma, cfg) for pair in range(k)] for sc in range(n)]

    # the problem separates per pair once the SC sets are fixed
    best_for = {}
    for pair in range(k):
        for mask in range(1, 1 << n):
            scs = [sc for sc in range(n) if mask >> sc & 1]
            best_for[pair, mask] = _best_split([links[sc][pair] for sc in scs], p_d, noise, grid_points)

    best_val, best_map = 0.0, (NO_OWNER,) * n
    for amap in itertools.product(range(-1, k), repeat=n):
        masks = [0] * k
        for sc, owner in enumerate(amap):
            if owner >= 0:
                masks[owner] |= 1 << sc
        val = sum(best_for[pair, mk][0] for pair, mk in enumerate(masks) if mk)
        if val > best_val:
            best_val, best_map = val, amap

    assignment = np.full(n, NO_OWNER)
    q = np.zeros((n, k))
    p = np.zeros((n, m))
    rates = np.zeros(n)
    masks = [0] * k
    for sc, owner in enumerate(best_map):
        if owner >= 0:
            masks[owner] |= 1 << sc
    for pair, mk in enumerate(masks):
        if not mk:
            continue
        scs = [sc for sc in range(n) if mk >> sc & 1]
        _, qs = best_for[pair, mk]
        for sc, qv in zip(scs, qs):
            if qv > 0:
                assignment[sc] = pair
                q[sc, pair] = qv
    for sc in range(n):
        owner = assignment[sc]
        link = links[sc][max(owner, 0)]
        qv = q[sc, owner] if owner >= 0 else 0.0
        p[sc] = link.cu_powers(qv)
        rates[sc] = float(link.rate(qv, noise)) if owner >= 0 else 0.0
    return Allocation(assignment, q, p, rates, float(rates.sum()), scheme="noma", converged=True, iterations=0)
