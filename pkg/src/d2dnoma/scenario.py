"""Random network realizations for D2D pairs underlaying a downlink NOMA cell.

A square cell with the BS at its center serves ``N`` subchannels, each carrying
``M`` dedicated CUs.  ``K`` D2D transmitters are dropped uniformly in the cell
and each receiver lies uniformly in a disc around its transmitter.  Link gains
are Okumura-Hata path loss plus log-normal shadowing (no small-scale fading),
so the gain of a physical link is identical on every subchannel.

Array conventions (0-based):

    cu_gain[n, i]         |h_i^n|^2, ascending in i for every n (SIC order)
    cross_gain[n, k, i]   |h_{k,i}^n|^2, D2D transmitter k -> CU i of SC n
    d2d_gain[n, k]        |g_k^n|^2
    bs_to_d2d_gain[n, k]  |g_{k,B}^n|^2
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class LinkKind(str, Enum):
    BS_TO_NODE = "bs_to_node"
    NODE_TO_NODE = "node_to_node"


def dbm_to_watt(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class PathlossParams:
    """Okumura-Hata (urban, small/medium city) constants.

    Node-to-node links reuse the same formula with both antennas at
    ``mobile_height_m``.  Distances below ``min_distance_m`` are clamped.
    """

    carrier_mhz: float = 900.0
    bs_height_m: float = 30.0
    mobile_height_m: float = 1.5
    min_distance_m: float = 1.0
    reference_distance_m: float = 1000.0


def _hata_terms(tx_height: float, rx_height: float, params: PathlossParams):
    logf = math.log10(params.carrier_mhz)
    a_rx = (1.1 * logf - 0.7) * rx_height - (1.56 * logf - 0.8)
    intercept = 69.55 + 26.16 * logf - 13.82 * math.log10(tx_height) - a_rx
    slope = 44.9 - 6.55 * math.log10(tx_height)
    return intercept, slope


def pathloss_intercept_db(link_kind: LinkKind | str, params: PathlossParams = PathlossParams()) -> float:
    """Path loss at ``params.reference_distance_m`` (1 km for Hata)."""
    return float(pathloss_db(params.reference_distance_m, link_kind, params))


def pathloss_db(distance_m, link_kind: LinkKind | str, params: PathlossParams = PathlossParams()):
    """Okumura-Hata path loss in dB; accepts scalars or arrays of distances."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("distance must be strictly positive")
    kind = LinkKind(link_kind)
    tx_h = params.bs_height_m if kind is LinkKind.BS_TO_NODE else params.mobile_height_m
    intercept, slope = _hata_terms(tx_h, params.mobile_height_m, params)
    d_km = np.maximum(d, params.min_distance_m) / 1000.0
    loss = intercept + slope * np.log10(d_km)
    return float(loss) if loss.ndim == 0 else loss


@dataclass(frozen=True)
class ScenarioConfig:
    n_subchannels: int = 30
    cus_per_sc: int = 2
    n_d2d_pairs: int = 10
    p_c_max_dbm: float = 35.0
    p_d_max_dbm: float = 25.0
    noise_power_dbm: float = -114.0
    # scalar (uniform gamma_th) or an N x M nested sequence
    gamma: Any = 1.0
    cell_side_m: float = 500.0
    d2d_max_dist_m: float = 30.0
    pathloss_params: PathlossParams = field(default_factory=PathlossParams)
    shadowing_sigma_db: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.pathloss_params, dict):
            object.__setattr__(self, "pathloss_params", PathlossParams(**self.pathloss_params))
        if not np.isscalar(self.gamma):
            g = tuple(tuple(float(v) for v in row) for row in self.gamma)
            object.__setattr__(self, "gamma", g)

    @property
    def p_c_max_w(self) -> float:
        return float(dbm_to_watt(self.p_c_max_dbm))

    @property
    def p_d_max_w(self) -> float:
        return float(dbm_to_watt(self.p_d_max_dbm))

    @property
    def noise_w(self) -> float:
        return float(dbm_to_watt(self.noise_power_dbm))

    def gamma_matrix(self) -> np.ndarray:
        shape = (self.n_subchannels, self.cus_per_sc)
        if np.isscalar(self.gamma):
            return np.full(shape, float(self.gamma))
        g = np.asarray(self.gamma, dtype=float)
        if g.shape != shape:
            raise ConfigError("gamma", f"expected shape {shape}, got {g.shape}")
        return g

    def validate(self) -> "ScenarioConfig":
        for name in ("n_subchannels", "cus_per_sc", "n_d2d_pairs"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(name, f"must be a positive integer, got {v!r}")
        if self.n_d2d_pairs > self.n_subchannels:
            raise ConfigError("n_d2d_pairs", "K <= N is required (n_d2d_pairs must not exceed n_subchannels)")
        for name in ("p_c_max_dbm", "p_d_max_dbm", "noise_power_dbm", "shadowing_sigma_db"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(name, "must be finite")
        if self.shadowing_sigma_db < 0:
            raise ConfigError("shadowing_sigma_db", "must be non-negative")
        g = self.gamma_matrix()
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ConfigError("gamma", "rate requirements must be finite and >= 0")
        if not self.cell_side_m > 0:
            raise ConfigError("cell_side_m", "must be positive")
        if not 0 < self.d2d_max_dist_m < self.cell_side_m:
            raise ConfigError("d2d_max_dist_m", "must satisfy 0 < d2d_max_dist_m < cell_side_m")
        if not (isinstance(self.seed, (int, np.integer)) and self.seed >= 0):
            raise ConfigError("seed", "must be an unsigned integer")
        return self

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if not np.isscalar(self.gamma):
            d["gamma"] = [list(r) for r in self.gamma]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        return cls(**data)


@dataclass(frozen=True)
class Layout:
    """Raw node placements and shadowing draws (CUs in raw, unsorted order)."""

    bs_xy: np.ndarray  # (2,)
    cu_xy: np.ndarray  # (N, M, 2)
    d2d_tx_xy: np.ndarray  # (K, 2)
    d2d_rx_xy: np.ndarray  # (K, 2)
    cu_shadow_db: np.ndarray  # (N, M)
    cross_shadow_db: np.ndarray  # (N, K, M)
    d2d_shadow_db: np.ndarray  # (K,)
    bs_d2d_shadow_db: np.ndarray  # (K,)
    cu_order: np.ndarray  # (N, M): sorted position -> raw CU index


@dataclass(frozen=True)
class ChannelRealization:
    cu_gain: np.ndarray
    cross_gain: np.ndarray
    d2d_gain: np.ndarray
    bs_to_d2d_gain: np.ndarray
    seed_used: int
    config: ScenarioConfig
    layout: Layout | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        """(N, K, M)"""
        return self.cross_gain.shape

    def to_json(self) -> str:
        doc = {
            "format": "d2dnoma.channels/1",
            "config": self.config.to_dict(),
            "seed_used": int(self.seed_used),
            "cu_gain": self.cu_gain.tolist(),
            "cross_gain": self.cross_gain.tolist(),
            "d2d_gain": self.d2d_gain.tolist(),
            "bs_to_d2d_gain": self.bs_to_d2d_gain.tolist(),
        }
        if self.layout is not None:
            doc["layout"] = {f.name: getattr(self.layout, f.name).tolist()
                             for f in dataclasses.fields(Layout)}
        return json.dumps(doc, indent=1, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "ChannelRealization":
        doc = json.loads(text)
        layout = None
        if "layout" in doc:
            lay = doc["layout"]
            layout = Layout(**{f.name: np.asarray(lay[f.name], dtype=int if f.name == "cu_order" else float)
                               for f in dataclasses.fields(Layout)})
        real = cls(
            cu_gain=np.asarray(doc["cu_gain"], dtype=float),
            cross_gain=np.asarray(doc["cross_gain"], dtype=float),
            d2d_gain=np.asarray(doc["d2d_gain"], dtype=float),
            bs_to_d2d_gain=np.asarray(doc["bs_to_d2d_gain"], dtype=float),
            seed_used=int(doc["seed_used"]),
            config=ScenarioConfig.from_dict(doc["config"]),
            layout=layout,
        )
        check_realization(real)
        return real


def check_realization(real: ChannelRealization) -> None:
    cfg = real.config
    n, m, k = cfg.n_subchannels, cfg.cus_per_sc, cfg.n_d2d_pairs
    expected = {
        "cu_gain": (n, m),
        "cross_gain": (n, k, m),
        "d2d_gain": (n, k),
        "bs_to_d2d_gain": (n, k),
    }
    for name, shape in expected.items():
        arr = getattr(real, name)
        if arr.shape != shape:
            raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
        if not (np.all(np.isfinite(arr)) and np.all(arr > 0)):
            raise ValueError(f"{name}: gains must be strictly positive and finite")
    if np.any(np.diff(real.cu_gain, axis=1) < 0):
        raise ValueError("cu_gain must be ascending in CU index on every SC")


def order_cus(raw_gains) -> tuple[np.ndarray, np.ndarray]:
    """Stable ascending sort of one SC's CU gains.

    Returns ``(perm, sorted_gains)`` with ``sorted_gains == raw_gains[perm]``.
    """
    g = np.asarray(raw_gains, dtype=float)
    if g.ndim != 1 or g.size < 1 or np.any(~(g > 0)):
        raise ValueError("raw_gains must be a non-empty 1-D array of positive gains")
    perm = np.argsort(g, kind="stable")
    return perm, g[perm]


def _uniform_in_disc(rng: np.random.Generator, centers: np.ndarray, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(len(centers)))
    phi = rng.uniform(0.0, 2.0 * np.pi, len(centers))
    return centers + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def _to_gain(loss_db: np.ndarray) -> np.ndarray:
    return 10.0 ** (-loss_db / 10.0)


def gains_from_layout(layout: Layout, config: ScenarioConfig):
    """Recompute SIC-ordered linear gains from a stored layout."""
    pl = config.pathloss_params
    bs_cu = np.linalg.norm(layout.cu_xy - layout.bs_xy, axis=-1)
    raw_cu = _to_gain(pathloss_db(bs_cu, LinkKind.BS_TO_NODE, pl) + layout.cu_shadow_db)
    # (N, K, M) distances from each D2D transmitter to each CU
    tx_cu = np.linalg.norm(layout.cu_xy[:, None, :, :] - layout.d2d_tx_xy[None, :, None, :], axis=-1)
    raw_cross = _to_gain(pathloss_db(tx_cu, LinkKind.NODE_TO_NODE, pl) + layout.cross_shadow_db)
    pair = np.linalg.norm(layout.d2d_rx_xy - layout.d2d_tx_xy, axis=-1)
    d2d = _to_gain(pathloss_db(pair, LinkKind.NODE_TO_NODE, pl) + layout.d2d_shadow_db)
    bs_rx = np.linalg.norm(layout.d2d_rx_xy - layout.bs_xy, axis=-1)
    bs_d2d = _to_gain(pathloss_db(bs_rx, LinkKind.BS_TO_NODE, pl) + layout.bs_d2d_shadow_db)

    order = layout.cu_order
    cu_gain = np.take_along_axis(raw_cu, order, axis=1)
    cross_gain = np.take_along_axis(raw_cross, order[:, None, :], axis=2)
    n = config.n_subchannels
    return cu_gain, cross_gain, np.tile(d2d, (n, 1)), np.tile(bs_d2d, (n, 1))


def generate_scenario(config: ScenarioConfig, seed: int | None = None) -> ChannelRealization:
    """Draw one channel realization; ``seed`` overrides ``config.seed``."""
    config.validate()
    if seed is not None:
        config = config.replace(seed=int(seed))
        config.validate()
    n, m, k = config.n_subchannels, config.cus_per_sc, config.n_d2d_pairs
    side, sigma = config.cell_side_m, config.shadowing_sigma_db
    rng = np.random.default_rng(config.seed)

    bs_xy = np.array([side / 2.0, side / 2.0])
    cu_xy = rng.uniform(0.0, side, size=(n, m, 2))
    tx_xy = rng.uniform(0.0, side, size=(k, 2))
    rx_xy = _uniform_in_disc(rng, tx_xy, config.d2d_max_dist_m)
    cu_sh = rng.normal(0.0, sigma, size=(n, m))
    cross_sh = rng.normal(0.0, sigma, size=(n, k, m))
    d2d_sh = rng.normal(0.0, sigma, size=k)
    bs_d2d_sh = rng.normal(0.0, sigma, size=k)

    bs_cu = np.linalg.norm(cu_xy - bs_xy, axis=-1)
    raw_cu = _to_gain(pathloss_db(bs_cu, LinkKind.BS_TO_NODE, config.pathloss_params) + cu_sh)
    cu_order = np.stack([order_cus(row)[0] for row in raw_cu])

    layout = Layout(bs_xy, cu_xy, tx_xy, rx_xy, cu_sh, cross_sh, d2d_sh, bs_d2d_sh, cu_order)
    cu_gain, cross_gain, d2d_gain, bs_d2d_gain = gains_from_layout(layout, config)
    real = ChannelRealization(cu_gain, cross_gain, d2d_gain, bs_d2d_gain, config.seed, config, layout)
    check_realization(real)
    return real
