"""Dual-based iterative resource allocation (DBIRA).

The relaxed problem is solved by dual decomposition: for fixed power prices
``lam[k]`` every (SC, pair) entry has a closed-form stationary power, each SC
goes to the pair with the largest marginal value ``H = R(T) - T R'(T)``, and the
prices follow a projected subgradient step on the per-pair power budgets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cupower import INF, CoefficientSet, cu_powers
from .scenario import ChannelRealization

LN2 = math.log(2.0)
NO_OWNER = -1


class SolverNumericError(RuntimeError):
    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass(frozen=True)
class SolverSettings:
    """Knobs for the dual iteration.

    ``step_rule="relative"`` uses ``theta_k = step0 * max(lam_k, floor) / P^D / t^step_decay``
    so every pair's price moves by a comparable fraction per step regardless of
    its scale; ``"additive"`` uses ``theta = step0 / t^step_decay`` (default
    ``step0 = 0.1 / P^D^2``).  ``hysteresis`` keeps the current owner of a SC
    while its marginal value is within that relative margin of the best one.
    """

    epsilon: float = 1e-4
    max_iterations: int = 500
    # None -> 1 / P^D_max
    lambda0: float | None = None
    step_rule: str = "relative"
    step0: float | None = None
    step_decay: float = 0.5
    lambda_floor: float = 1e-3  # in units of 1 / P^D_max
    hysteresis: float = 0.03
    tie_rule: str = "lowest"
    # "priced": R(T) - lam T; "tangent": R(T) - T R'(T)
    marginal: str = "priced"
    min_iterations: int = 2

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.lambda0 is not None and not self.lambda0 >= 0:
            raise ValueError("lambda0 must be non-negative")
        if self.step0 is not None and not self.step0 > 0:
            raise ValueError("step0 must be positive")
        if self.step_rule not in ("relative", "additive"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.step_decay < 0 or not 0 <= self.hysteresis < 1:
            raise ValueError("step_decay must be >= 0 and hysteresis in [0, 1)")
        if self.marginal not in ("priced", "tangent"):
            raise ValueError(f"unknown marginal rule {self.marginal!r}")
        if self.tie_rule not in ("lowest", "highest"):
            raise ValueError(f"unknown tie rule {self.tie_rule!r}")

    def initial_lambda(self, p_d_max_w: float) -> float:
        return 1.0 / p_d_max_w if self.lambda0 is None else self.lambda0

    def step(self, t: int, p_d_max_w: float, lam) -> np.ndarray:
        """Per-pair step sizes ``theta_k`` at iteration ``t >= 1``."""
        decay = float(t) ** -self.step_decay
        lam = np.asarray(lam, dtype=float)
        if self.step_rule == "relative":
            c = 1.0 if self.step0 is None else self.step0
            return c * decay * np.maximum(lam, self.lambda_floor / p_d_max_w) / p_d_max_w
        theta0 = 0.1 / p_d_max_w**2 if self.step0 is None else self.step0
        return np.full(lam.shape, theta0 * decay)


@dataclass
class DualState:
    lam: np.ndarray
    beta_threshold: np.ndarray
    iteration: int = 0
    objective_trace: list = field(default_factory=list)
    lambda_trace: list = field(default_factory=list)
    slack_trace: list = field(default_factory=list)


@dataclass
class Allocation:
    assignment: np.ndarray  # (N,) owner pair or NO_OWNER
    d2d_power: np.ndarray  # (N, K) watts
    cu_power: np.ndarray  # (N, M) watts
    d2d_rates: np.ndarray  # (N,) bits/s/Hz
    objective: float
    scheme: str = "noma"
    converged: bool = True
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "format": "d2dnoma.allocation/1",
            "scheme": self.scheme,
            "objective": float(self.objective),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "assignment": [int(a) if a >= 0 else None for a in self.assignment],
            "d2d_power": self.d2d_power.tolist(),
            "cu_power": self.cu_power.tolist(),
            "d2d_rates": self.d2d_rates.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, allow_nan=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "Allocation":
        return cls(
            assignment=np.array([NO_OWNER if a is None else int(a) for a in doc["assignment"]], dtype=int),
            d2d_power=np.asarray(doc["d2d_power"], dtype=float),
            cu_power=np.asarray(doc["cu_power"], dtype=float),
            d2d_rates=np.asarray(doc["d2d_rates"], dtype=float),
            objective=float(doc["objective"]),
            scheme=doc.get("scheme", "noma"),
            converged=bool(doc.get("converged", True)),
            iterations=int(doc.get("iterations", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "Allocation":
        return cls.from_dict(json.loads(text))


# -- single-entry operations ------------------------------------------------

def optimal_t(lambda_k, d, e):
    """Larger root of ``(d+1)t^2 + (d+2)e t + e^2 - d e/(lam ln2) = 0``.

    Returns ``inf`` at ``lam == 0``.  Computed in the cancellation-free form
    ``2(de/(lam ln2) - e^2) / ((d+2)e + sqrt(disc))``.
    """
    lam, d, e = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lambda_k, d, e)))
    with np.errstate(divide="ignore", invalid="ignore"):
        price = d * e / (lam * LN2)
        disc = d * d * e * e + 4.0 * (d + 1.0) * price
        t = 2.0 * (price - e * e) / ((d + 2.0) * e + np.sqrt(disc))
    t = np.where(lam > 0, t, INF)
    return float(t) if t.ndim == 0 else t


def clamp_power(t, q_cap, p_d_max_w: float = INF):
    """``min(max(t, 0), cap)`` with an unbounded cap replaced by the pair budget."""
    cap = np.minimum(np.asarray(q_cap, dtype=float), p_d_max_w)
    out = np.minimum(np.maximum(np.asarray(t, dtype=float), 0.0), cap)
    return float(out) if out.ndim == 0 else out


def rate_derivative(T, d, e):
    T = np.asarray(T, dtype=float)
    return d * e / ((T + e) * (T * (1.0 + d) + e) * LN2)


def marginal_value(T, d, e, lam=None):
    """Value of owning the SC at clamped power ``T``.

    Tangent form ``R(T) - T R'(T)`` by default; given the pair price ``lam`` it
    returns ``R(T) - lam T``, which also prices a binding power cap.
    """
    T = np.asarray(T, dtype=float)
    r = np.log2(1.0 + d * T / (T + e))
    slope = rate_derivative(T, d, e) if lam is None else lam
    h = np.maximum(r - T * slope, 0.0)
    return float(h) if h.ndim == 0 else h


def assign_channels(H, tie_rule: str = "lowest", incumbent=None, hysteresis: float = 0.0) -> np.ndarray:
    """Owner per SC: argmax over pairs, or ``NO_OWNER`` if nobody gains.

    With an ``incumbent`` assignment, a current owner whose value is within
    ``hysteresis`` (relative) of the row maximum keeps the SC.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n, k = H.shape
    rows = np.arange(n)
    if tie_rule == "highest":
        owner = k - 1 - np.argmax(H[:, ::-1], axis=1)
    else:
        owner = np.argmax(H, axis=1)
    best = H[rows, owner]
    owner = np.where(best > 0, owner, NO_OWNER)
    if incumbent is not None and hysteresis > 0:
        inc = np.asarray(incumbent)
        h_inc = np.where(inc >= 0, H[rows, np.maximum(inc, 0)], 0.0)
        keep = (inc >= 0) & (h_inc > 0) & (h_inc >= (1.0 - hysteresis) * best)
        owner = np.where(keep, inc, owner)
    return owner


def update_duals(state: DualState, x, p_d_max_w: float, settings: SolverSettings) -> DualState:
    """Projected subgradient step ``lam <- [lam - theta (P^D - sum_n x)]^+``."""
    slack = p_d_max_w - np.asarray(x, dtype=float).sum(axis=0)
    t = state.iteration + 1
    theta = settings.step(t, p_d_max_w, state.lam)
    state.lam = np.maximum(state.lam - theta * slack, 0.0)
    state.iteration = t
    state.slack_trace.append(slack)
    state.lambda_trace.append(state.lam.copy())
    return state


# -- vectorized rate model ------------------------------------------------

class RateModel:
    """Concave per-(SC, pair) rate curves plus power caps.

    Entries flagged ``linear`` use ``log2(1 + a q)`` (CUs silent); the rest use
    ``log2(1 + d q / (q + e))``.
    """

    def __init__(self, d, e, snr_slope, linear, q_cap, p_d_max_w: float):
        linear = np.broadcast_to(np.asarray(linear, dtype=bool), np.shape(q_cap))
        self.linear = linear
        self.any_linear = bool(linear.any())
        self.d = np.where(linear, 1.0, d)
        self.e = np.where(linear, 1.0, e)
        self.a = np.asarray(snr_slope, dtype=float)
        self.cap = np.minimum(np.asarray(q_cap, dtype=float), p_d_max_w)

    @classmethod
    def from_coefficients(cls, coeffs) -> "RateModel":
        return cls(coeffs.d, coeffs.e, coeffs.snr_slope, coeffs.linear, coeffs.q_cap, coeffs.p_d_max_w)

    def rate(self, T):
        r = np.log2(1.0 + self.d * T / (T + self.e))
        if self.any_linear:
            r = np.where(self.linear, np.log2(1.0 + self.a * T), r)
        return r

    def derivative(self, T):
        g = self.d * self.e / ((T + self.e) * (T * (1.0 + self.d) + self.e) * LN2)
        if self.any_linear:
            g = np.where(self.linear, self.a / ((1.0 + self.a * T) * LN2), g)
        return g

    def stationary(self, lam):
        lam = np.broadcast_to(lam, self.cap.shape)
        t = optimal_t(lam, self.d, self.e)
        if self.any_linear:
            with np.errstate(divide="ignore"):
                t_lin = 1.0 / (lam * LN2) - 1.0 / self.a
            t = np.where(self.linear, t_lin, t)
        return t

    def clamped(self, lam):
        return np.minimum(np.maximum(self.stationary(lam), 0.0), self.cap)

    def marginal(self, T, lam=None):
        """``R(T) - lam T``; with ``lam=None`` the tangent form ``R(T) - T R'(T)``.

        The two agree whenever ``T`` is interior.  At a binding cap the priced
        form also counts the cap multiplier, which the tangent form drops.
        """
        slope = self.derivative(T) if lam is None else lam
        return np.maximum(self.rate(T) - T * slope, 0.0)


@dataclass
class DualResult:
    x: np.ndarray  # (N, K) budget-feasible powers
    assignment: np.ndarray
    objective: float
    converged: bool
    iterations: int
    state: DualState


def _repair(x: np.ndarray, p_d_max_w: float) -> np.ndarray:
    total = x.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(total > p_d_max_w, p_d_max_w / total, 1.0)
    return x * scale


def _polish(model: RateModel, owner: np.ndarray, p_d_max_w: float, rounds: int = 60) -> np.ndarray:
    """Optimal powers for a fixed assignment.

    Each pair then faces a concave split of its budget over the SCs it owns;
    bisection on its price finds the point where the budget is just met.
    """
    n, k = model.cap.shape
    rows = np.arange(n)
    owned = owner >= 0
    mask = np.zeros((n, k), dtype=bool)
    mask[rows[owned], owner[owned]] = True

    def used(lam):
        return np.where(mask, model.clamped(lam[None, :]), 0.0).sum(axis=0)

    hi = np.full(k, 1.0 / p_d_max_w)
    for _ in range(200):
        over = used(hi) > p_d_max_w
        if not over.any():
            break
        hi = np.where(over, 4.0 * hi, hi)
    lo = np.zeros(k)
    tight = used(lo) > p_d_max_w
    for _ in range(rounds):
        mid = 0.5 * (lo + hi)
        over = used(mid) > p_d_max_w
        lo = np.where(over, mid, lo)
        hi = np.where(over, hi, mid)
    lam = np.where(tight, hi, 0.0)
    return _repair(np.where(mask, model.clamped(lam[None, :]), 0.0), p_d_max_w)


def dual_solve(model: RateModel, p_d_max_w: float, settings: SolverSettings = SolverSettings()) -> DualResult:
    """Run the dual subgradient iteration on ``model``.

    Stops when consecutive primal objectives differ by less than ``epsilon``.
    The returned powers are the best budget-feasible iterate seen (iterates
    that overshoot a pair budget are rescaled proportionally first), re-split
    optimally over that iterate's assignment.
    """
    n, k = model.cap.shape
    rows = np.arange(n)
    lam0 = settings.initial_lambda(p_d_max_w)
    state = DualState(lam=np.full(k, lam0, dtype=float), beta_threshold=np.zeros(n))

    best_obj, best_x, best_owner = 0.0, np.zeros((n, k)), np.full(n, NO_OWNER)
    prev_obj = 0.0
    owner_prev = None
    converged = False
    for _ in range(settings.max_iterations):
        lam_row = state.lam[None, :]
        T = model.clamped(lam_row)
        H = model.marginal(T, lam_row if settings.marginal == "priced" else None)
        owner = assign_channels(H, settings.tie_rule, owner_prev, settings.hysteresis)
        owner_prev = owner
        owned = owner >= 0
        x = np.zeros((n, k))
        x[rows[owned], owner[owned]] = T[rows[owned], owner[owned]]

        rates = model.rate(x)
        obj = float(rates[rows[owned], owner[owned]].sum())
        if not math.isfinite(obj) or not np.all(np.isfinite(state.lam)):
            raise SolverNumericError(
                f"non-finite value at iteration {state.iteration + 1}",
                {"iteration": state.iteration + 1, "lambda": state.lam.tolist(), "x": x.tolist()},
            )
        state.beta_threshold = H.max(axis=1)
        state.objective_trace.append(obj)

        if np.any(x.sum(axis=0) > p_d_max_w):
            xr = _repair(x, p_d_max_w)
            obj_r = float(model.rate(xr)[rows[owned], owner[owned]].sum())
        else:
            xr, obj_r = x, obj
        if obj_r > best_obj:
            best_obj, best_x, best_owner = obj_r, xr, owner

        lam_before = state.lam
        update_duals(state, x, p_d_max_w, settings)
        # a zero objective while prices are still falling is a plateau, not convergence
        stalled_at_zero = obj == 0.0 and np.any(state.lam < lam_before)
        if (state.iteration >= settings.min_iterations and abs(obj - prev_obj) < settings.epsilon
                and not stalled_at_zero):
            converged = True
            break
        prev_obj = obj

    if best_obj > 0:
        xp = _polish(model, best_owner, p_d_max_w)
        obj_p = float(model.rate(xp)[rows[best_owner >= 0], best_owner[best_owner >= 0]].sum())
        if obj_p > best_obj:
            best_obj, best_x = obj_p, xp
    return DualResult(best_x, best_owner, best_obj, converged, state.iteration, state)


def solve(realization: ChannelRealization, coefficients: CoefficientSet,
          settings: SolverSettings = SolverSettings()) -> tuple[Allocation, DualState]:
    """DBIRA on a NOMA realization; returns the allocation and the dual trace."""
    model = RateModel.from_coefficients(coefficients)
    res = dual_solve(model, coefficients.p_d_max_w, settings)
    alloc = allocation_from_powers(res.x, res.assignment, coefficients)
    alloc.converged = res.converged
    alloc.iterations = res.iterations
    return alloc, res.state


def allocation_from_powers(x: np.ndarray, assignment: np.ndarray, coefficients: CoefficientSet) -> Allocation:
    n, k = x.shape
    m = coefficients.delta.shape[1]
    q = np.zeros((n, k))
    p = np.zeros((n, m))
    rates = np.zeros(n)
    for sc in range(n):
        owner = int(assignment[sc])
        if owner >= 0:
            q[sc, owner] = x[sc, owner]
            rates[sc] = coefficients.rate(sc, owner, q[sc, owner])
            p[sc] = cu_powers(q[sc, owner], coefficients.xi[sc, owner], coefficients.delta[sc], coefficients.gamma[sc])
        else:
            p[sc] = cu_powers(0.0, np.zeros(m), coefficients.delta[sc], coefficients.gamma[sc])
    return Allocation(assignment.astype(int), q, p, rates, float(rates.sum()))
