"""Monte-Carlo sweeps over the CU rate target and the number of CUs per SC."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baseline import ofdma_solve, verify_feasible_ofdma
from .cupower import compute_coefficients
from .dbira import SolverNumericError, SolverSettings, solve
from .oracle import verify_feasible
from .scenario import ScenarioConfig, generate_scenario

ROW_FIELDS = ["gamma_th", "M", "scheme", "realization_id", "objective", "iterations",
              "converged", "feasible", "status"]
AGG_FIELDS = ["gamma_th", "M", "scheme", "count", "mean_objective", "stderr_objective",
              "mean_iterations", "converged_fraction", "feasible_fraction"]
SCHEMES = ("noma", "ofdma")


@dataclass(frozen=True)
class SweepSpec:
    gamma_min: float = 0.5
    gamma_max: float = 2.5
    gamma_steps: int = 5
    m_values: tuple = (2, 3, 4)
    realizations: int = 1000
    schemes: tuple = SCHEMES
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    settings: SolverSettings = field(default_factory=SolverSettings)
    master_seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if not self.gamma_min <= self.gamma_max:
            raise ValueError("gamma_min must not exceed gamma_max")
        if self.gamma_steps < 1 or self.realizations < 1:
            raise ValueError("gamma_steps and realizations must be >= 1")
        bad = set(self.schemes) - set(SCHEMES)
        if bad:
            raise ValueError(f"unknown scheme(s): {sorted(bad)}")
        if not self.m_values or min(self.m_values) < 1:
            raise ValueError("m_values must be positive integers")

    def gamma_grid(self) -> list[float]:
        if self.gamma_steps == 1:
            return [float(self.gamma_min)]
        return [float(g) for g in np.linspace(self.gamma_min, self.gamma_max, self.gamma_steps)]


def _solve_cell(real, scheme: str, settings: SolverSettings):
    if scheme == "noma":
        alloc, _ = solve(real, compute_coefficients(real), settings)
        report = verify_feasible(alloc, real)
    else:
        alloc, _ = ofdma_solve(real, settings=settings)
        report = verify_feasible_ofdma(alloc, real)
    return alloc, report.overall


def _run_task(args) -> list[dict]:
    spec, m, r = args
    base = spec.base.replace(cus_per_sc=m)
    real = generate_scenario(base, seed=spec.master_seed + r)
    rows = []
    for gamma in spec.gamma_grid():
        cell = dataclasses.replace(real, config=real.config.replace(gamma=gamma))
        for scheme in spec.schemes:
            row = {"gamma_th": gamma, "M": m, "scheme": scheme, "realization_id": r}
            try:
                alloc, feasible = _solve_cell(cell, scheme, spec.settings)
            except (SolverNumericError, FloatingPointError, ValueError) as exc:
                row.update(objective=math.nan, iterations=0, converged=False, feasible=False,
                           status=f"error:{type(exc).__name__}")
            else:
                row.update(objective=alloc.objective, iterations=alloc.iterations,
                           converged=alloc.converged, feasible=feasible,
                           status="ok" if feasible else "infeasible")
            rows.append(row)
    return rows


def _sort_key(row):
    return (row["gamma_th"], row["M"], row["scheme"], row["realization_id"])


def run_sweep(spec: SweepSpec) -> list[dict]:
    """One row per (gamma_th, M, scheme, realization); sorted by those keys."""
    tasks = [(spec, m, r) for m in spec.m_values for r in range(spec.realizations)]
    rows: list[dict] = []
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            for chunk in pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * spec.jobs))):
                rows.extend(chunk)
    else:
        for task in tasks:
            rows.extend(_run_task(task))
    rows.sort(key=_sort_key)
    return rows


def aggregate(rows: list[dict]) -> list[dict]:
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["gamma_th"], row["M"], row["scheme"]), []).append(row)
    out = []
    for (gamma, m, scheme), grp in sorted(groups.items()):
        obj = np.array([r["objective"] for r in grp], dtype=float)
        obj = obj[np.isfinite(obj)]
        count = len(obj)
        stderr = float(obj.std(ddof=1) / math.sqrt(count)) if count > 1 else 0.0
        out.append({
            "gamma_th": gamma, "M": m, "scheme": scheme, "count": count,
            "mean_objective": float(obj.mean()) if count else math.nan,
            "stderr_objective": stderr,
            "mean_iterations": float(np.mean([r["iterations"] for r in grp])),
            "converged_fraction": float(np.mean([r["converged"] for r in grp])),
            "feasible_fraction": float(np.mean([r["feasible"] for r in grp])),
        })
    return out


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(row[f]) for f in fields])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
