"""Command-line front end: ``d2dnoma {gen,solve,sweep,verify,oracle}``.

Exit codes: 0 success / feasible, 1 validation error, 2 I/O error,
3 numeric failure, 4 verification found violations.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .baseline import ofdma_solve, verify_feasible_ofdma
from .cupower import compute_coefficients
from .dbira import Allocation, SolverNumericError, SolverSettings, solve
from .oracle import InstanceTooLarge, brute_force, verify_feasible
from .scenario import ChannelRealization, ConfigError, ScenarioConfig, generate_scenario
from .sweep import AGG_FIELDS, ROW_FIELDS, SweepSpec, aggregate, run_sweep, to_csv

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC, EXIT_INFEASIBLE = 0, 1, 2, 3, 4

CONFIG_FLAGS = {
    "n_subchannels": int,
    "cus_per_sc": int,
    "n_d2d_pairs": int,
    "p_c_max_dbm": float,
    "p_d_max_dbm": float,
    "noise_power_dbm": float,
    "gamma": float,
    "cell_side_m": float,
    "d2d_max_dist_m": float,
    "shadowing_sigma_db": float,
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from exc


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from exc


def load_config(path: str | None, args: argparse.Namespace) -> ScenarioConfig:
    data = {}
    if path:
        try:
            data = json.loads(_read_text(path))
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_VALIDATION, f"{path}: invalid JSON ({exc})") from exc
    for key in CONFIG_FLAGS:
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    try:
        return ScenarioConfig.from_dict(data).validate()
    except ConfigError as exc:
        raise CliError(EXIT_VALIDATION, f"invalid configuration: {exc}") from exc
    except TypeError as exc:
        raise CliError(EXIT_VALIDATION, f"invalid configuration: {exc}") from exc


def load_channels(path: str) -> ChannelRealization:
    text = _read_text(path)
    try:
        return ChannelRealization.from_json(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_VALIDATION, f"{path}: invalid channel file ({exc})") from exc


def settings_from_args(args: argparse.Namespace) -> SolverSettings:
    kw = {}
    for name in ("epsilon", "max_iterations", "lambda0", "step_rule", "step0", "step_decay", "hysteresis"):
        val = getattr(args, name, None)
        if val is not None:
            kw[name] = val
    try:
        return SolverSettings(**kw)
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, f"invalid solver settings: {exc}") from exc


def run_scheme(real: ChannelRealization, scheme: str, settings: SolverSettings):
    if scheme == "ofdma":
        return ofdma_solve(real, settings=settings)
    return solve(real, compute_coefficients(real), settings)


def write_trace(path: str, state) -> None:
    k = len(state.lam)
    header = ["iter", "objective"] + [f"lambda_{i + 1}" for i in range(k)] + [f"slack_{i + 1}" for i in range(k)]
    lines = [",".join(header)]
    for t, (obj, lam, slack) in enumerate(zip(state.objective_trace, state.lambda_trace, state.slack_trace), 1):
        lines.append(",".join([str(t), repr(float(obj))] + [repr(float(v)) for v in lam]
                              + [repr(float(v)) for v in slack]))
    _write_text(path, "\n".join(lines) + "\n")


# -- subcommands ------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = load_config(args.config, args)
    real = generate_scenario(cfg)
    _write_text(args.out, real.to_json())
    print(f"generated N={cfg.n_subchannels} M={cfg.cus_per_sc} K={cfg.n_d2d_pairs} seed={cfg.seed} -> {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    real = load_channels(args.channels)
    settings = settings_from_args(args)
    try:
        alloc, state = run_scheme(real, args.scheme, settings)
    except SolverNumericError as exc:
        dump_path = (args.out or "solve") + ".dump.json"
        _write_text(dump_path, json.dumps(exc.dump, indent=1))
        raise CliError(EXIT_NUMERIC, f"{exc}; iteration dump written to {dump_path}") from exc
    doc = alloc.to_json()
    if args.out:
        _write_text(args.out, doc)
    else:
        print(doc)
    if args.trace:
        write_trace(args.trace, state)
    print(f"scheme={alloc.scheme} objective={alloc.objective:.6f} iterations={alloc.iterations} "
          f"converged={str(alloc.converged).lower()}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    real = load_channels(args.channels)
    try:
        alloc = Allocation.from_json(_read_text(args.alloc))
        check = verify_feasible_ofdma if alloc.scheme == "ofdma" else verify_feasible
        report = check(alloc, real)
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_VALIDATION, f"cannot verify: {exc}") from exc
    print(json.dumps(report.to_dict(), indent=1))
    return EXIT_OK if report.overall else EXIT_INFEASIBLE


def cmd_oracle(args) -> int:
    real = load_channels(args.channels)
    try:
        best = brute_force(real, grid_points=args.grid_points)
    except InstanceTooLarge as exc:
        raise CliError(EXIT_VALIDATION, f"instance too large for the oracle: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, str(exc)) from exc
    dbira_obj = args.dbira_objective
    if dbira_obj is None:
        dbira_obj = solve(real, compute_coefficients(real))[0].objective
    gap = (best.objective - dbira_obj) / best.objective if best.objective > 0 else 0.0
    print(json.dumps({"oracle_objective": best.objective, "dbira_objective": dbira_obj,
                      "relative_gap": gap, "grid_points": args.grid_points}, indent=1))
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = load_config(args.config, args)
    try:
        spec = SweepSpec(
            gamma_min=args.gamma_min, gamma_max=args.gamma_max, gamma_steps=args.gamma_steps,
            m_values=tuple(args.m_values), realizations=args.realizations, schemes=tuple(args.schemes),
            base=base, settings=settings_from_args(args), master_seed=base.seed, jobs=args.jobs,
        )
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, f"invalid sweep: {exc}") from exc
    rows = run_sweep(spec)
    _write_text(args.out, to_csv(rows, ROW_FIELDS))
    agg = aggregate(rows)
    if args.aggregate:
        _write_text(args.aggregate, to_csv(agg, AGG_FIELDS))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["gamma_th", "M", "scheme", "mean_objective", "stderr_objective"])
    for a in agg:
        w.writerow([f"{a['gamma_th']:g}", a["M"], a["scheme"], f"{a['mean_objective']:.4f}",
                    f"{a['stderr_objective']:.4f}"])
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of ScenarioConfig keys")
    for key, typ in CONFIG_FLAGS.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
    p.add_argument("--seed", type=int, default=None)


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--lambda0", type=float)
    p.add_argument("--step-rule", choices=["relative", "additive"])
    p.add_argument("--step0", type=float)
    p.add_argument("--step-decay", type=float)
    p.add_argument("--hysteresis", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="d2dnoma", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a channel realization")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve one realization")
    p.add_argument("--channels", required=True)
    p.add_argument("--scheme", choices=["noma", "ofdma"], default="noma")
    p.add_argument("--out")
    p.add_argument("--trace", help="write the iteration trace as CSV")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over gamma_th and M")
    _add_config_flags(p)
    _add_solver_flags(p)
    p.add_argument("--gamma-min", type=float, default=0.5)
    p.add_argument("--gamma-max", type=float, default=2.5)
    p.add_argument("--gamma-steps", type=int, default=5)
    p.add_argument("--m-values", type=_int_list, default=[2, 3, 4])
    p.add_argument("--realizations", type=int, default=1000)
    p.add_argument("--schemes", type=_str_list, default=["noma", "ofdma"])
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="per-cell CSV")
    p.add_argument("--aggregate", help="aggregate CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="check an allocation against every constraint")
    p.add_argument("--channels", required=True)
    p.add_argument("--alloc", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="brute-force optimum of a small instance")
    p.add_argument("--channels", required=True)
    p.add_argument("--grid-points", type=int, default=200)
    p.add_argument("--dbira-objective", type=float)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
