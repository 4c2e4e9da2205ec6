"""Command-line front end.

Four subcommands:

- ``solve``  one flow solve of a built-in or config-defined problem;
  writes a JSON result summary and optionally a trajectory CSV with a
  rendered figure next to it.
- ``bench``  the benchmark campaigns (fixed starts plus a seeded random
  campaign for ``problem1``, the eleven fixed starts for ``rastrigin``);
  writes a CSV table, a figure, and a success count.
- ``check``  the randomized numerical self-check suites.
- ``sweep``  a grid of solves over theta x mu0, one summary row per cell.

Problems and solver settings come from a JSON config file and/or flags
(flags win). All artifacts are deterministic for a fixed seed, except
the wall-clock time column of reports. Exit codes: 0 on success, 1 on a
bad config, 2 when a residual evaluation failed during a solve.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import plots
from .ode import OdeSettings
from .problem import Problem, builtin
from .selfcheck import run_all
from .solver import (
    BENCHMARK_M_DIAG,
    DOMAIN_ERROR,
    SolveConfig,
    benchmark_config,
    multi_start,
    solve,
)

__all__ = ["main"]

THREADS_ENV = "L1FLOW_THREADS"

# fixed benchmark starting points
_PROBLEM1_STARTS = [(1.0, 1.0), (-1.0, -1.0)]
_RASTRIGIN_STARTS = [
    (-1.0, -1.0),
    (-0.8900, -0.7803),
    (-0.4612, 0.2451),
    (0.2137, -0.0280),
    (0.7826, 0.5242),
    (-0.0871, -0.9630),
    (0.6428, -0.1106),
    (0.2309, 0.5839),
    (0.8436, 0.4764),
    (-0.6475, 0.1886),
    (0.8709, 0.8338),
]


class ConfigError(Exception):
    """Bad or inconsistent run configuration (exit code 1)."""


# --------------------------------------------------------------------------
# Run configuration

_CONFIG_KEYS = {
    "problem",
    "residuals",
    "n_vars",
    "theta",
    "mu0",
    "m_diag",
    "t_final",
    "rtol",
    "atol",
    "seed",
    "sample_every",
    "x0",
}


@dataclass
class RunConfig:
    """Resolved problem plus solver settings for one CLI invocation."""

    problem: Problem
    config: SolveConfig
    rtol: float
    atol: float
    seed: int
    sample_every: int
    x0: np.ndarray | None

    def effective(self) -> dict:
        """The config-file dict that reproduces this run exactly."""
        out = {}
        if self.problem.name:
            out["problem"] = self.problem.name
        else:
            out["residuals"] = [str(r) for r in self.problem.residuals]
        out["n_vars"] = self.problem.n_vars
        out["theta"] = self.config.theta
        out["mu0"] = self.config.mu0
        out["m_diag"] = list(self.config.resolved_m_diag(self.problem.n_vars))
        out["t_final"] = self.config.t_final
        out["rtol"] = self.rtol
        out["atol"] = self.atol
        out["seed"] = self.seed
        out["sample_every"] = self.sample_every
        if self.x0 is not None:
            out["x0"] = list(self.x0)
        return out


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated numbers, got '{text}'")


def _load_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}")
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def build_run_config(args) -> RunConfig:
    """Merge defaults, the config file, and flag overrides."""
    data = _load_config_file(args.config) if getattr(args, "config", None) else {}

    if getattr(args, "builtin", None):
        data["problem"] = args.builtin
        data.pop("residuals", None)
    has_builtin = data.get("problem") is not None
    has_inline = data.get("residuals") is not None
    if has_builtin == has_inline:
        raise ConfigError(
            "exactly one problem source is required: a builtin name "
            "(--builtin / config key 'problem') or inline 'residuals'"
        )
    try:
        if has_builtin:
            problem = builtin(data["problem"])
        else:
            n_vars = data.get("n_vars")
            if not isinstance(n_vars, int) or n_vars < 1:
                raise ConfigError("inline residuals need a positive integer 'n_vars'")
            problem = Problem.from_strings(list(data["residuals"]), n_vars)
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err))

    def pick(flag_name, key, default):
        flag = getattr(args, flag_name, None)
        if flag is not None:
            return flag
        return data.get(key, default)

    theta = float(pick("theta", "theta", 0.02))
    mu0 = float(pick("mu0", "mu0", 40.0))
    t_final = float(pick("tf", "t_final", 0.007))
    rtol = float(data.get("rtol", 1e-6))
    atol = float(data.get("atol", 1e-9))
    seed = int(pick("seed", "seed", 0))
    sample_every = int(data.get("sample_every", 10))

    if getattr(args, "mdiag", None) is not None:
        m_diag = _parse_floats(args.mdiag, "--mdiag")
    elif data.get("m_diag") is not None:
        m_diag = [float(v) for v in data["m_diag"]]
    elif problem.name in ("problem1", "rastrigin_l1"):
        m_diag = list(BENCHMARK_M_DIAG)
    else:
        m_diag = None

    x0 = None
    if getattr(args, "x0", None) is not None:
        x0 = np.array(_parse_floats(args.x0, "--x0"))
    elif data.get("x0") is not None:
        x0 = np.array([float(v) for v in data["x0"]])
    if x0 is not None and x0.shape != (problem.n_vars,):
        raise ConfigError(
            f"x0 must have {problem.n_vars} components, got {x0.shape[0]}"
        )

    try:
        ode = OdeSettings(t_final=t_final, rtol=rtol, atol=atol)
        config = SolveConfig(
            m_diag=None if m_diag is None else np.array(m_diag),
            mu0=mu0,
            theta=theta,
            t_final=t_final,
            ode=ode,
        )
        config.resolved_m_diag(problem.n_vars)  # validate length/sign now
    except ValueError as err:
        raise ConfigError(str(err))

    return RunConfig(
        problem=problem,
        config=config,
        rtol=rtol,
        atol=atol,
        seed=seed,
        sample_every=sample_every,
        x0=x0,
    )


def _resolve_x0(run: RunConfig) -> np.ndarray:
    if run.x0 is not None:
        return run.x0
    if run.problem.sample_box is None:
        raise ConfigError("no --x0 given and the problem has no sample box")
    rng = np.random.default_rng(run.seed)
    return run.problem.sample_start(rng)


# --------------------------------------------------------------------------
# Serialization (floats rendered with 17 significant digits)

def _format_float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def _to_json(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {_to_json(v, indent + 1)}'
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}  {_to_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    return json.dumps(str(obj))


def _result_dict(result) -> dict:
    return {
        "x_star": list(result.x_star),
        "mu_star": result.mu_star,
        "f_value": result.f_value,
        "grad_norm": result.grad_norm,
        "kkt_residual": result.kkt_residual,
        "stop_reason": result.stop_reason,
        "steps_accepted": result.steps_accepted,
        "steps_rejected": result.steps_rejected,
        "wall_time": result.wall_time,
        "start": list(result.start),
        "error": result.error,
    }


def _write_summary(run: RunConfig, result, out_path: str | None):
    payload = {"config": run.effective(), "result": _result_dict(result)}
    text = _to_json(payload) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_trajectory_csv(trajectory, n_vars: int, path: str):
    header = ["t"] + [f"x{j + 1}" for j in range(n_vars)] + ["mu", "E1", "grad_norm"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in trajectory.samples:
            writer.writerow(
                [_format_float(s.t)]
                + [_format_float(v) for v in s.z]
                + [_format_float(s.e1), _format_float(s.grad_norm)]
            )


def _figure_path(csv_path: str) -> str:
    root, _ = os.path.splitext(csv_path)
    return root + ".png"


# --------------------------------------------------------------------------
# Subcommands

def cmd_solve(args) -> int:
    run = build_run_config(args)
    x0 = _resolve_x0(run)
    result = solve(run.problem, x0, run.config, sample_every=run.sample_every)
    run = replace(run, x0=x0)
    _write_summary(run, result, args.out)
    if args.traj:
        _write_trajectory_csv(result.trajectory, run.problem.n_vars, args.traj)
        if not args.no_plots:
            plots.plot_trajectory(
                result.trajectory,
                _figure_path(args.traj),
                title=f"{run.problem.name or 'problem'} from {np.round(x0, 6).tolist()}",
            )
    if result.stop_reason == DOMAIN_ERROR:
        print(f"solve failed: {result.error}", file=sys.stderr)
        return 2
    return 0


def _bench_threads() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got '{raw}'")


def cmd_bench(args) -> int:
    name = {"rastrigin": "rastrigin_l1"}.get(args.name, args.name)
    try:
        problem = builtin(name)
    except ValueError as err:
        raise ConfigError(str(err))
    threads = _bench_threads()
    config = benchmark_config()
    rows = []  # (label, start, result)
    if name == "problem1":
        for start in _PROBLEM1_STARTS:
            label = f"({start[0]:g},{start[1]:g})"
            rows.append((label, np.array(start), solve(problem, start, config)))
        report = multi_start(
            problem, config, k=50, seed=args.seed, success_tol=args.tol, threads=threads
        )
        for i, (start, result) in enumerate(report.runs):
            rows.append((f"random-{i:02d}", start, result))
    else:
        starts = [np.array(s) for s in _RASTRIGIN_STARTS]
        if threads is not None and threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda s: solve(problem, s, config), starts))
        else:
            results = [solve(problem, s, config) for s in starts]
        for start, result in zip(starts, results):
            rows.append((f"({start[0]:g},{start[1]:g})", start, result))

    successes = sum(1 for _, _, r in rows if r.f_value <= args.tol)
    out_path = args.out or f"bench_{args.name}.csv"
    _write_bench_csv(rows, problem.n_vars, out_path, args.tol)
    if not args.no_plots:
        plots.plot_bench(
            [label for label, _, _ in rows],
            [r.f_value for _, _, r in rows],
            args.tol,
            _figure_path(out_path),
            title=f"bench {args.name} (seed {args.seed})",
        )
    print(f"bench {args.name}: success {successes}/{len(rows)} at tol {args.tol:g}")
    print(f"table written to {out_path}")
    return 0


def _write_bench_csv(rows, n_vars: int, path: str, tol: float):
    header = (
        [f"start_x{j + 1}" for j in range(n_vars)]
        + ["f_value"]
        + [f"x_star_{j + 1}" for j in range(n_vars)]
        + ["mu_star", "kkt_residual", "steps_accepted", "success", "time_s"]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + header)
        for label, start, r in rows:
            writer.writerow(
                [label]
                + [_format_float(v) for v in start]
                + [_format_float(r.f_value)]
                + [_format_float(v) for v in r.x_star]
                + [
                    _format_float(r.mu_star),
                    _format_float(r.kkt_residual),
                    str(r.steps_accepted),
                    str(int(r.f_value <= tol)),
                    _format_float(r.wall_time),
                ]
            )


def cmd_check(args) -> int:
    results = run_all(seed=args.seed)
    all_ok = True
    for suite in results:
        status = "PASS" if suite.passed else "FAIL"
        all_ok &= suite.passed
        print(
            f"{status} {suite.name}: {suite.cases} cases, "
            f"{suite.failures} failures, worst {suite.worst:.6g}"
        )
    return 0 if all_ok else 1


def cmd_sweep(args) -> int:
    thetas = _parse_floats(args.theta, "--theta") if args.theta else [0.02]
    mu0s = _parse_floats(args.mu0, "--mu0") if args.mu0 else [40.0]
    base_args = argparse.Namespace(
        config=args.config,
        builtin=args.builtin,
        theta=None,
        mu0=None,
        tf=args.tf,
        seed=args.seed,
        mdiag=args.mdiag,
        x0=args.x0,
    )
    run = build_run_config(base_args)
    x0 = _resolve_x0(run)

    rows = []
    for theta in thetas:
        for mu0 in mu0s:
            if theta <= 0:
                raise ConfigError(f"theta must be positive, got {theta}")
            cell = SolveConfig(
                m_diag=run.config.m_diag,
                mu0=mu0,
                theta=theta,
                t_final=run.config.t_final,
                ode=run.config.ode,
            )
            result = solve(run.problem, x0, cell, sample_every=run.sample_every)
            rows.append((theta, mu0, result))

    out_path = args.out or "sweep.csv"
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["theta", "mu0", "f_value", "mu_star", "grad_norm", "kkt_residual",
             "steps_accepted", "stop_reason", "time_s"]
        )
        for theta, mu0, r in rows:
            writer.writerow(
                [
                    _format_float(theta),
                    _format_float(mu0),
                    _format_float(r.f_value),
                    _format_float(r.mu_star),
                    _format_float(r.grad_norm),
                    _format_float(r.kkt_residual),
                    str(r.steps_accepted),
                    r.stop_reason,
                    _format_float(r.wall_time),
                ]
            )
    if not args.no_plots:
        plots.plot_sweep(
            [t for t, _, _ in rows],
            [m for _, m, _ in rows],
            [r.f_value for _, _, r in rows],
            _figure_path(out_path),
            title=f"sweep {run.problem.name or 'problem'} from {np.round(x0, 6).tolist()}",
        )
    print(f"sweep: {len(rows)} cells written to {out_path}")
    if any(r.stop_reason == DOMAIN_ERROR for _, _, r in rows):
        return 2
    return 0


# --------------------------------------------------------------------------
# Entry point

def _add_problem_flags(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--builtin", help="built-in problem name")
    sub.add_argument("--x0", help="starting point, comma-separated")
    sub.add_argument("--seed", type=int, default=None, help="random seed")
    sub.add_argument("--tf", type=float, default=None, help="integration end time")
    sub.add_argument("--mdiag", help="flow scaling diagonal, comma-separated (x entries then mu)")
    sub.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="l1flow",
        description="minimize a sum of absolute residuals by smoothed gradient flow",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_solve = subs.add_parser("solve", help="run one solve")
    _add_problem_flags(p_solve)
    p_solve.add_argument("--theta", type=float, default=None, help="smoothing shape constant")
    p_solve.add_argument("--mu0", type=float, default=None, help="initial smoothing variable")
    p_solve.add_argument("--traj", help="write the sampled trajectory to this CSV")
    p_solve.add_argument("--out", help="write the JSON summary here instead of stdout")
    p_solve.set_defaults(func=cmd_solve)

    p_bench = subs.add_parser("bench", help="run a benchmark campaign")
    p_bench.add_argument("name", choices=["problem1", "rastrigin", "rastrigin_l1"])
    p_bench.add_argument("--seed", type=int, default=0, help="seed for the random starts")
    p_bench.add_argument("--tol", type=float, default=1e-4, help="success threshold on the objective")
    p_bench.add_argument("--out", help="CSV output path")
    p_bench.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    p_bench.set_defaults(func=cmd_bench)

    p_check = subs.add_parser("check", help="run the numerical self-check suites")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.set_defaults(func=cmd_check)

    p_sweep = subs.add_parser("sweep", help="grid of solves over theta x mu0")
    _add_problem_flags(p_sweep)
    p_sweep.add_argument("--theta", default=None, help="comma-separated theta values")
    p_sweep.add_argument("--mu0", default=None, help="comma-separated mu0 values")
    p_sweep.add_argument("--out", help="CSV output path")
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
