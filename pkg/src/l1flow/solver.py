"""Gradient-flow solves of sum-of-absolute-residuals problems.

One solve integrates ``dz/dt = -M * grad E1(z)`` from ``z0 = (x0, mu0)``
over a fixed window, where E1 is the augmented smoothed energy and M a
positive diagonal scaling. The smoothing variable rides along as the
last state component and decays toward zero, so the end state is read
off as a candidate stationary point of the nonsmooth objective and
certified through the minimum-norm subgradient residual.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .expr import ExpressionDomainError
from .ode import OdeSettings, Trajectory, integrate
from .problem import Problem
from .smoothing import AugmentedState, SmoothingParams, energy

__all__ = [
    "SolveConfig",
    "SolveResult",
    "MultiStartReport",
    "benchmark_config",
    "flow_field",
    "solve",
    "multi_start",
    "DOMAIN_ERROR",
]

DOMAIN_ERROR = "domain_error"

# diagonal of M for the two n=2 benchmark problems: (x1, x2, mu).
# The large entry drives the smoothing variable; the config file allows
# any other assignment.
BENCHMARK_M_DIAG = (10.0, 100.0, 10000.0)


@dataclass
class SolveConfig:
    """Settings of one flow solve.

    ``m_diag`` is the positive diagonal of M, ordered as n entries for x
    followed by one for mu; None means the identity scaling. ``ode``
    carries the integrator tolerances; its time window is always
    overridden by ``t_final`` here. Early stopping is off unless
    ``ode.stop_grad_norm`` is set.
    """

    m_diag: np.ndarray | None = None
    mu0: float = 40.0
    theta: float = 0.02
    t_final: float = 0.007
    ode: OdeSettings | None = None
    stationarity_tol: float = 1e-4

    def resolved_m_diag(self, n_vars: int) -> np.ndarray:
        if self.m_diag is None:
            return np.ones(n_vars + 1)
        m = np.asarray(self.m_diag, dtype=float)
        if m.shape != (n_vars + 1,):
            raise ValueError(
                f"m_diag must have length n_vars+1 = {n_vars + 1}, got {m.shape}"
            )
        if not np.all(m > 0.0):
            raise ValueError("all m_diag entries must be positive")
        return m

    def resolved_ode(self) -> OdeSettings:
        if self.ode is None:
            return OdeSettings(t_final=self.t_final)
        return replace(self.ode, t_final=self.t_final)


def benchmark_config(**overrides) -> SolveConfig:
    """The default benchmark configuration for the built-in problems."""
    base = dict(m_diag=np.array(BENCHMARK_M_DIAG), mu0=40.0, theta=0.02, t_final=0.007)
    base.update(overrides)
    return SolveConfig(**base)


@dataclass
class SolveResult:
    """End state of one solve plus its certificates.

    ``f_value`` is the L1 objective recomputed at ``x_star``;
    ``grad_norm`` the augmented-energy gradient norm at the end state;
    ``kkt_residual`` the minimum-norm subgradient size at ``x_star``.
    ``error`` carries the diagnostic when a residual evaluation failed
    along the trajectory (``stop_reason`` is then "domain_error").
    """

    x_star: np.ndarray
    mu_star: float
    f_value: float
    grad_norm: float
    kkt_residual: float
    stop_reason: str
    steps_accepted: int
    steps_rejected: int
    wall_time: float
    start: np.ndarray
    trajectory: Trajectory
    error: str | None = None


@dataclass
class MultiStartReport:
    """Outcome of a seeded random-start campaign."""

    runs: list[tuple[np.ndarray, SolveResult]]
    success_count: int
    success_tol: float
    seed: int


def flow_field(problem: Problem, config: SolveConfig):
    """The right-hand side ``(t, z) -> -M * grad E1(z)`` of the flow."""
    params = SmoothingParams(theta=config.theta)
    m_diag = config.resolved_m_diag(problem.n_vars)

    def field(t, z):
        report = energy(AugmentedState.from_array(z), problem, params)
        return -m_diag * report.grad

    return field


def _monitor(problem: Problem, params: SmoothingParams):
    def probe(z):
        report = energy(AugmentedState.from_array(z), problem, params)
        return report.e1, float(np.linalg.norm(report.grad))

    return probe


def solve(
    problem: Problem, x0, config: SolveConfig, sample_every: int = 10
) -> SolveResult:
    """Integrate the flow from ``(x0, config.mu0)`` and certify the end state.

    A residual domain error along the trajectory does not raise: the
    offending step is rejected until the step size underflows, and the
    partial result is returned with ``stop_reason = "domain_error"`` and
    the diagnostic message in ``error``.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (problem.n_vars,):
        raise ValueError(f"x0 must have length {problem.n_vars}, got {x0.shape}")
    params = SmoothingParams(theta=config.theta)
    m_diag = config.resolved_m_diag(problem.n_vars)
    settings = config.resolved_ode()
    nan_state = np.full(problem.n_vars + 1, math.nan)
    failure: list[str] = []

    def field(t, z):
        try:
            report = energy(AugmentedState.from_array(z), problem, params)
        except ExpressionDomainError as err:
            if not failure:
                failure.append(str(err))
            return nan_state
        return -m_diag * report.grad

    def probe(z):
        try:
            report = energy(AugmentedState.from_array(z), problem, params)
        except ExpressionDomainError:
            return math.nan, math.nan
        return report.e1, float(np.linalg.norm(report.grad))

    z0 = np.concatenate([x0, [config.mu0]])
    t_start = time.perf_counter()
    trajectory = integrate(field, z0, settings, sample_every, monitor=probe)
    wall = time.perf_counter() - t_start

    z_end = trajectory.z_end
    x_star = z_end[:-1].copy()
    mu_star = float(z_end[-1])
    stop_reason = trajectory.stop_reason
    error = None
    if failure:
        stop_reason = DOMAIN_ERROR
        error = failure[0]
    try:
        f_value = problem.objective(x_star)
        kkt = problem.stationarity_residual(x_star).kkt_residual
    except ExpressionDomainError as err:
        f_value = math.nan
        kkt = math.nan
        if error is None:
            stop_reason = DOMAIN_ERROR
            error = str(err)
    grad_norm = probe(z_end)[1]

    return SolveResult(
        x_star=x_star,
        mu_star=mu_star,
        f_value=f_value,
        grad_norm=grad_norm,
        kkt_residual=kkt,
        stop_reason=stop_reason,
        steps_accepted=trajectory.steps_accepted,
        steps_rejected=trajectory.steps_rejected,
        wall_time=wall,
        start=x0.copy(),
        trajectory=trajectory,
        error=error,
    )


def multi_start(
    problem: Problem,
    config: SolveConfig,
    k: int,
    seed: int,
    success_tol: float = 1e-4,
    sample_every: int = 10,
    threads: int | None = None,
) -> MultiStartReport:
    """Solve from k starts drawn uniformly from the problem's sample box.

    The starts are drawn up front from a generator seeded with ``seed``,
    so the report is reproducible regardless of ``threads``. Runs are
    ordered by start index.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    rng = np.random.default_rng(seed)
    starts = [problem.sample_start(rng) for _ in range(k)]

    def run(x0):
        return solve(problem, x0, config, sample_every)

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(x0) for x0 in starts]

    success = sum(1 for r in results if r.f_value <= success_tol)
    return MultiStartReport(
        runs=list(zip(starts, results)),
        success_count=success,
        success_tol=success_tol,
        seed=seed,
    )
