"""Randomized numerical self-checks of the smoothing layer.

Four suites, each returning a :class:`SuiteResult`:

- ``bounds``: the surrogate is pinched between |r| and |r| plus the
  width times ln 2, strictly so wherever the gap is representable in
  doubles.
- ``gradient_fd``: the analytic (n+1)-gradient of the augmented energy
  agrees with central finite differences of its value on the built-in
  problems.
- ``mu_sign``: the mu-partial of the augmented energy has the sign of
  mu everywhere (the mechanism that drives the smoothing variable to
  zero).
- ``hessian_fd``: the diagnostic Hessian agrees with central finite
  differences of the analytic gradient.

Finite-difference steps are shrunk with the smoothing width so the
stencil never straddles the boundary layer of a near-zero residual,
where the surrogate's curvature grows like one over the width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import builtin
from .smoothing import (
    AugmentedState,
    SmoothingParams,
    energy,
    grad_e1,
    hessian_blocks,
    smooth_abs,
)

__all__ = [
    "SuiteResult",
    "run_bounds",
    "run_gradient_fd",
    "run_mu_sign",
    "run_hessian_fd",
    "run_all",
]

_EPS = np.finfo(float).eps


@dataclass
class SuiteResult:
    name: str
    cases: int
    failures: int
    worst: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0


def _fd_steps(problem, z: np.ndarray, params: SmoothingParams, order: int) -> np.ndarray:
    """Near-optimal central-difference steps, one per coordinate of z.

    The surrogate's k-th derivative scales like ``width * S^k`` inside a
    residual's boundary layer (S = sensitivity of r/width to the
    coordinate) and vanishes outside it, gated here by sech^2 of the
    scaled residual. Balancing that truncation term against rounding of
    the differenced quantity gives the cube-root rule below. ``order``
    is the derivative order being differenced (1: value, 2: gradient).
    """
    x = z[:-1]
    mu = z[-1]
    width = params.theta * mu * mu
    r, jac = problem.residuals_and_jacobian(x)
    aa = np.abs(r) / width
    gate = np.where(aa < 20.0, 1.0 / np.cosh(np.minimum(aa, 20.0)) ** 2, 0.0)

    rep = energy(AugmentedState.from_array(z), problem, params)
    scale = 1.0 + (abs(rep.e1) if order == 1 else float(np.max(np.abs(rep.grad))))

    n1 = z.shape[0]
    steps = np.empty(n1)
    for j in range(n1):
        if j < x.shape[0]:
            sens = np.abs(jac[:, j]) / width
        else:
            sens = 2.0 * aa / abs(mu)
        curv = width * float(np.sum(gate * sens ** (order + 2))) + 1.0
        h_opt = (3.0 * _EPS * scale / curv) ** (1.0 / 3.0)
        steps[j] = min(h_opt, 6e-6 * (1.0 + abs(z[j])))
    return steps


def fd_gradient(problem, z: np.ndarray, params: SmoothingParams) -> np.ndarray:
    """Central finite differences of the augmented energy value at z."""
    steps = _fd_steps(problem, z, params, order=1)
    out = np.empty(z.shape[0])
    for j in range(z.shape[0]):
        h = steps[j]
        zp = z.copy()
        zp[j] += h
        zm = z.copy()
        zm[j] -= h
        ep = energy(AugmentedState.from_array(zp), problem, params).e1
        em = energy(AugmentedState.from_array(zm), problem, params).e1
        out[j] = (ep - em) / (2.0 * h)
    return out


def fd_hessian(problem, z: np.ndarray, params: SmoothingParams) -> np.ndarray:
    """Central finite differences of the analytic gradient at z."""
    steps = _fd_steps(problem, z, params, order=2)
    n1 = z.shape[0]
    out = np.empty((n1, n1))
    for j in range(n1):
        h = steps[j]
        zp = z.copy()
        zp[j] += h
        zm = z.copy()
        zm[j] -= h
        gp = grad_e1(AugmentedState.from_array(zp), problem, params)
        gm = grad_e1(AugmentedState.from_array(zm), problem, params)
        out[:, j] = (gp - gm) / (2.0 * h)
    return 0.5 * (out + out.T)


def run_bounds(n_cases: int, rng: np.random.Generator) -> SuiteResult:
    """Pinching bounds on the surrogate over random (r, mu, theta)."""
    failures = 0
    worst = -math.inf  # signed distance to the nearest bound; negative is margin
    for _ in range(n_cases):
        r = float(rng.uniform(-1e3, 1e3))
        if r == 0.0:
            continue  # the upper bound is tight at r = 0 by construction
        mu = float(10.0 ** rng.uniform(-4.0, 2.0)) * float(rng.choice([-1.0, 1.0]))
        theta = float(10.0 ** rng.uniform(-3.0, 1.0))
        params = SmoothingParams(theta=theta)
        s = smooth_abs(r, mu, params)
        width = theta * mu * mu
        aa = abs(r) / width
        ub = abs(r) + width * math.log(2.0)
        # strict inequalities apply while the distance to the bound is
        # representable in doubles; on the saturated tails equality is fine
        gap_floor = 8.0 * _EPS * abs(r)
        representable = aa < 300.0 and width * math.exp(-2.0 * aa) > gap_floor
        ok_lower = s > abs(r) if representable else s >= abs(r)
        ok_upper = s < ub if aa > 1e-12 else s <= ub
        if not (ok_lower and ok_upper):
            failures += 1
        worst = max(worst, s - ub, abs(r) - s)
        # mu = 0 collapses exactly onto the absolute value
        if smooth_abs(r, 0.0, params) != abs(r):
            failures += 1
    return SuiteResult("bounds", n_cases, failures, worst)


def _random_state(problem, rng, mu_min=1e-2, mu_max=10.0) -> np.ndarray:
    x = rng.uniform(-1.0, 1.0, problem.n_vars)
    mu = float(10.0 ** rng.uniform(math.log10(mu_min), math.log10(mu_max)))
    mu *= float(rng.choice([-1.0, 1.0]))
    return np.concatenate([x, [mu]])


def run_gradient_fd(
    n_cases: int,
    rng: np.random.Generator,
    tol: float = 1e-6,
    theta: float = 0.02,
) -> SuiteResult:
    """Analytic gradient versus value differences, per coordinate.

    ``n_cases`` points are drawn for each built-in problem; the error is
    measured relative to ``1 + |coordinate|`` so near-zero components are
    held to an absolute standard.
    """
    params = SmoothingParams(theta=theta)
    failures = 0
    worst = 0.0
    for name in ("problem1", "rastrigin_l1"):
        problem = builtin(name)
        for _ in range(n_cases):
            z = _random_state(problem, rng)
            g = grad_e1(AugmentedState.from_array(z), problem, params)
            fd = fd_gradient(problem, z, params)
            rel = float(np.max(np.abs(fd - g) / (1.0 + np.abs(g))))
            worst = max(worst, rel)
            if rel > tol:
                failures += 1
    return SuiteResult("gradient_fd", 2 * n_cases, failures, worst)


def run_mu_sign(n_cases: int, rng: np.random.Generator, theta: float = 0.02) -> SuiteResult:
    """mu times the mu-partial of the energy is strictly positive off mu = 0."""
    params = SmoothingParams(theta=theta)
    failures = 0
    worst = math.inf
    for name in ("problem1", "rastrigin_l1"):
        problem = builtin(name)
        for _ in range(n_cases):
            z = _random_state(problem, rng, mu_min=1e-4, mu_max=100.0)
            rep = energy(AugmentedState.from_array(z), problem, params)
            drive = z[-1] * rep.grad[-1]
            worst = min(worst, drive)
            if not drive > 0.0:
                failures += 1
    return SuiteResult("mu_sign", 2 * n_cases, failures, worst)


def run_hessian_fd(
    n_cases: int,
    rng: np.random.Generator,
    tol: float = 1e-5,
    theta: float = 0.02,
) -> SuiteResult:
    """Diagnostic Hessian versus differences of the analytic gradient."""
    params = SmoothingParams(theta=theta)
    failures = 0
    worst = 0.0
    for name in ("problem1", "rastrigin_l1"):
        problem = builtin(name)
        for _ in range(n_cases):
            z = _random_state(problem, rng, mu_min=5e-2, mu_max=3.0)
            h = hessian_blocks(AugmentedState.from_array(z), problem, params)
            fd = fd_hessian(problem, z, params)
            rel = float(np.max(np.abs(fd - h)) / (1.0 + np.max(np.abs(h))))
            worst = max(worst, rel)
            if rel > tol:
                failures += 1
    return SuiteResult("hessian_fd", 2 * n_cases, failures, worst)


def run_all(
    seed: int = 0,
    n_bounds: int = 100_000,
    n_gradient: int = 500,
    n_sign: int = 5_000,
    n_hessian: int = 50,
) -> list[SuiteResult]:
    """All suites under one seeded generator, in a fixed order."""
    rng = np.random.default_rng(seed)
    return [
        run_bounds(n_bounds, rng),
        run_gradient_fd(n_gradient, rng),
        run_mu_sign(n_sign, rng),
        run_hessian_fd(n_hessian, rng),
    ]
