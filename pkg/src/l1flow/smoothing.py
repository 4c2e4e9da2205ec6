"""Smooth surrogate of the absolute value and the augmented energy.

Each residual magnitude ``|r|`` is replaced by a log-sum-exp surrogate

    s(r, mu) = theta*mu^2 * ln(exp(r/(theta*mu^2)) + exp(-r/(theta*mu^2)))

whose width shrinks with the smoothing variable ``mu``. Unlike a
scheduled smoothing parameter, ``mu`` here is part of the optimization
state: the augmented energy

    E1(x, mu) = sum_i s(r_i(x), mu) + mu^2 * ||x||^2 / 2

has d(E1)/d(mu) of the same sign as mu everywhere, so any descent on E1
drives mu itself toward zero, where the surrogate collapses onto |r|.

All evaluations use overflow-free forms (|r| plus a log1p correction,
tanh, stable logistic). Past ``|r/(theta*mu^2)| > 350`` the correction
underflows entirely and the saturated branch returns |r| and sign(r)
exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SmoothingParams",
    "AugmentedState",
    "EnergyReport",
    "smooth_abs",
    "smooth_sign",
    "logistic_coeff",
    "smooth_abs_dmu",
    "energy",
    "grad_e1",
    "hessian_blocks",
]

# beyond this |r|/(theta*mu^2), exp(-2|a|) underflows: branch to exact values
_SATURATION = 350.0


@dataclass(frozen=True)
class SmoothingParams:
    """Shape constant of the surrogate; width of the smoothing is theta*mu^2."""

    theta: float = 0.02

    def __post_init__(self):
        if not (self.theta > 0.0):
            raise ValueError(f"theta must be positive, got {self.theta}")


@dataclass
class AugmentedState:
    """Flow state: decision vector x plus the smoothing variable mu."""

    x: np.ndarray
    mu: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.mu = float(self.mu)

    @classmethod
    def from_array(cls, z) -> "AugmentedState":
        z = np.asarray(z, dtype=float)
        return cls(z[:-1].copy(), float(z[-1]))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.x, [self.mu]])


@dataclass
class EnergyReport:
    """Energy, augmented energy, full gradient, and per-residual terms.

    ``grad`` has length n+1: the x-gradient followed by the mu-partial.
    ``s`` and ``alpha`` are the per-residual surrogate values and
    smoothed-sign weights.
    """

    e: float
    e1: float
    grad: np.ndarray
    s: np.ndarray
    alpha: np.ndarray


def smooth_abs(r: float, mu: float, params: SmoothingParams) -> float:
    """Smooth surrogate of ``|r|``; equals ``|r|`` exactly when mu = 0.

    For mu != 0 the value lies in ``(|r|, |r| + theta*mu^2*ln 2]`` and is
    computed as ``|r| + theta*mu^2*log1p(exp(-2|r|/(theta*mu^2)))``, which
    never overflows.
    """
    if mu == 0.0:
        return abs(r)
    d = params.theta * mu * mu
    aa = abs(r) / d
    if aa > _SATURATION:
        return abs(r)
    return abs(r) + d * math.log1p(math.exp(-2.0 * aa))


def smooth_sign(r: float, mu: float, params: SmoothingParams) -> float:
    """Smoothed sign of a residual: tanh(r/(theta*mu^2)), in [-1, 1].

    At mu = 0 this is the exact sign (0 at r = 0), the limit the smooth
    branch approaches from either side.
    """
    if mu == 0.0:
        return math.copysign(1.0, r) if r != 0.0 else 0.0
    d = params.theta * mu * mu
    aa = abs(r) / d
    if aa > _SATURATION:
        return math.copysign(1.0, r)
    return math.copysign(math.tanh(aa), r) if r != 0.0 else 0.0


def logistic_coeff(r: float, mu: float, params: SmoothingParams) -> float:
    """Logistic weight appearing in the curvature of the surrogate.

    Equals ``1/(1 + exp(-2r/(theta*mu^2)))``; in (0, 1) except at the
    saturated extremes where it is exactly 0 or 1. Undefined at mu = 0.
    """
    if mu == 0.0:
        raise ValueError("logistic_coeff is undefined at mu = 0")
    a = r / (params.theta * mu * mu)
    if a >= 0.0:
        if a > _SATURATION:
            return 1.0
        return 1.0 / (1.0 + math.exp(-2.0 * a))
    if a < -_SATURATION:
        return 0.0
    t = math.exp(2.0 * a)
    return t / (1.0 + t)


def smooth_abs_dmu(r: float, mu: float, s: float, a: float) -> float:
    """Partial of the surrogate with respect to mu, from its own outputs.

    ``s`` and ``a`` must be ``smooth_abs`` and ``smooth_sign`` at (r, mu).
    Returns ``(2/mu)*(s - a*r)`` for mu != 0 and the limit 0 at mu = 0.
    The result carries the sign of mu: the surrogate always flattens
    toward |r| as mu moves toward zero.
    """
    if mu == 0.0:
        return 0.0
    return (2.0 / mu) * (s - a * r)


def energy(z: AugmentedState, problem, params: SmoothingParams) -> EnergyReport:
    """Evaluate the augmented energy and its full (n+1)-gradient at z.

    The x-gradient is ``sum_i alpha_i * grad r_i + mu^2 x``; the
    mu-partial is ``sum_i (2/mu)(s_i - alpha_i r_i) + mu ||x||^2`` for
    mu != 0 and 0 at mu = 0 (its two-sided limit).
    """
    x = z.x
    mu = z.mu
    r, jac = problem.residuals_and_jacobian(x)
    m = r.shape[0]
    s = np.empty(m)
    alpha = np.empty(m)
    dmu = 0.0
    for i in range(m):
        s[i] = smooth_abs(r[i], mu, params)
        alpha[i] = smooth_sign(r[i], mu, params)
        dmu += smooth_abs_dmu(r[i], mu, s[i], alpha[i])
    xx = float(x @ x)
    e = float(s.sum())
    e1 = e + 0.5 * mu * mu * xx
    grad = np.empty(x.shape[0] + 1)
    grad[:-1] = jac.T @ alpha + mu * mu * x
    grad[-1] = dmu + mu * xx if mu != 0.0 else 0.0
    return EnergyReport(e=e, e1=e1, grad=grad, s=s, alpha=alpha)


def grad_e1(z: AugmentedState, problem, params: SmoothingParams) -> np.ndarray:
    """Gradient of the augmented energy only (see ``energy``)."""
    return energy(z, problem, params).grad


def hessian_blocks(z: AugmentedState, problem, params: SmoothingParams) -> np.ndarray:
    """Full symmetric (n+1)x(n+1) Hessian of the augmented energy.

    Diagnostic only; the flow never uses it. Requires mu != 0 (the
    curvature of the surrogate is singular at mu = 0). Per residual, with
    d = theta*mu^2 and a = r/d:

    - xx block:   (2*lam*(1-alpha)/d) * g g^T + alpha * H_r
    - x-mu block: (-4*lam*(1-alpha)*r/(theta*mu^3)) * g
    - mu-mu:      (2/mu^2)(s - alpha*r) + 8*lam*(1-alpha)*r^2/(theta*mu^4)

    plus mu^2 I, 2*mu*x, and ||x||^2 from the augmentation term. The
    products lam*(1-alpha) are evaluated as sech(a)^2 / 2, which stays
    accurate deep into the tails where 1-alpha alone would cancel.
    """
    if z.mu == 0.0:
        raise ValueError("hessian_blocks is undefined at mu = 0")
    x = z.x
    mu = z.mu
    theta = params.theta
    n = x.shape[0]
    d = theta * mu * mu
    r, jac, hess = problem.residuals_jacobian_hessians(x)

    h = np.zeros((n + 1, n + 1))
    for i in range(r.shape[0]):
        a = r[i] / d
        s_i = smooth_abs(r[i], mu, params)
        alpha_i = smooth_sign(r[i], mu, params)
        if abs(a) > _SATURATION:
            lam_gap = 0.0  # lam*(1-alpha)
        else:
            c = math.cosh(a)
            lam_gap = 0.5 / (c * c)
        g = jac[i]
        h[:n, :n] += (2.0 * lam_gap / d) * np.outer(g, g) + alpha_i * hess[i]
        h[:n, n] += (-4.0 * lam_gap * r[i] / (theta * mu**3)) * g
        h[n, n] += (2.0 / mu**2) * (s_i - alpha_i * r[i]) + 8.0 * lam_gap * r[
            i
        ] ** 2 / (theta * mu**4)

    h[:n, :n] += mu * mu * np.eye(n)
    h[:n, n] += 2.0 * mu * x
    h[n, n] += float(x @ x)
    h[n, :n] = h[:n, n]
    return h
