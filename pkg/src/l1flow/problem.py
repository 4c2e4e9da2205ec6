"""Sum-of-absolute-residuals problems and the stationarity certificate.

A :class:`Problem` is an ordered list of smooth residuals r_i over n
variables; the objective is ``f(x) = sum_i |r_i(x)|``. Stationarity of
this nonsmooth objective means the zero vector can be written as
``sum_i delta_i * grad r_i(x)`` with ``delta_i = sign(r_i)`` wherever
``r_i != 0`` and ``delta_i`` free in [-1, 1] on the zero residuals.
:meth:`Problem.stationarity_residual` computes the minimum-norm such
combination; a (near-)zero value certifies a stationary point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import ResidualExpr, eval_dual, eval_value, parse

__all__ = ["Problem", "StationarityReport", "builtin", "BUILTIN_NAMES"]


@dataclass
class StationarityReport:
    """Result of the minimum-norm subgradient search at a point.

    ``delta`` has one coefficient per residual: the sign for inactive
    (nonzero) residuals, the box-constrained minimizer for active ones.
    ``kkt_residual`` is the Euclidean norm of ``sum_i delta_i grad r_i``
    at those coefficients.
    """

    kkt_residual: float
    active_set: list[int]
    delta: np.ndarray


@dataclass
class Problem:
    """Ordered residual list over ``n_vars`` variables.

    ``sample_box`` (per-variable (lo, hi) intervals) is only used to draw
    random starting points; the flow itself is unconstrained.
    ``known_minima`` is benchmark metadata.
    """

    residuals: list[ResidualExpr]
    n_vars: int
    sample_box: list[tuple[float, float]] | None = None
    known_minima: list[np.ndarray] | None = None
    name: str = ""

    def __post_init__(self):
        if not self.residuals:
            raise ValueError("a problem needs at least one residual")
        for r in self.residuals:
            if r.n_vars > self.n_vars:
                raise ValueError(
                    f"residual '{r}' references {r.n_vars} variables, "
                    f"problem has {self.n_vars}"
                )
        if self.sample_box is not None:
            if len(self.sample_box) != self.n_vars:
                raise ValueError("sample_box must have one interval per variable")
            for lo, hi in self.sample_box:
                if not lo < hi:
                    raise ValueError(f"empty sample interval ({lo}, {hi})")

    @classmethod
    def from_strings(
        cls,
        residuals: list[str],
        n_vars: int,
        sample_box=None,
        known_minima=None,
        name: str = "",
    ) -> "Problem":
        parsed = [parse(text, n_vars) for text in residuals]
        return cls(parsed, n_vars, sample_box, known_minima, name)

    @property
    def m(self) -> int:
        return len(self.residuals)

    def objective(self, x) -> float:
        """L1 objective ``sum_i |r_i(x)|``."""
        return float(sum(abs(eval_value(r, x)) for r in self.residuals))

    def residuals_and_jacobian(self, x):
        """Residual vector (m,) and Jacobian (m, n) with exact gradients."""
        r = np.empty(self.m)
        jac = np.empty((self.m, self.n_vars))
        for i, expr in enumerate(self.residuals):
            dv = eval_dual(expr, x, order=1)
            r[i] = dv.value
            jac[i] = dv.first
        return r, jac

    def residuals_jacobian_hessians(self, x):
        """Like ``residuals_and_jacobian`` plus per-residual Hessians."""
        r = np.empty(self.m)
        jac = np.empty((self.m, self.n_vars))
        hess = np.empty((self.m, self.n_vars, self.n_vars))
        for i, expr in enumerate(self.residuals):
            dv = eval_dual(expr, x, order=2)
            r[i] = dv.value
            jac[i] = dv.first
            hess[i] = dv.second
        return r, jac, hess

    def stationarity_residual(self, x, zero_tol: float | None = None) -> StationarityReport:
        """Minimum-norm subgradient combination at x.

        Residuals with ``|r_i| <= zero_tol`` are treated as active (their
        coefficient ranges over [-1, 1]); the default tolerance is
        ``1e-6 * (1 + max|r|)``. The box-constrained least-squares over
        the active coefficients is solved by projected gradient descent
        with a fixed step.
        """
        r, jac = self.residuals_and_jacobian(x)
        if zero_tol is None:
            zero_tol = 1e-6 * (1.0 + float(np.max(np.abs(r))))
        elif not zero_tol > 0.0:
            raise ValueError("zero_tol must be positive")

        active = np.abs(r) <= zero_tol
        delta = np.sign(r)
        delta[active] = 0.0
        g0 = jac[~active].T @ delta[~active]

        idx = np.nonzero(active)[0]
        if idx.size:
            delta[idx] = _boxqp_min_norm(g0, jac[idx])
        kkt = float(np.linalg.norm(g0 + jac[idx].T @ delta[idx]))
        return StationarityReport(
            kkt_residual=kkt, active_set=idx.tolist(), delta=delta
        )

    def sample_start(self, rng: np.random.Generator) -> np.ndarray:
        """One uniform draw from the sample box."""
        if self.sample_box is None:
            raise ValueError(f"problem '{self.name}' has no sample_box")
        lo = np.array([b[0] for b in self.sample_box])
        hi = np.array([b[1] for b in self.sample_box])
        return rng.uniform(lo, hi)


def _boxqp_min_norm(g0, jac_active, max_iter: int = 500, tol: float = 1e-10):
    """argmin over delta in [-1,1]^k of ||g0 + jac_active^T delta||^2.

    Projected gradient descent with fixed step 1/L, where L bounds the
    largest eigenvalue of the quadratic's Hessian via the Frobenius norm.
    Convex, so the fixed point is the global minimizer.
    """
    k = jac_active.shape[0]
    delta = np.zeros(k)
    lam = 2.0 * float(np.sum(jac_active * jac_active))  # Frobenius bound on 2*J J^T
    if lam == 0.0:
        return delta  # all active gradients vanish; any delta is optimal
    step = 1.0 / lam
    q = jac_active @ jac_active.T
    b = jac_active @ g0
    for _ in range(max_iter):
        grad = 2.0 * (b + q @ delta)
        new = np.clip(delta - step * grad, -1.0, 1.0)
        if float(np.max(np.abs(new - delta))) <= tol:
            delta = new
            break
        delta = new
    return delta


_BUILTINS = {
    "problem1": dict(
        residuals=["x1^3 - 3*x1", "x2"],
        n_vars=2,
        sample_box=[(-1.0, 1.0), (-1.0, 1.0)],
        known_minima=[
            np.array([0.0, 0.0]),
            np.array([np.sqrt(3.0), 0.0]),
            np.array([-np.sqrt(3.0), 0.0]),
        ],
    ),
    "rastrigin_l1": dict(
        residuals=["x1^2 + x2^2", "20 - 10*(cos(2*pi*x1) + cos(2*pi*x2))"],
        n_vars=2,
        sample_box=[(-1.0, 1.0), (-1.0, 1.0)],
        known_minima=[np.array([0.0, 0.0])],
    ),
}

BUILTIN_NAMES = tuple(sorted(_BUILTINS))


def builtin(name: str) -> Problem:
    """Construct a built-in benchmark problem: ``problem1`` or ``rastrigin_l1``."""
    try:
        spec = _BUILTINS[name]
    except KeyError:
        raise ValueError(
            f"unknown builtin problem '{name}' (choose from {', '.join(BUILTIN_NAMES)})"
        ) from None
    return Problem.from_strings(
        residuals=list(spec["residuals"]),
        n_vars=spec["n_vars"],
        sample_box=[tuple(b) for b in spec["sample_box"]],
        known_minima=[p.copy() for p in spec["known_minima"]],
        name=name,
    )
