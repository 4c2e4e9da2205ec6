"""Adaptive Bogacki-Shampine 3(2) integration with trajectory sampling.

A four-stage third-order step with an embedded second-order error
estimate; the last stage equals the first stage of the next step (FSAL),
so an accepted step costs three field evaluations. The controller
accepts a step when the scaled RMS error is at most 1 and rescales the
step size by ``0.9 * err^(-1/3)``, clamped to [0.2, 5].

Fields are callables ``f(t, z) -> dz/dt`` on 1-d float arrays. The
integrator itself knows nothing about energies; an optional ``monitor``
callback supplies the per-sample scalar diagnostics recorded in the
trajectory (and the value tested by the early-stop event).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "OdeSettings",
    "Trajectory",
    "TrajectorySample",
    "step_pair",
    "integrate",
    "REACHED_T_FINAL",
    "EVENT_GRAD_NORM",
    "STEP_UNDERFLOW",
    "MAX_STEPS",
]

REACHED_T_FINAL = "reached_t_final"
EVENT_GRAD_NORM = "event_grad_norm"
STEP_UNDERFLOW = "step_underflow"
MAX_STEPS = "max_steps"

# Bogacki-Shampine 3(2): stage nodes, coupling, and 3rd-order weights;
# _ERR are the weights of the (3rd - 2nd)-order difference.
_C2, _C3 = 0.5, 0.75
_A32 = 0.75
_B1, _B2, _B3 = 2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0
_ERR = (-5.0 / 72.0, 1.0 / 12.0, 1.0 / 9.0, -1.0 / 8.0)


@dataclass
class OdeSettings:
    """Integration window, tolerances, and step-size limits.

    Unset step limits are resolved from ``t_final``: initial step
    ``t_final/1000``, maximum step ``t_final``, minimum step
    ``1e-13 * t_final``.
    """

    t_final: float
    rtol: float = 1e-6
    atol: float = 1e-9
    h_init: float | None = None
    h_min: float | None = None
    h_max: float | None = None
    max_steps: int = 1_000_000
    stop_grad_norm: float | None = None

    def __post_init__(self):
        if not self.t_final > 0.0:
            raise ValueError("t_final must be positive")
        if not (self.rtol > 0.0 and self.atol > 0.0):
            raise ValueError("rtol and atol must be positive")
        if self.h_init is None:
            self.h_init = self.t_final / 1000.0
        if self.h_max is None:
            self.h_max = self.t_final
        if self.h_min is None:
            self.h_min = min(1e-13 * self.t_final, self.h_init)
        if not (0.0 < self.h_min <= self.h_init <= self.h_max):
            raise ValueError(
                f"need 0 < h_min <= h_init <= h_max, got "
                f"({self.h_min}, {self.h_init}, {self.h_max})"
            )
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


class TrajectorySample(NamedTuple):
    t: float
    z: np.ndarray
    e1: float
    grad_norm: float


@dataclass
class Trajectory:
    """Sampled solution path plus bookkeeping.

    The first sample is always (0, z0); the final state is always the
    last sample. ``stop_reason`` is one of the module constants.
    """

    samples: list[TrajectorySample]
    stop_reason: str
    steps_accepted: int
    steps_rejected: int

    @property
    def t_end(self) -> float:
        return self.samples[-1].t

    @property
    def z_end(self) -> np.ndarray:
        return self.samples[-1].z


def step_pair(field, t, z, h, rtol, atol, f0=None):
    """One embedded 3(2) step from (t, z) with step h.

    Returns ``(z_high, err, f_last)``: the third-order solution, the
    scaled RMS error estimate (accept when <= 1), and the field at the
    new point for FSAL reuse. Pass the field at (t, z) as ``f0`` when
    already known. Any non-finite stage value yields ``err = inf`` (a
    rejected-step signal), with the state left untouched.
    """
    k1 = field(t, z) if f0 is None else f0
    k2 = field(t + _C2 * h, z + (h * _C2) * k1)
    k3 = field(t + _C3 * h, z + (h * _A32) * k2)
    z_high = z + h * (_B1 * k1 + _B2 * k2 + _B3 * k3)
    if not np.all(np.isfinite(z_high)):
        return z, math.inf, k1
    k4 = field(t + h, z_high)
    if not np.all(np.isfinite(k4)):
        return z, math.inf, k1
    err_vec = h * (_ERR[0] * k1 + _ERR[1] * k2 + _ERR[2] * k3 + _ERR[3] * k4)
    scale = atol + rtol * np.maximum(np.abs(z), np.abs(z_high))
    err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
    if not math.isfinite(err):
        return z, math.inf, k1
    return z_high, err, k4


def integrate(
    field: Callable,
    z0,
    settings: OdeSettings,
    sample_every: int = 10,
    monitor: Callable | None = None,
) -> Trajectory:
    """Integrate ``dz/dt = field(t, z)`` over [0, t_final].

    Records every ``sample_every``-th accepted step plus the final state.
    ``monitor(z) -> (value, grad_norm)`` fills the per-sample scalars;
    without one, the sample records NaN and the norm of the field. When
    ``settings.stop_grad_norm`` is set, integration stops early once the
    monitored norm falls to or below it (checked at every accepted step).

    Always returns a trajectory; premature endings are reported through
    ``stop_reason`` (step underflow and step budget are not exceptions).
    """
    if sample_every < 1:
        raise ValueError("sample_every must be a positive integer")
    z = np.asarray(z0, dtype=float).copy()
    t = 0.0
    t_final = settings.t_final
    h = min(settings.h_init, t_final)

    f_now = np.asarray(field(t, z), dtype=float)

    def probe(state, f_state):
        if monitor is not None:
            value, gnorm = monitor(state)
            return float(value), float(gnorm)
        return math.nan, float(np.linalg.norm(f_state))

    samples = [TrajectorySample(0.0, z.copy(), *probe(z, f_now))]
    accepted = 0
    rejected = 0
    stop_reason = REACHED_T_FINAL

    while t < t_final * (1.0 - 1e-14):
        h = min(h, settings.h_max, t_final - t)
        z_new, err, f_new = step_pair(
            field, t, z, h, settings.rtol, settings.atol, f0=f_now
        )
        if err <= 1.0:
            t = t_final if t + h >= t_final * (1.0 - 1e-14) else t + h
            z = z_new
            f_now = f_new
            accepted += 1
            need_event = settings.stop_grad_norm is not None
            if accepted % sample_every == 0 or need_event:
                value, gnorm = probe(z, f_now)
                if accepted % sample_every == 0:
                    samples.append(TrajectorySample(t, z.copy(), value, gnorm))
                if need_event and gnorm <= settings.stop_grad_norm:
                    stop_reason = EVENT_GRAD_NORM
                    break
        else:
            rejected += 1
        # growth clamp [0.2, 5]; err = 0 means the step was exact
        factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** (-1.0 / 3.0)))
        h_next = h * factor
        if accepted + rejected >= settings.max_steps and t < t_final * (1.0 - 1e-14):
            stop_reason = MAX_STEPS
            break
        if err > 1.0 and h_next < settings.h_min:
            stop_reason = STEP_UNDERFLOW
            break
        h = max(h_next, settings.h_min)

    if not samples or samples[-1].t != t:
        samples.append(TrajectorySample(t, z.copy(), *probe(z, f_now)))
    return Trajectory(
        samples=samples,
        stop_reason=stop_reason,
        steps_accepted=accepted,
        steps_rejected=rejected,
    )
