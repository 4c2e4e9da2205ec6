"""Embedded 3(2) stepper and adaptive integration loop."""

import math

import numpy as np
import pytest

from l1flow.ode import (
    EVENT_GRAD_NORM,
    MAX_STEPS,
    REACHED_T_FINAL,
    STEP_UNDERFLOW,
    OdeSettings,
    integrate,
    step_pair,
)


class TestStepPair:
    def test_zero_field_is_exact(self):
        z = np.array([1.0, -2.0])
        z_new, err, f_last = step_pair(
            lambda t, y: np.zeros(2), 0.0, z, 0.5, rtol=1e-6, atol=1e-9
        )
        np.testing.assert_array_equal(z_new, z)
        assert err == 0.0
        np.testing.assert_array_equal(f_last, np.zeros(2))

    def test_quadratic_in_time_is_exact(self):
        # dz/dt = (1, 2t): degree <= 2 solution, zero error estimate
        z_new, err, _ = step_pair(
            lambda t, y: np.array([1.0, 2.0 * t]),
            0.0,
            np.zeros(2),
            1.0,
            rtol=1e-6,
            atol=1e-9,
        )
        np.testing.assert_allclose(z_new, [1.0, 1.0], atol=1e-15)
        # zero up to weight roundoff amplified by the ~1e-6 error scale
        assert err <= 1e-9

    def test_nonfinite_field_rejects(self):
        z = np.array([1.0])
        z_new, err, _ = step_pair(
            lambda t, y: np.array([math.nan]), 0.0, z, 0.1, rtol=1e-6, atol=1e-9
        )
        assert err == math.inf
        np.testing.assert_array_equal(z_new, z)

    def test_fsal_stage_reuse_consistent(self):
        field = lambda t, y: -y
        z = np.array([1.0])
        z1, _, f_last = step_pair(field, 0.0, z, 0.1, rtol=1e-6, atol=1e-9)
        np.testing.assert_array_equal(f_last, field(0.1, z1))


class TestIntegrate:
    def test_exponential_decay_end_value(self):
        traj = integrate(
            lambda t, z: -z,
            np.array([1.0]),
            OdeSettings(t_final=1.0, rtol=1e-6, atol=1e-9),
        )
        assert traj.stop_reason == REACHED_T_FINAL
        assert traj.t_end == 1.0
        assert abs(traj.z_end[0] - math.exp(-1.0)) <= 1e-5

    def test_harmonic_oscillator_samples(self):
        field = lambda t, z: np.array([z[1], -z[0]])
        traj = integrate(
            field,
            np.array([1.0, 0.0]),
            OdeSettings(t_final=10.0, rtol=1e-6, atol=1e-9),
            sample_every=1,
        )
        worst = max(
            max(abs(s.z[0] - math.cos(s.t)), abs(s.z[1] + math.sin(s.t)))
            for s in traj.samples
        )
        assert worst <= 1e-4

    def test_first_sample_is_initial_state(self):
        traj = integrate(
            lambda t, z: -z, np.array([3.0]), OdeSettings(t_final=0.5)
        )
        assert traj.samples[0].t == 0.0
        np.testing.assert_array_equal(traj.samples[0].z, [3.0])

    def test_time_strictly_increasing_and_final_recorded(self):
        traj = integrate(
            lambda t, z: -z, np.array([1.0]), OdeSettings(t_final=2.0), sample_every=3
        )
        times = [s.t for s in traj.samples]
        assert all(b > a for a, b in zip(times, times[1:]))
        assert times[-1] == 2.0

    def test_determinism(self):
        settings = OdeSettings(t_final=1.5, rtol=1e-7, atol=1e-10)
        field = lambda t, z: np.array([-z[0] + 0.3 * math.sin(t)])
        a = integrate(field, np.array([1.0]), settings, sample_every=2)
        b = integrate(field, np.array([1.0]), settings, sample_every=2)
        assert len(a.samples) == len(b.samples)
        for sa, sb in zip(a.samples, b.samples):
            assert sa.t == sb.t
            np.testing.assert_array_equal(sa.z, sb.z)
        assert a.steps_accepted == b.steps_accepted
        assert a.steps_rejected == b.steps_rejected

    def test_descent_along_gradient_flow(self):
        # flow on g(z) = z1^4/4 + z2^2: sampled g never increases
        def field(t, z):
            return -np.array([z[0] ** 3, 2.0 * z[1]])

        def monitor(z):
            g = 0.25 * z[0] ** 4 + z[1] ** 2
            return g, float(np.linalg.norm(field(0.0, z)))

        traj = integrate(
            field,
            np.array([1.3, -0.8]),
            OdeSettings(t_final=5.0),
            sample_every=1,
            monitor=monitor,
        )
        values = [s.e1 for s in traj.samples]
        for a, b in zip(values, values[1:]):
            assert b <= a + 1e-9 * (1.0 + abs(a))

    def test_event_stop(self):
        traj = integrate(
            lambda t, z: -z,
            np.array([1.0]),
            OdeSettings(t_final=50.0, stop_grad_norm=0.5),
        )
        assert traj.stop_reason == EVENT_GRAD_NORM
        assert traj.t_end < 50.0
        # |dz/dt| = |z| and the event fires on the default field-norm monitor
        assert traj.z_end[0] <= 0.5 + 1e-3

    def test_max_steps_stop(self):
        traj = integrate(
            lambda t, z: -z,
            np.array([1.0]),
            OdeSettings(t_final=1.0, max_steps=5),
        )
        assert traj.stop_reason == MAX_STEPS
        assert traj.steps_accepted + traj.steps_rejected == 5
        assert traj.t_end < 1.0

    def test_underflow_stop(self):
        traj = integrate(
            lambda t, z: np.array([math.nan]),
            np.array([1.0]),
            OdeSettings(t_final=1.0),
        )
        assert traj.stop_reason == STEP_UNDERFLOW
        assert traj.steps_accepted == 0
        assert traj.samples[0].t == 0.0

    def test_field_evaluation_count_fsal(self):
        calls = [0]

        def field(t, z):
            calls[0] += 1
            return -z

        traj = integrate(field, np.array([1.0]), OdeSettings(t_final=1.0))
        expected = 1 + 3 * (traj.steps_accepted + traj.steps_rejected)
        assert calls[0] == expected

    def test_sample_every_validation(self):
        with pytest.raises(ValueError):
            integrate(lambda t, z: -z, np.array([1.0]), OdeSettings(t_final=1.0), 0)


class TestOrder:
    def test_tolerance_sweep_convergence_order(self):
        errors = []
        mean_h = []
        for rtol in [1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9]:
            traj = integrate(
                lambda t, z: -z,
                np.array([1.0]),
                OdeSettings(t_final=1.0, rtol=rtol, atol=1e-14),
            )
            err = abs(traj.z_end[0] - math.exp(-1.0))
            assert err <= 10.0 * rtol
            errors.append(err)
            mean_h.append(1.0 / traj.steps_accepted)
        slope = np.polyfit(np.log(mean_h), np.log(errors), 1)[0]
        assert slope >= 2.7


class TestSettings:
    def test_defaults_resolved(self):
        s = OdeSettings(t_final=2.0)
        assert s.h_init == pytest.approx(2.0 / 1000.0)
        assert s.h_max == 2.0
        assert 0.0 < s.h_min <= s.h_init

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(t_final=0.0),
            dict(t_final=-1.0),
            dict(t_final=1.0, rtol=0.0),
            dict(t_final=1.0, atol=-1e-9),
            dict(t_final=1.0, h_init=0.5, h_max=0.1),
            dict(t_final=1.0, h_min=0.5, h_init=0.1),
            dict(t_final=1.0, max_steps=0),
        ],
    )
    def test_invalid_settings(self, kwargs):
        with pytest.raises(ValueError):
            OdeSettings(**kwargs)
