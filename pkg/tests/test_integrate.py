import math

import numpy as np
import pytest

from tdslab.integrate import (
    BudgetExceededError,
    DenseTrajectory,
    EventSpec,
    StepControl,
    StepUnderflowError,
    dde_integrate,
    integrate,
    integrate_until,
)


def decay(t, y):
    return -y


def harmonic(t, y):
    return np.array([y[1], -y[0]])


class TestIntegrate:
    def test_scalar_decay(self):
        traj = integrate(decay, 0.0, 1.0, [1.0])
        assert traj(1.0)[0] == pytest.approx(math.exp(-1.0), abs=1e-8)

    def test_backward_decay(self):
        traj = integrate(decay, 0.0, -1.0, [1.0])
        assert traj.t_start == -1.0 and traj.t_end == 0.0
        assert traj(-1.0)[0] == pytest.approx(math.e, abs=1e-8)

    def test_harmonic_period(self):
        traj = integrate(harmonic, 0.0, 2.0 * math.pi, [1.0, 0.0])
        end = traj(2.0 * math.pi)
        assert end[0] == pytest.approx(1.0, abs=1e-6)
        assert end[1] == pytest.approx(0.0, abs=1e-6)

    def test_same_endpoints_rejected(self):
        with pytest.raises(ValueError):
            integrate(decay, 1.0, 1.0, [1.0])

    def test_knot_evaluation_exact(self):
        traj = integrate(harmonic, 0.0, 3.0, [1.0, 0.0])
        for k in (0, len(traj.t) // 2, -1):
            assert np.array_equal(traj(float(traj.t[k])), traj.y[k])

    def test_max_steps_budget(self):
        ctrl = StepControl(max_steps=5)
        with pytest.raises(BudgetExceededError):
            integrate(harmonic, 0.0, 100.0, [1.0, 0.0], ctrl)

    def test_h_min_underflow_on_blowup(self):
        ctrl = StepControl(h_min=1e-10, max_steps=100_000)
        with pytest.raises(StepUnderflowError) as exc:
            integrate(lambda t, y: (1.0 + y[0] * y[0]) * y, 0.0, 1.0, [1.0], ctrl)
        assert exc.value.t_last > 0.3  # blow-up of w' = (1+w^2)w from 1 is at ln(sqrt(2))


class TestEvents:
    def test_exponential_growth_hit(self):
        traj, hit = integrate_until(lambda t, y: y, 0.0, [1.0], EventSpec(10.0), 5.0)
        assert hit == pytest.approx(math.log(10.0), abs=1e-6)

    def test_decay_no_hit(self):
        traj, hit = integrate_until(decay, 0.0, [1.0], EventSpec(10.0), 5.0)
        assert hit is None
        assert traj.t_end == 5.0

    def test_cubic_blowup_before_one(self):
        # dr/(r(1+r^2)) integrates in closed form: escape of w' = (1+|w|^2) w
        # from w0=1 is at log(sqrt(2)); threshold 1e6 is hit just before.
        t_oracle = math.log(math.sqrt(2.0)) + math.log(1e6 / math.sqrt(1.0 + 1e12))
        traj, hit = integrate_until(
            lambda t, y: (1.0 + y[0] * y[0]) * y, 0.0, [1.0], EventSpec(1e6), 1.0
        )
        assert hit is not None and hit < 1.0
        assert hit == pytest.approx(t_oracle, rel=1e-6)

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            EventSpec(0.0)


class TestDde:
    def test_first_interval(self):
        traj = dde_integrate(lambda t, y, h: -h(t - 1.0), [1.0], [lambda s: 1.0], 1.0)
        assert traj(0.5)[0] == pytest.approx(0.5, abs=1e-9)
        assert traj(1.0)[0] == pytest.approx(0.0, abs=1e-9)

    def test_second_interval(self):
        traj = dde_integrate(lambda t, y, h: -h(t - 1.0), [1.0], [lambda s: 1.0], 2.0)
        # hand integration: x(t) = 1 - t + (t-1)^2/2 on [1, 2]
        assert traj(2.0)[0] == pytest.approx(-0.5, abs=1e-8)

    def test_dummy_delay_matches_ode(self):
        ctrl = StepControl(rel_tol=1e-12, abs_tol=1e-14)
        ta = dde_integrate(lambda t, y, h: -y, [1.0], [lambda s: 1.0], 3.0, ctrl)
        tb = integrate(decay, 0.0, 3.0, [1.0], ctrl)
        grid = np.linspace(0.0, 3.0, 301)
        assert np.max(np.abs(ta(grid) - tb(grid))) <= 1e-10

    def test_read_ahead_rejected(self):
        with pytest.raises(ValueError):
            dde_integrate(lambda t, y, h: -h(t + 0.5), [1.0], [lambda s: 1.0], 1.0)

    def test_bad_delays(self):
        with pytest.raises(ValueError):
            dde_integrate(lambda t, y, h: -y, [], [lambda s: 1.0], 1.0)
        with pytest.raises(ValueError):
            dde_integrate(lambda t, y, h: -y, [-1.0], [lambda s: 1.0], 1.0)


class TestInvariants:
    def test_self_convergence(self):
        coarse = StepControl(rel_tol=1e-6, abs_tol=1e-9)
        fine = StepControl(rel_tol=5e-7, abs_tol=5e-10)
        a = integrate(harmonic, 0.0, 10.0, [1.0, 0.0], coarse)
        b = integrate(harmonic, 0.0, 10.0, [1.0, 0.0], fine)
        assert np.max(np.abs(a(10.0) - b(10.0))) < 10.0 * coarse.rel_tol

    def test_dense_output_accuracy(self):
        ctrl = StepControl(rel_tol=1e-6, abs_tol=1e-9)
        ref_ctrl = StepControl(rel_tol=1e-8, abs_tol=1e-11)
        a = integrate(harmonic, 0.0, 10.0, [1.0, 0.0], ctrl)
        b = integrate(harmonic, 0.0, 10.0, [1.0, 0.0], ref_ctrl)
        rng = np.random.default_rng(0)
        ts = rng.uniform(0.0, 10.0, size=1000)
        assert np.max(np.abs(a(ts) - b(ts))) <= 10.0 * ctrl.rel_tol

    def test_backward_forward_roundtrip(self):
        ctrl = StepControl(rel_tol=1e-9, abs_tol=1e-12)
        back = integrate(harmonic, 0.0, -1.0, [1.0, 0.5], ctrl)
        fwd = integrate(harmonic, -1.0, 0.0, back(-1.0), ctrl)
        assert np.max(np.abs(fwd(0.0) - np.array([1.0, 0.5]))) <= 10.0 * ctrl.rel_tol

    def test_bit_identical_determinism(self):
        a = integrate(harmonic, 0.0, 7.0, [1.0, 0.0])
        b = integrate(harmonic, 0.0, 7.0, [1.0, 0.0])
        assert np.array_equal(a.t, b.t)
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.f, b.f)


class TestStepControl:
    def test_validation(self):
        with pytest.raises(ValueError):
            StepControl(rel_tol=0.0)
        with pytest.raises(ValueError):
            StepControl(h_min=1.0, h_max=0.5)
        with pytest.raises(ValueError):
            StepControl(max_steps=0)


class TestDenseTrajectory:
    def test_monotone_knots_enforced(self):
        t = np.array([0.0, 1.0, 1.0, 2.0])
        y = np.array([[0.0], [1.0], [1.5], [2.0]])
        f = np.zeros_like(y)
        traj = DenseTrajectory(t, y, f)
        assert np.all(np.diff(traj.t) > 0)
        # the last state at a collided time wins
        assert traj(1.0)[0] == 1.5

    def test_domain_guard(self):
        traj = integrate(decay, 0.0, 1.0, [1.0])
        with pytest.raises(ValueError):
            traj(1.5)
