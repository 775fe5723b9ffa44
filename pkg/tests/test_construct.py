import math

import numpy as np
import pytest

from tdslab.construct import (
    ConstructionError,
    Lemma1Artifacts,
    RampOverlapError,
    SwitchingSignal,
    _grow_rate,
    backward_extend,
    build_z20_eps,
    calibrate_c,
    escape_search,
    lemma1_construct,
    mollify,
    pick_tau_M,
    uga_adversary,
)
from tdslab.integrate import StepControl
from tdslab.system import InitialState, Params, simulate, w_simulate


class TestEscapeSearch:
    def test_greedy_initial_choice(self, cert):
        # at w0 = (0, 1/2): growth rates are 0 for mode 0 vs -0.025 for mode 1
        w0 = np.array([0.0, 0.5])
        assert _grow_rate(0, w0) == 0.0
        assert _grow_rate(1, w0) == pytest.approx(-0.025, abs=1e-15)
        assert cert.u.initial_value == 0

    def test_certificate_replay(self, cert):
        hit = cert.verify_replay()
        assert abs(hit - cert.T_esc) <= 1e-3 * cert.T_esc

    def test_replay_tolerance_robust(self, cert):
        hit = cert.verify_replay(StepControl(rel_tol=1e-8, abs_tol=1e-11))
        assert abs(hit - cert.T_esc) <= 1e-3 * cert.T_esc

    def test_doubling_intervals_eventually_decreasing(self, cert):
        iv = cert.doubling_intervals()
        assert iv.size >= 8
        assert np.all(np.diff(iv[3:]) < 0.0)

    def test_frozen_input_never_escapes(self):
        # u fixed at 0: the quadratic form decays; norms stay bounded
        traj, hit = w_simulate([0.0, 0.5], 0.0, 1.0, 0.0, 30.0, cap=1e6)
        assert hit is None
        assert np.max(np.sqrt(np.sum(traj.y**2, axis=1))) < 2.0

    def test_cap_validation(self):
        with pytest.raises(ValueError):
            escape_search(cap=1e5)
        with pytest.raises(ValueError):
            escape_search(w0=(0.0, 0.0))

    def test_dwells_positive_alternating(self, cert):
        assert np.all(cert.u.dwells > 0.0)
        vals = cert.u.piece_values
        assert np.all(np.abs(np.diff(vals)) == 1)


class TestCalibrate:
    def test_definitional(self, cert):
        assert calibrate_c(cert) == cert.T_esc

    def test_rescaled_replay_reaches_cap_by_one(self, cert):
        # the true crossing sits below t = 1 by ~1/cap^2, under time resolution
        c = calibrate_c(cert)
        u_cal = cert.u.rescaled(1.0 / c)
        traj, hit = w_simulate(
            np.array([0.0, 0.5]), u_cal, c, 0.0, u_cal.total_duration, cap=cert.cap
        )
        assert hit is not None and hit <= 1.0
        assert np.max(np.sqrt(np.sum(traj.y**2, axis=1))) >= cert.cap

    def test_doubling_c_halves_escape_time(self, cert):
        c = calibrate_c(cert)
        u2 = cert.u.rescaled(1.0 / (2.0 * c))
        traj, hit = w_simulate(
            np.array([0.0, 0.5]), u2, 2.0 * c, 0.0, u2.total_duration, cap=cert.cap
        )
        assert hit is not None
        assert hit == pytest.approx(0.5, rel=1e-3)


class TestBackwardExtend:
    def test_window_inside_unit_ball(self, cert):
        tau_bar, traj = backward_extend(calibrate_c(cert))
        assert 0.0 < tau_bar < 1.0
        grid = np.linspace(-tau_bar, 0.0, 500)
        assert np.max(traj.norms(grid)) <= 1.0
        assert np.allclose(traj(0.0), [0.0, 0.5], atol=1e-12)


@pytest.fixture(scope="module")
def replay(cert):
    c = calibrate_c(cert)
    u_cal = cert.u.rescaled(1.0 / c)
    traj, _ = w_simulate(
        np.array([0.0, 0.5]), u_cal, c, 0.0, u_cal.total_duration,
        StepControl(), cap=1e7,
    )
    return traj


@pytest.fixture(scope="module")
def arts10(opts):
    return lemma1_construct(10.0, opts)


class TestPickTau:
    def test_definitional(self, replay, cert):
        tau = pick_tau_M(replay, 10.0, 0.25)
        t_star = replay.first_norm_crossing(30.0, rel_tol=1e-18)
        assert tau == pytest.approx(1.0 - t_star, rel=1e-9)

    def test_monotone_in_M(self, replay):
        taus = [pick_tau_M(replay, m, 0.25) for m in (5.0, 10.0, 50.0, 200.0)]
        assert all(a >= b for a, b in zip(taus, taus[1:]))

    def test_clamped_by_tau_bar(self, replay):
        assert pick_tau_M(replay, 10.0, 1e-9) == 1e-9

    def test_threshold_unreachable(self, replay):
        with pytest.raises(ConstructionError):
            pick_tau_M(replay, 1e10, 0.25)


class TestMollify:
    @pytest.fixture()
    def toy(self):
        return SwitchingSignal(0.0, 0, np.array([0.3, 0.2, 0.3, 0.4]))

    def test_endpoint_values(self, toy):
        uk = mollify(toy, 0.01, 1.0, pre_value=1.0)
        assert uk.value(-0.25) == 1.0
        assert uk.value(1.0) == 0.0
        assert uk.value(5.0) == 0.0

    def test_pointwise_convergence_at_non_switch_times(self, toy):
        probes = [0.15, 0.4, 0.62, 0.9]
        uk1 = mollify(toy, 0.02, 1.0)
        uk2 = mollify(toy, 0.0004, 1.0)
        for t in probes:
            assert uk2.value(t) == toy.value(t)
            # coarser ramps may still be mid-ramp at a probe; finer ones not
            assert abs(uk1.value(t) - toy.value(t)) <= 1.0

    def test_integral_area_bound(self, toy):
        delta = 0.01
        uk = mollify(toy, delta, 1.0, pre_value=1.0)
        # trapezoid over the ramp knots is exact for piecewise-linear signals
        ts = np.unique(np.concatenate([uk.knot_t, np.linspace(0.0, 1.0, 4001)]))
        ts = ts[(ts >= 0.0) & (ts <= 1.0)]
        vals = np.array([uk.value(t) for t in ts])
        ik = np.trapezoid(vals, ts)
        vals_u = np.array([toy.value(t) for t in ts])
        iu = np.trapezoid(vals_u, ts)
        n_ramps = 5  # pre-value jump + three interior switches + final ramp
        assert abs(ik - iu) <= n_ramps * delta / 2.0 + 1e-9

    def test_overlap_rejected(self, toy):
        with pytest.raises(RampOverlapError):
            mollify(toy, 0.2, 1.0, pre_value=1.0)

    def test_range_within_unit_interval(self, toy):
        uk = mollify(toy, 0.01, 1.0, pre_value=1.0)
        assert np.all(uk.knot_v >= 0.0) and np.all(uk.knot_v <= 1.0)


class TestBuildZ10:
    def test_boundary_values(self, arts10):
        z10 = arts10.z10
        assert z10(-2.0) == 1.0
        assert z10.at_zero() == 0.0
        assert z10(-1.0) == 1.0

    def test_norm_one(self, arts10):
        assert arts10.z10.sup_norm() == 1.0

    def test_continuity_at_minus_one(self, arts10):
        assert abs(arts10.z10(-1.0 - 1e-9) - arts10.z10(-1.0 + 1e-9)) <= 1e-6


class TestBuildZ20:
    def test_values(self):
        z = build_z20_eps(0.25)
        assert z(-2.0) == 1.0
        assert z(-1.5) == 1.0
        assert z(-1.0 + 0.125) == pytest.approx(0.5, abs=1e-12)
        assert z(-0.5) == 0.0
        assert z.at_zero() == 0.0
        assert z.sup_norm() == 1.0

    def test_eps_one_edge(self):
        z = build_z20_eps(1.0)
        assert z(-1.0) == 1.0
        assert z.at_zero() == 0.0

    def test_eps_validation(self):
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                build_z20_eps(bad)


class TestLemma1:
    def test_m10(self, arts10):
        assert arts10.achieved >= 20.0
        assert arts10.z10.sup_norm() <= 1.0
        assert arts10.z10.at_zero() == 0.0
        assert math.hypot(arts10.x0[0].at_zero(), arts10.x0[1].at_zero()) <= 1.0
        assert arts10.initial_state().sup_norm() <= 2.0
        assert 0.0 < arts10.tau_M <= arts10.tau_bar

    def test_replay_identity_on_unit_interval(self, arts10):
        # simulate's x equals the input-driven run shifted by tau_M
        arts = arts10
        b = simulate(arts.initial_state(), Params(arts.c), 1.0, cap=1e30)
        u_shift = arts.u_k.shifted(-arts.tau_M)
        w0 = np.array([arts.x0[0].at_zero(), arts.x0[1].at_zero()])
        traj, _ = w_simulate(w0, u_shift, arts.c, 0.0, 1.0, cap=1e30)
        grid = np.linspace(0.0, 1.0, 200)
        xa = b.x(grid)
        xb = traj(grid)
        na = np.sqrt(np.sum(xa * xa, axis=1))
        dev = np.sqrt(np.sum((xa - xb) ** 2, axis=1)) / np.maximum(na, 1e-12)
        assert np.max(dev) <= 1e-8  # 10x the default relative tolerance

    def test_manifest_roundtrip(self, arts10, tmp_path):
        arts = arts10
        arts.save(tmp_path / "arts")
        back = Lemma1Artifacts.load(tmp_path / "arts")
        assert back.c == arts.c
        assert back.tau_M == arts.tau_M
        assert back.achieved == arts.achieved
        assert back.z10.to_text() == arts.z10.to_text()
        assert back.x0[0].to_text() == arts.x0[0].to_text()

    def test_bad_M(self, opts):
        with pytest.raises(ValueError):
            lemma1_construct(-1.0, opts)


class TestUgaAdversary:
    def test_t3_witness(self, opts, consts):
        X0, M, eps, c, arts = uga_adversary(3.0, opts)
        assert M == pytest.approx(math.exp(c * consts.lambda0 * 3.0), rel=1e-12)
        assert X0.sup_norm() <= 2.0
        b = simulate(X0, Params(c), 3.0, cap=1e30)
        assert b.norm(3.0) >= 1.0
        # |x(1)| >= 2M for the witness regardless of eps
        assert np.linalg.norm(b.x(1.0)) >= 2.0 * M

    def test_transient_independent_of_eps(self, opts):
        # z20 only reshapes the dynamics after t = 1, so |x(1)| >= 2M for any eps
        X0, M, eps, c, arts = uga_adversary(3.0, opts)
        for e in (1.0, 0.05):
            Xe = InitialState(arts.x0, arts.z10, build_z20_eps(e))
            b = simulate(Xe, Params(c), 1.0, cap=1e30)
            assert np.linalg.norm(b.x(1.0)) >= 2.0 * M

    def test_intermediate_floor_after_peak(self, opts, consts):
        X0, M, eps, c, arts = uga_adversary(3.0, opts)
        b = simulate(X0, Params(c), 3.0, cap=1e30)
        # |x| stays above M on a short window right of t = 1
        tau_win = 1.0 / (8.0 * consts.lambda0 * c * M * M)
        grid = 1.0 + np.linspace(0.0, tau_win, 50)
        xs = b.x(grid)
        assert np.min(np.sqrt(np.sum(xs * xs, axis=1))) >= M

    def test_t_validation(self, opts):
        with pytest.raises(ValueError):
            uga_adversary(0.5, opts)


class TestSwitchingSignal:
    def test_validation(self):
        with pytest.raises(ValueError):
            SwitchingSignal(0.0, 2, np.array([1.0]))
        with pytest.raises(ValueError):
            SwitchingSignal(0.0, 0, np.array([]))
        with pytest.raises(ValueError):
            SwitchingSignal(0.0, 0, np.array([1.0, -1.0]))

    def test_value_walk(self):
        u = SwitchingSignal(0.0, 1, np.array([0.5, 0.25, 0.25]))
        assert u.value(-1.0) == 1.0
        assert u.value(0.2) == 1.0
        assert u.value(0.6) == 0.0
        assert u.value(0.8) == 1.0
        assert u.value(5.0) == 1.0

    def test_full_cover_pieces_keep_durations(self):
        d = np.array([0.5, 1e-17, 2e-18])
        u = SwitchingSignal(0.0, 0, d)
        pieces = u.pieces(0.0, u.total_duration)
        assert [p[0] for p in pieces] == list(d)

    def test_rescale_shift(self):
        u = SwitchingSignal(0.0, 0, np.array([1.0, 2.0]))
        v = u.rescaled(0.5)
        assert v.total_duration == pytest.approx(1.5)
        w = u.shifted(0.5)
        assert w.value(0.0) == u.value(0.5)
