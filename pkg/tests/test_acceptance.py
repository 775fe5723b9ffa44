"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one `ACCEPTANCE <n> <name>: PASS` line (run pytest with -s
or -rA to see them for passing tests).  Budgets are wall-clock seconds; the
kernel JIT warm-up happens in a session fixture so compilation time is not
billed to any criterion.
"""

import math
import time

import numpy as np
import pytest

from tdslab.construct import (
    escape_search,
    lemma1_construct,
    uga_adversary,
)
from tdslab.integrate import StepControl
from tdslab.mat2 import (
    A0,
    A1,
    IDENTITY,
    a_lambda,
    hurwitz,
    lyapunov_form,
    lyapunov_solve,
)
from tdslab.system import Params, simulate_dde, w_simulate, z_eval
from tdslab.verify import (
    check_brs_violation,
    check_gas,
    check_les,
    check_uga_violation,
    cross_check,
    random_initial_state,
)


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    w_simulate([0.1, 0.0], 0.0, 1.0, 0.0, 0.1)


def _report(num, name, detail=""):
    print(f"ACCEPTANCE {num} {name}: PASS {detail}")


def _best_of(fn, reps=5):
    best = math.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def test_criterion_1_lyapunov_exactness():
    def solve_both():
        lyapunov_solve(A0, IDENTITY)
        lyapunov_solve(A1, IDENTITY)

    elapsed = _best_of(solve_both)
    p0 = lyapunov_solve(A0, IDENTITY)
    p1 = lyapunov_solve(A1, IDENTITY)
    for got, want in ((p0, (25.0, -1.0, 6.3)), (p1, (6.3, 1.0, 25.0))):
        assert abs(got.p11 - want[0]) <= 1e-12
        assert abs(got.p12 - want[1]) <= 1e-12
        assert abs(got.p22 - want[2]) <= 1e-12
    for a, p in ((A0, p0), (A1, p1)):
        res = lyapunov_form(a, p)
        assert max(abs(res.p11 + 1.0), abs(res.p12), abs(res.p22 + 1.0)) <= 1e-12
    assert elapsed < 1e-3
    _report(1, "lyapunov-exactness", f"(best {elapsed * 1e6:.0f} us)")


def test_criterion_2_hurwitz_family():
    lams = [k / 100.0 for k in range(101)]

    def sweep():
        assert all(hurwitz(a_lambda(lam)) for lam in lams)

    elapsed = _best_of(sweep)
    assert elapsed < 1e-2
    _report(2, "hurwitz-family", f"(101 points, best {elapsed * 1e3:.2f} ms)")


def test_criterion_3_escape_existence(cert):
    t0 = time.perf_counter()
    fresh = escape_search(w0=(0.0, 0.5), cap=1e8)
    hit = fresh.verify_replay()
    elapsed = time.perf_counter() - t0
    assert abs(hit - fresh.T_esc) <= 1e-3 * fresh.T_esc
    iv = fresh.doubling_intervals()
    assert iv.size >= 8 and np.all(np.diff(iv[3:]) < 0.0)
    assert elapsed < 30.0
    _report(3, "escape-existence", f"(T_esc = {fresh.T_esc:.6f}, {elapsed:.2f}s)")


@pytest.mark.parametrize("M", [10.0, 1e3, 1e6])
def test_criterion_4_lemma1_brs(M, opts):
    t0 = time.perf_counter()
    arts = lemma1_construct(M, opts)
    elapsed = time.perf_counter() - t0
    X0 = arts.initial_state()
    assert X0.sup_norm() <= 2.0
    assert arts.z10.sup_norm() <= 1.0
    assert arts.z10.at_zero() == 0.0
    assert max(arts.x0[0].sup_norm(), arts.x0[1].sup_norm()) <= 1.0
    assert arts.achieved >= 2.0 * M
    assert elapsed < 120.0
    _report(4, f"lemma1-brs-M{M:g}", f"(|x(1)| = {arts.achieved:.4e}, {elapsed:.2f}s)")


def test_criterion_4_transients_grow(opts):
    achieved = [lemma1_construct(M, opts).achieved for M in (10.0, 1e3, 1e6)]
    assert achieved[0] < achieved[1] < achieved[2]
    _report(4, "lemma1-brs-monotone", f"(achieved = {[f'{a:.3e}' for a in achieved]})")


def test_criterion_5_les_envelope():
    t0 = time.perf_counter()
    rep = check_les(c=1.0, n=100, seed=2024)
    elapsed = time.perf_counter() - t0
    assert rep.passed
    assert rep.measured["max_envelope_ratio"] <= 1.05
    assert rep.measured["max_v0_ratio"] <= 1.05
    assert elapsed < 60.0
    _report(
        5,
        "les-envelope",
        f"(100 samples, env ratio {rep.measured['max_envelope_ratio']:.3f}, {elapsed:.2f}s)",
    )


@pytest.mark.parametrize("T", [3.0, 5.0])
def test_criterion_6_uga_violation(T, opts):
    t0 = time.perf_counter()
    rep = check_uga_violation(T, opts)
    elapsed = time.perf_counter() - t0
    assert rep.passed
    assert rep.measured["norm_X0"] <= 2.0
    assert rep.measured["norm_at_T"] >= 1.0
    assert elapsed < 300.0
    _report(
        6,
        f"uga-violation-T{T:g}",
        f"(|X(T)| = {rep.measured['norm_at_T']:.3f}, M = {rep.measured['M']:.3e}, {elapsed:.2f}s)",
    )


def test_criterion_7_gas_despite_adversary(opts):
    X0, _M, _eps, c, _arts = uga_adversary(3.0, opts)
    rep = check_gas(X0, c, tol=1e-3)
    assert rep.passed is True  # inconclusive counts as failure here
    t_star = rep.measured["converged_at"]
    assert t_star > 3.0
    _report(7, "gas-despite-adversary", f"(converged at t = {t_star:.2f} > 3)")


def test_criterion_8_integrator_cross_check(consts):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    ctrl = StepControl(rel_tol=1e-9, abs_tol=1e-13)
    max_dev = 0.0
    max_zerr = 0.0
    for _ in range(20):
        X0 = random_initial_state(rng, consts.lambda_bar * (0.1 + 0.9 * rng.random()))
        max_dev = max(max_dev, cross_check(X0, 1.0, 5.0, ctrl))
        bundle = simulate_dde(X0, Params(1.0), 5.0, ctrl)
        zt = bundle.z_traj
        closed = np.stack(
            [
                [z_eval(X0.z10, float(t)) for t in zt.t],
                [z_eval(X0.z20, float(t)) for t in zt.t],
            ],
            axis=1,
        )
        max_zerr = max(max_zerr, float(np.max(np.abs(zt.y - closed))))
    elapsed = time.perf_counter() - t0
    assert max_dev <= 1e-6
    assert max_zerr <= 1e-8
    assert elapsed < 60.0
    _report(
        8,
        "integrator-cross-check",
        f"(max dev {max_dev:.2e}, z err {max_zerr:.2e}, {elapsed:.2f}s)",
    )


def test_criterion_9_cocycle_and_rescaling(cert):
    t0 = time.perf_counter()
    ctrl = StepControl(rel_tol=1e-10, abs_tol=1e-13)
    rng = np.random.default_rng(99)
    u = cert.u
    worst_cocycle = 0.0
    worst_rescale = 0.0
    for _ in range(10):
        w0 = rng.uniform(-0.7, 0.7, size=2)
        s = float(rng.uniform(0.1, 0.8))
        t = float(rng.uniform(0.1, 1.7 - s))
        full, _ = w_simulate(w0, u, 1.0, 0.0, s + t, ctrl, cap=1e12)
        mid = full(s)
        shifted, _ = w_simulate(mid, u.shifted(s), 1.0, 0.0, t, ctrl, cap=1e12)
        lhs = shifted(t)
        rhs = full(s + t)
        worst_cocycle = max(
            worst_cocycle,
            float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-12)),
        )
        c = float(rng.uniform(0.5, 4.0))
        horizon = s + t
        a, _ = w_simulate(w0, u, 1.0, 0.0, horizon, ctrl, cap=1e12)
        b, _ = w_simulate(w0, u.rescaled(1.0 / c), c, 0.0, horizon / c, ctrl, cap=1e12)
        va, vb = a(horizon), b(horizon / c)
        worst_rescale = max(
            worst_rescale,
            float(np.linalg.norm(va - vb) / max(np.linalg.norm(va), 1e-12)),
        )
    elapsed = time.perf_counter() - t0
    assert worst_cocycle <= 10.0 * ctrl.rel_tol * 1e2  # amplification along the flow
    assert worst_rescale <= 10.0 * ctrl.rel_tol * 1e2
    assert elapsed < 30.0
    _report(
        9,
        "cocycle-and-rescaling",
        f"(worst {worst_cocycle:.2e} / {worst_rescale:.2e}, {elapsed:.2f}s)",
    )


def test_criterion_10_determinism(opts):
    cert_a = escape_search(w0=(0.0, 0.5), cap=1e8)
    cert_b = escape_search(w0=(0.0, 0.5), cap=1e8)
    assert cert_a.T_esc == cert_b.T_esc
    assert np.array_equal(cert_a.u.dwells, cert_b.u.dwells)
    assert cert_a.growth_log == cert_b.growth_log

    rep_a = check_brs_violation(1e3, opts)
    rep_b = check_brs_violation(1e3, opts)
    assert rep_a.to_text() == rep_b.to_text()

    rep_c = check_uga_violation(3.0, opts)
    rep_d = check_uga_violation(3.0, opts)
    assert rep_c.to_text() == rep_d.to_text()
    _report(10, "determinism", "(certificates and reports byte-identical)")
