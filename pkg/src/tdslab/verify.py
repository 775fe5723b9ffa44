"""Verification checkers: LES envelopes, GAS convergence with adaptive
horizons, transient/attractivity violations, the weak-attractivity metric,
and the dual-integrator cross-check.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import mat2
from .construct import ConstructOpts, lemma1_construct, uga_adversary
from .integrate import StepControl
from .mat2 import SymMat2, sym_eig_bounds
from .system import HistoryFn, InitialState, Params, simulate, simulate_dde

VERIFY_CTRL = StepControl(rel_tol=1e-8, abs_tol=1e-14)


@dataclass(frozen=True)
class StabilityConstants:
    """Derived decay machinery for the composed state.

    x decays at rate c / (4 * alpha_hi) inside the small ball; the scalar
    channels decay at rate 1; k and mu combine both.
    """

    c: float
    p0: SymMat2
    p1: SymMat2
    lambda_bar: float
    lambda0: float
    alpha_lo: float
    alpha_hi: float
    k: float
    mu: float


def constants(c: float) -> StabilityConstants:
    if c <= 0.0:
        raise ValueError("c must be positive")
    p0 = mat2.lyapunov_solve(mat2.A0, mat2.IDENTITY)
    p1 = mat2.lyapunov_solve(mat2.A1, mat2.IDENTITY)
    lam_bar = mat2.find_lambda_bar(p0, 1e-6)
    lam0 = -sym_eig_bounds(mat2.A0.sym())[0]
    alpha_lo, alpha_hi = sym_eig_bounds(p0)
    return StabilityConstants(
        c=c,
        p0=p0,
        p1=p1,
        lambda_bar=lam_bar,
        lambda0=lam0,
        alpha_lo=alpha_lo,
        alpha_hi=alpha_hi,
        k=math.sqrt(alpha_hi / alpha_lo),
        mu=min(c / (4.0 * alpha_hi), 1.0),
    )


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


@dataclass
class VerificationReport:
    claim: str
    params: dict
    measured: dict
    passed: Optional[bool]  # None == inconclusive
    witness_paths: list[str] = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def status(self) -> str:
        if self.passed is None:
            return "inconclusive"
        return "pass" if self.passed else "fail"

    def to_text(self) -> str:
        """Canonical serialized form.

        Deliberately excludes wall_clock_s so that reruns with identical
        config and seed are byte-identical.
        """
        lines = [f"claim = {self.claim}", f"status = {self.status}"]
        for k, v in self.params.items():
            lines.append(f"params.{k} = {_fmt(v)}")
        for k, v in self.measured.items():
            lines.append(f"measured.{k} = {_fmt(v)}")
        for i, p in enumerate(self.witness_paths):
            lines.append(f"witness.{i} = {p}")
        return "\n".join(lines) + "\n"


def random_initial_state(rng: np.random.Generator, radius: float, n_knots: int = 8) -> InitialState:
    """Random piecewise-linear histories scaled to an exact stacked sup-norm."""
    ts = np.linspace(-2.0, 0.0, n_knots)
    raw = rng.uniform(-1.0, 1.0, size=(4, n_knots))
    sup = float(np.max(np.sqrt(np.sum(raw * raw, axis=0))))
    vals = raw * (radius / sup)
    chans = [HistoryFn.from_knots(ts, vals[i]) for i in range(4)]
    return InitialState((chans[0], chans[1]), chans[2], chans[3])


def _stacked_norms(bundle) -> tuple[np.ndarray, np.ndarray]:
    """(knot times, |X| at knots) using closed-form z-channels."""
    ts = bundle.x.t
    xs = bundle.x.y
    z1 = bundle.init.z10.at_zero() * np.exp(-ts)
    z2 = bundle.init.z20.at_zero() * np.exp(-ts)
    return ts, np.sqrt(xs[:, 0] ** 2 + xs[:, 1] ** 2 + z1 * z1 + z2 * z2)


def check_les(
    c: float = 1.0,
    n: int = 100,
    ctrl: StepControl = VERIFY_CTRL,
    seed: int = 2024,
    out_dir=None,
    k_margin: float = 1.05,
) -> VerificationReport:
    """Exponential envelope on n seeded random states in the small ball.

    Each sample must satisfy |X(t)| <= k_margin * k * |X0| * e^{-mu t} at
    every accepted knot, and the quadratic form x' P0 x must obey its own
    decay v0(t) <= k_margin * v0(0) * e^{-c t / (2 alpha_hi)}.
    """
    t0 = time.perf_counter()
    cs = constants(c)
    horizon = 20.0 / cs.mu
    rng = np.random.default_rng(seed)
    max_env = 0.0
    max_v0 = 0.0
    witness = None
    for i in range(n):
        radius = cs.lambda_bar * (0.1 + 0.9 * rng.random())
        X0 = random_initial_state(rng, radius)
        bundle = simulate(X0, Params(c), horizon, ctrl)
        ts, norms = _stacked_norms(bundle)
        env = cs.k * radius * np.exp(-cs.mu * ts)
        ratio = float(np.max(norms / env))
        xs = bundle.x.y
        v0 = cs.p0.p11 * xs[:, 0] ** 2 + 2.0 * cs.p0.p12 * xs[:, 0] * xs[:, 1] + cs.p0.p22 * xs[:, 1] ** 2
        v0_env = v0[0] * np.exp(-c * ts / (2.0 * cs.alpha_hi))
        vr = float(np.max(v0 / np.maximum(v0_env, 1e-300))) if v0[0] > 0.0 else 0.0
        if ratio > max_env:
            max_env = ratio
            if ratio > k_margin:
                witness = (i, X0)
        max_v0 = max(max_v0, vr)
    passed = max_env <= k_margin and max_v0 <= k_margin
    paths = []
    if witness is not None and out_dir is not None:
        import pathlib

        name = f"les_witness_{witness[0]}"
        witness[1].save(pathlib.Path(out_dir) / name)
        paths.append(name)  # relative to the report directory
    return VerificationReport(
        claim="les",
        params={"c": c, "n": n, "seed": seed, "k_margin": k_margin},
        measured={
            "k": cs.k,
            "mu": cs.mu,
            "lambda_bar": cs.lambda_bar,
            "horizon": horizon,
            "max_envelope_ratio": max_env,
            "max_v0_ratio": max_v0,
        },
        passed=passed,
        witness_paths=paths,
        wall_clock_s=time.perf_counter() - t0,
    )


def check_gas(
    X0: InitialState,
    c: float,
    tol: float = 1e-3,
    ctrl: StepControl = VERIFY_CTRL,
    budget_horizon: float = 1e5,
) -> VerificationReport:
    """Adaptive-horizon convergence: find t* with |X(t*)| <= tol.

    Phase 1 runs until the delayed channel is inside the Lyapunov margin
    (closed form from the channel decay), then doubling horizons until the
    stacked norm dips below tol.  Budget exhaustion is inconclusive, not a
    failure.
    """
    t0 = time.perf_counter()
    cs = constants(c)
    z1_at0 = abs(X0.z10.at_zero())
    t_margin = 1.0
    if z1_at0 > cs.lambda_bar:
        t_margin = 1.0 + math.log(z1_at0 / cs.lambda_bar)
    horizon = max(2.0 * t_margin, t_margin + 10.0)
    converged_at = None
    peak = 0.0
    while True:
        bundle = simulate(X0, Params(c), horizon, ctrl, cap=1e30)
        ts, norms = _stacked_norms(bundle)
        peak = max(peak, float(np.max(norms)))
        below = np.nonzero(norms <= tol)[0]
        if below.size > 0:
            converged_at = float(ts[below[0]])
            break
        if horizon >= budget_horizon:
            break
        horizon = min(2.0 * horizon, budget_horizon)
    passed: Optional[bool]
    measured = {
        "tol": tol,
        "phase1_horizon": t_margin,
        "peak_norm": peak,
        "final_horizon": horizon,
    }
    if converged_at is None:
        passed = None
    else:
        passed = True
        measured["converged_at"] = converged_at
    return VerificationReport(
        claim="gas",
        params={"c": c, "tol": tol},
        measured=measured,
        passed=passed,
        wall_clock_s=time.perf_counter() - t0,
    )


def check_brs_violation(
    M: float,
    opts: ConstructOpts = None,
    out_dir=None,
) -> VerificationReport:
    """Arbitrarily large transient from the ball of radius 2 at time 1."""
    t0 = time.perf_counter()
    if opts is None:
        opts = ConstructOpts()
    arts = lemma1_construct(M, opts)
    X0 = arts.initial_state()
    norm_x0 = X0.sup_norm()
    passed = (
        norm_x0 <= 2.0
        and arts.achieved >= 2.0 * M
        and arts.z10.sup_norm() <= 1.0
        and abs(arts.z10.at_zero()) == 0.0
        and max(arts.x0[0].sup_norm(), arts.x0[1].sup_norm()) <= 1.0
    )
    paths = []
    if out_dir is not None:
        import pathlib

        name = f"brs_witness_M{M:g}"
        arts.save(pathlib.Path(out_dir) / name)
        X0.save(pathlib.Path(out_dir) / name / "initial_state")
        paths.append(name)
    return VerificationReport(
        claim="brs_violation",
        params={"M": M, "cap": arts.cap, "dwell_min": arts.dwell_min},
        measured={
            "c": arts.c,
            "tau_bar": arts.tau_bar,
            "tau_M": arts.tau_M,
            "delta": arts.delta,
            "achieved": arts.achieved,
            "norm_X0": norm_x0,
            "z10_norm": arts.z10.sup_norm(),
            "z10_at_zero": arts.z10.at_zero(),
        },
        passed=passed,
        witness_paths=paths,
        wall_clock_s=time.perf_counter() - t0,
    )


def check_uga_violation(
    T: float,
    opts: ConstructOpts = None,
    out_dir=None,
) -> VerificationReport:
    """Witness with |X0| <= 2 whose solution still has |X(T)| >= 1."""
    t0 = time.perf_counter()
    if T <= 1.0:
        raise ValueError("T must exceed 1")
    if opts is None:
        opts = ConstructOpts()
    if opts.certificate is None:
        from dataclasses import replace

        from .construct import escape_search

        opts = replace(
            opts, certificate=escape_search(opts.w0, opts.dwell_min, opts.cap, opts.budget)
        )
    c_guard = opts.certificate.T_esc
    lam0 = -sym_eig_bounds(mat2.A0.sym())[0]
    if c_guard * lam0 * T > 40.0:
        raise ValueError(
            f"c*lambda0*T = {c_guard * lam0 * T:.2f} > 40: infeasible at desk scale, reduce T"
        )
    X0, M, eps, c, arts = uga_adversary(T, opts)
    bundle = simulate(X0, Params(c), T, opts.ctrl, cap=1e30)
    norm_T = bundle.norm(T)
    norm_x0 = X0.sup_norm()
    grid = np.linspace(1.0, T, 2001)
    min_late = float(np.min(bundle.norms(grid)))
    passed = norm_x0 <= 2.0 and norm_T >= 1.0
    paths = []
    if out_dir is not None:
        import pathlib

        name = f"uga_witness_T{T:g}"
        X0.save(pathlib.Path(out_dir) / name)
        paths.append(name)
    return VerificationReport(
        claim="uga_violation",
        params={"T": T},
        measured={
            "c": c,
            "M": M,
            "eps": eps,
            "achieved_at_1": arts.achieved,
            "norm_X0": norm_x0,
            "norm_at_T": norm_T,
            "min_norm_on_1_T": min_late,
        },
        passed=passed,
        witness_paths=paths,
        wall_clock_s=time.perf_counter() - t0,
    )


def wuga_metric(
    X0: InitialState, c: float, T: float, ctrl: StepControl = VERIFY_CTRL
) -> float:
    """min over [0, T] of |X(t)| on a dense grid, refined by local search.

    Diagnostic only: the weak-attractivity disproof is by implication and
    certifies no numeric bound for this quantity.
    """
    if T <= 0.0:
        raise ValueError("T must be positive")
    bundle = simulate(X0, Params(c), T, ctrl, cap=1e30)
    grid = np.unique(np.concatenate([np.linspace(0.0, T, max(1001, int(1.0 / 1e-3))), bundle.x.t]))
    norms = bundle.norms(grid)
    i = int(np.argmin(norms))
    lo = grid[max(0, i - 1)]
    hi = grid[min(grid.size - 1, i + 1)]
    for _ in range(80):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if m1 >= m2:
            break
        if bundle.norm(m1) <= bundle.norm(m2):
            hi = m2
        else:
            lo = m1
    return min(float(norms[i]), bundle.norm(0.5 * (lo + hi)))


def cross_check(
    X0: InitialState, c: float, T: float, ctrl: StepControl = StepControl(rel_tol=1e-9, abs_tol=1e-13)
) -> float:
    """Maximum relative deviation between the cascade and delay integrators."""
    if T <= 0.0:
        raise ValueError("T must be positive")
    p = Params(c)
    ba = simulate(X0, p, T, ctrl)
    bb = simulate_dde(X0, p, T, ctrl)
    grid = np.linspace(0.0, T, 1001)
    xa = ba.states(grid)
    xb = bb.states(grid)
    na = np.sqrt(np.sum(xa * xa, axis=1))
    nb = np.sqrt(np.sum(xb * xb, axis=1))
    dev = np.sqrt(np.sum((xa - xb) ** 2, axis=1))
    return float(np.max(dev / np.maximum(np.maximum(na, nb), 1e-12)))
