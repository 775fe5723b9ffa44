"""Adversarial constructions: destabilizing input, calibrated speed constant,
backward extension, mollified input, and the initial histories.

The escape search runs in scaled time sigma with d(sigma) = (1 + |w|^2) dt,
where the input-driven system becomes switched *linear* and is propagated by
exact 2x2 matrix exponentials; physical time is recovered by Gauss-Legendre
quadrature of 1/(1 + |w(sigma)|^2).  Switching signals store dwell
*durations*, not absolute switch times: near the norm cap the dwells shrink
below the ulp of the elapsed time, so durations are the only faithful
representation (integration is segment-local throughout).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .integrate import DenseTrajectory, StepControl
from .mat2 import A0, A1
from .system import (
    ChannelSignal,
    HistoryFn,
    InitialState,
    Params,
    Segment,
    simulate,
    w_simulate,
)


class SearchError(RuntimeError):
    """Escape search failed within the budget."""


class ConstructionError(RuntimeError):
    """A construction pipeline could not reach its target."""


class RampOverlapError(ValueError):
    """Mollifier ramps would overlap (delta too large for the dwells)."""


_A0 = np.array([[A0.a11, A0.a12], [A0.a21, A0.a22]])
_A1 = np.array([[A1.a11, A1.a12], [A1.a21, A1.a22]])
_S0 = 0.5 * (_A0 + _A0.T)
_S1 = 0.5 * (_A1 + _A1.T)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _expm2(a: np.ndarray, s: float) -> np.ndarray:
    """Exact exp(a*s) for a real 2x2 matrix."""
    mu = 0.5 * (a[0, 0] + a[1, 1])
    b = a - mu * np.eye(2)
    d2 = b[0, 0] * b[0, 0] + b[0, 1] * b[1, 0]
    if d2 > 0.0:
        d = math.sqrt(d2)
        cs, sn = math.cosh(d * s), math.sinh(d * s) / d
    elif d2 < 0.0:
        d = math.sqrt(-d2)
        cs, sn = math.cos(d * s), math.sin(d * s) / d
    else:
        cs, sn = 1.0, s
    return math.exp(mu * s) * (cs * np.eye(2) + sn * b)


def _grow_rate(u: int, w: np.ndarray) -> float:
    s = _S1 if u else _S0
    return float(w @ s @ w)


def _greedy_choice(w: np.ndarray) -> int:
    return 1 if _grow_rate(1, w) > _grow_rate(0, w) else 0


def _time_of_sigma(a: np.ndarray, w: np.ndarray, s_len: float) -> float:
    """Physical duration of a sigma-span under the linear flow from w."""
    if s_len <= 0.0:
        return 0.0
    n_panels = max(1, int(math.ceil(s_len / 0.25)))
    h = s_len / n_panels
    total = 0.0
    comp = 0.0
    for i in range(n_panels):
        s0 = i * h
        for node, wt in zip(_GL_NODES, _GL_WEIGHTS):
            s = s0 + 0.5 * h * (node + 1.0)
            v = _expm2(a, s) @ w
            contrib = 0.5 * h * wt / (1.0 + v[0] * v[0] + v[1] * v[1])
            y = contrib - comp
            t = total + y
            comp = (t - total) - y
            total = t
    return total


@dataclass
class SwitchingSignal:
    """Piecewise-constant {0,1} input stored as dwell durations.

    Piece i has value initial_value XOR (i odd) and lasts dwells[i].
    Beyond the covered span the last value holds.
    """

    t_start: float
    initial_value: int
    dwells: np.ndarray
    dwell_min_sigma: float = 0.0  # decision floor used by the search, in sigma units

    def __post_init__(self):
        self.dwells = np.asarray(self.dwells, dtype=float)
        if self.initial_value not in (0, 1):
            raise ValueError("initial value must be 0 or 1")
        if self.dwells.size == 0 or np.any(self.dwells <= 0.0):
            raise ValueError("dwell durations must be positive")

    @property
    def piece_values(self) -> np.ndarray:
        n = self.dwells.size
        vals = np.empty(n, dtype=int)
        vals[0::2] = self.initial_value
        vals[1::2] = 1 - self.initial_value
        return vals

    @property
    def total_duration(self) -> float:
        return float(math.fsum(self.dwells))

    @property
    def switch_times(self) -> np.ndarray:
        """Absolute switch times (display only; may quantize near the end)."""
        return self.t_start + np.cumsum(self.dwells)[:-1]

    def value(self, t: float) -> float:
        rem = t - self.t_start
        vals = self.piece_values
        if rem < 0.0:
            return float(vals[0])
        for d, v in zip(self.dwells, vals):
            if rem < d:
                return float(v)
            rem -= d
        return float(vals[-1])

    def pieces(self, t0: float, t1: float) -> list[tuple[float, int, float, float]]:
        """Constant pieces (length, form=0, value, 0) covering [t0, t1].

        When [t0, t1] covers the whole signal, dwell durations are emitted
        verbatim: near an escape the late dwells are smaller than the ulp of
        the elapsed time, so clipping arithmetic on absolute times would
        destroy them.
        """
        if t1 <= t0:
            raise ValueError("need t1 > t0")
        vals = self.piece_values
        end = self.t_start + self.total_duration
        if t0 <= self.t_start and t1 >= end - 4.0 * np.spacing(max(1.0, abs(end))):
            out = []
            lead = self.t_start - t0
            if lead > 0.0:
                out.append((lead, 0, float(vals[0]), 0.0))
            out.extend((float(d), 0, float(v), 0.0) for d, v in zip(self.dwells, vals))
            tail = t1 - end
            if tail > 0.0:
                out.append((tail, 0, float(vals[-1]), 0.0))
            return out
        skip = t0 - self.t_start
        if skip < 0.0:
            raise ValueError("t0 precedes the signal domain")
        out = []
        rem = t1 - t0
        for d, v in zip(self.dwells, vals):
            if skip >= d:
                skip -= d
                continue
            avail = d - skip
            skip = 0.0
            length = min(avail, rem)
            out.append((length, 0, float(v), 0.0))
            rem -= length
            if rem <= 0.0:
                return out
        out.append((rem, 0, float(vals[-1]), 0.0))
        return out

    def rescaled(self, factor: float) -> "SwitchingSignal":
        """Time-rescale: durations multiplied by factor."""
        return SwitchingSignal(
            self.t_start * factor,
            self.initial_value,
            self.dwells * factor,
            self.dwell_min_sigma,
        )

    def shifted(self, ds: float) -> "SwitchingSignal":
        """Signal v with v(t) = self(t + ds)."""
        return SwitchingSignal(
            self.t_start - ds, self.initial_value, self.dwells.copy(), self.dwell_min_sigma
        )


@dataclass
class EscapeCertificate:
    """Destabilizing input for the c = 1 dynamics with its escape record."""

    u: SwitchingSignal
    T_esc: float
    cap: float
    w0: np.ndarray
    growth_log: list[tuple[float, float]] = field(default_factory=list)

    def doubling_intervals(self) -> np.ndarray:
        times = np.array([t for t, _ in self.growth_log])
        return np.diff(times)

    def verify_replay(self, ctrl: StepControl = StepControl(), rel: float = 1e-3) -> float:
        """Replay u through the planar integrator; return the cap-crossing time.

        Raises ConstructionError if the replay misses cap*(1-rel) or the
        crossing time differs from T_esc by more than rel relative.
        """
        horizon = self.u.total_duration
        _traj, hit = w_simulate(
            self.w0, self.u, 1.0, 0.0, horizon, ctrl, cap=self.cap * (1.0 - rel)
        )
        if hit is None:
            raise ConstructionError("certificate replay never reached the norm cap")
        if abs(hit - self.T_esc) > rel * self.T_esc:
            raise ConstructionError(
                f"replay crossing {hit!r} deviates from T_esc {self.T_esc!r}"
            )
        return hit


def escape_search(
    w0=(0.0, 0.5),
    dwell_min: float = 0.05,
    cap: float = 1e8,
    budget: float = 400.0,
) -> EscapeCertificate:
    """Greedy destabilizing switching for the c = 1 input-driven system.

    At each dwell boundary the input u in {0,1} maximizing the instantaneous
    growth rate w^T sym(A_u) w is selected; the dwell floor and the budget
    are in sigma units (d sigma = (1+|w|^2) dt), where both the greedy flow
    and the dwell geometry are scale-free.  Falls back to periodic switching
    if the greedy path stalls.
    """
    w = np.asarray(w0, dtype=float)
    if w.shape != (2,) or not np.all(np.isfinite(w)) or (w[0] == 0.0 and w[1] == 0.0):
        raise ValueError("w0 must be a finite nonzero 2-vector")
    if cap < 1e6:
        raise ValueError("cap must be at least 1e6")
    try:
        return _greedy_escape(w, dwell_min, cap, budget)
    except SearchError:
        return _periodic_escape(w, cap, budget)


OVERSHOOT = 4.0  # search continues to OVERSHOOT*cap so replays cross cap robustly


def _greedy_escape(w0: np.ndarray, dwell_min: float, cap: float, budget: float) -> EscapeCertificate:
    probe = 0.02
    w = w0.copy()
    u = _greedy_choice(w)
    dwells: list[float] = []
    t_total = 0.0
    t_comp = 0.0
    sigma_total = 0.0
    r0 = float(np.hypot(w[0], w[1]))
    next_thr = 2.0 * r0
    growth_log: list[tuple[float, float]] = []
    t_esc = None
    # The escape trajectory is exponentially ill-conditioned end to end, so a
    # replay lands on a neighboring solution with O(several %) norm noise at
    # the cap.  Continuing the search well past cap makes every replay cross
    # it, while the crossing-time spread stays below time resolution.
    stop_r = OVERSHOOT * cap

    while sigma_total < budget:
        a = _A1 if u else _A0
        # Scan forward in sigma until the greedy choice flips or stop_r is hit.
        s_end = None
        s = 0.0
        finished = False
        while True:
            s_next = s + probe
            wn = _expm2(a, s_next) @ w
            if np.hypot(wn[0], wn[1]) >= stop_r:
                lo, hi = s, s_next
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    if mid <= lo or mid >= hi:
                        break
                    v = _expm2(a, mid) @ w
                    if np.hypot(v[0], v[1]) >= stop_r:
                        hi = mid
                    else:
                        lo = mid
                s_end = hi + 0.05
                finished = True
                break
            if s_next >= dwell_min and _greedy_choice(wn) != u:
                lo, hi = s, s_next
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    if mid <= lo or mid >= hi:
                        break
                    v = _expm2(a, mid) @ w
                    if _greedy_choice(v) != u:
                        hi = mid
                    else:
                        lo = mid
                s_end = max(hi, dwell_min)
                break
            s = s_next
            if sigma_total + s > budget:
                raise SearchError(
                    f"greedy search exhausted sigma budget at |w| = {np.hypot(wn[0], wn[1]):.3e}"
                )

        # Norm-doubling log and the cap crossing (T_esc) inside [0, s_end].
        s_scan = 0.0
        while next_thr <= cap:
            s_cross = _first_crossing(a, w, s_scan, s_end, next_thr)
            if s_cross is None:
                break
            t_cross = t_total + (_time_of_sigma(a, w, s_cross) + t_comp)
            growth_log.append((t_cross, next_thr))
            next_thr *= 2.0
            s_scan = s_cross
        if t_esc is None:
            s_cap = _first_crossing(a, w, 0.0, s_end, cap)
            if s_cap is not None:
                t_esc = t_total + (_time_of_sigma(a, w, s_cap) + t_comp)

        dt = _time_of_sigma(a, w, s_end)
        dwells.append(dt)
        y = dt + t_comp
        t_new = t_total + y
        t_comp = y - (t_new - t_total)
        t_total = t_new
        sigma_total += s_end
        w = _expm2(a, s_end) @ w
        u = 1 - u

        if finished:
            if t_esc is None:
                raise SearchError("stop threshold reached without recording the cap crossing")
            sig = SwitchingSignal(0.0, _greedy_choice(w0), np.array(dwells), dwell_min)
            return EscapeCertificate(
                u=sig, T_esc=t_esc, cap=cap, w0=w0.copy(), growth_log=growth_log
            )

    raise SearchError(f"greedy search stalled below cap; best |w| = {np.hypot(w[0], w[1]):.3e}")


def _first_crossing(a, w, s_lo, s_hi, thr) -> Optional[float]:
    """First sigma in (s_lo, s_hi] where |exp(a s) w| crosses thr upward."""
    if s_hi <= s_lo:
        return None
    n = max(2, int(math.ceil((s_hi - s_lo) / 0.02)))
    grid = np.linspace(s_lo, s_hi, n + 1)
    prev = float(np.linalg.norm(_expm2(a, grid[0]) @ w))
    for s0, s1 in zip(grid, grid[1:]):
        cur = float(np.linalg.norm(_expm2(a, s1) @ w))
        if prev < thr <= cur:
            lo, hi = s0, s1
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if float(np.linalg.norm(_expm2(a, mid) @ w)) >= thr:
                    hi = mid
                else:
                    lo = mid
            return hi
        prev = cur
    return None


def _periodic_escape(w0: np.ndarray, cap: float, budget: float) -> EscapeCertificate:
    """Fallback: alternating input with a grid-searched sigma half-period."""
    for half in (0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0):
        for first in (0, 1):
            w = w0.copy()
            u = first
            dwells = []
            t_total, t_comp = 0.0, 0.0
            growth_log: list[tuple[float, float]] = []
            next_thr = 2.0 * float(np.linalg.norm(w0))
            sigma = 0.0
            ok = False
            while sigma < budget:
                a = _A1 if u else _A0
                s_cross = _first_crossing(a, w, 0.0, half, cap)
                if s_cross is not None:
                    t_hit = t_total + (_time_of_sigma(a, w, s_cross) + t_comp)
                    dwells.append(_time_of_sigma(a, w, min(half, s_cross + 0.05)))
                    w = _expm2(a, min(half, s_cross + 0.05)) @ w
                    sig = SwitchingSignal(0.0, first, np.array(dwells), 0.0)
                    return EscapeCertificate(sig, t_hit, cap, w0.copy(), growth_log)
                s_scan = 0.0
                while next_thr <= cap:
                    sc = _first_crossing(a, w, s_scan, half, next_thr)
                    if sc is None:
                        break
                    growth_log.append((t_total + (_time_of_sigma(a, w, sc) + t_comp), next_thr))
                    next_thr *= 2.0
                    s_scan = sc
                dt = _time_of_sigma(a, w, half)
                dwells.append(dt)
                y = dt + t_comp
                t_new = t_total + y
                t_comp = y - (t_new - t_total)
                t_total = t_new
                w = _expm2(a, half) @ w
                sigma += half
                u = 1 - u
                ok = True
            if not ok:
                break
    raise SearchError("periodic fallback found no escape within budget")


def calibrate_c(cert: EscapeCertificate) -> float:
    """Speed constant making the escape land at time 1: c = T_esc."""
    if not (cert.T_esc > 0.0 and math.isfinite(cert.T_esc)):
        raise ValueError("certificate carries no finite escape time")
    return cert.T_esc


def backward_extend(
    c: float, ctrl: StepControl = StepControl(), w0=(0.0, 0.5)
) -> tuple[float, DenseTrajectory]:
    """Backward solution with u == 1 on the largest [-tau_bar, 0] staying in the unit ball.

    Starts from tau_bar = 0.25 and halves until sup |w| <= 1 on the window.
    """
    if c <= 0.0:
        raise ValueError("c must be positive")
    tau_bar = 0.25
    for _ in range(60):
        traj, _ = w_simulate(np.asarray(w0, dtype=float), 1.0, c, 0.0, -tau_bar, ctrl)
        grid = np.linspace(traj.t_start, traj.t_end, 2001)
        sup = float(np.max(traj.norms(grid)))
        if sup <= 1.0:
            return tau_bar, traj
        tau_bar *= 0.5
    raise ConstructionError("no backward window with |w| <= 1 found")


def pick_tau_M(
    traj: DenseTrajectory, M: float, tau_bar: float, multiplier: float = 3.0
) -> float:
    """tau_M = 1 - t*, with t* the first time |w(t*)| >= multiplier * M.

    The trajectory must be the calibrated replay on [0, 1).  Clamped to
    (0, tau_bar].
    """
    thr = multiplier * M
    t_star = traj.first_norm_crossing(thr, rel_tol=1e-18)
    if t_star is None:
        raise ConstructionError(
            f"replay never reached {thr:.3e}; enlarge the escape cap"
        )
    tau = 1.0 - t_star
    if tau <= 0.0:
        raise ConstructionError(
            f"threshold {thr:.3e} crossed only at t = {t_star!r} >= 1"
        )
    return min(tau, tau_bar)


def mollify(
    u: SwitchingSignal, delta: float, t_end: float, pre_value: Optional[float] = None
) -> ChannelSignal:
    """Continuous surrogate of u: forward ramps of width delta at each jump,
    forced to 0 at and after t_end (final ramp completes before t_end).

    Ramps are one-sided (forward), so values before the first jump are
    untouched.  `pre_value` is the signal value on (-inf, t_start); when it
    differs from the first piece a ramp is placed at t_start itself, which
    is how the backward-extension value u == 1 hands over continuously.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    vals = u.piece_values
    knots_t: list[float] = []
    knots_v: list[float] = []
    kept_val = float(vals[0]) if pre_value is None else float(pre_value)
    if kept_val != float(vals[0]):
        knots_t.extend([u.t_start, u.t_start + delta])
        knots_v.extend([kept_val, float(vals[0])])
        kept_val = float(vals[0])
    s = u.t_start
    s_comp = 0.0
    for i in range(u.dwells.size - 1):
        y = float(u.dwells[i]) + s_comp
        s_new = s + y
        s_comp = y - (s_new - s)
        s = s_new
        if s > t_end - 2.0 * delta:
            break  # remaining switches are absorbed by the final ramp
        if knots_t and s <= knots_t[-1]:
            raise RampOverlapError(
                f"delta = {delta!r} >= half the dwell before t = {s!r}"
            )
        knots_t.extend([s, s + delta])
        knots_v.extend([kept_val, float(vals[i + 1])])
        kept_val = float(vals[i + 1])
    # Final ramp to 0, completing before t_end.
    if knots_t and knots_t[-1] > t_end - delta:
        raise RampOverlapError("final ramp would overlap the last switch ramp")
    if kept_val != 0.0:
        knots_t.extend([t_end - delta, t_end - 0.5 * delta])
        knots_v.extend([kept_val, 0.0])
    else:
        knots_t.append(t_end - 0.5 * delta)
        knots_v.append(0.0)
    return ChannelSignal(np.array(knots_t), np.array(knots_v), ("hold", 0.0))


def build_z10(u_k: ChannelSignal, tau_M: float) -> HistoryFn:
    """History carrying the mollified input: 1 on [-2, -1), u_k(t+1-tau_M) on [-1, 0]."""
    shift = 1.0 - tau_M
    v_at_m1 = u_k.value(-tau_M)
    if abs(v_at_m1 - 1.0) > 1e-12:
        raise ConstructionError(
            f"mollified input is {v_at_m1!r} at -tau_M; ramp placement bug"
        )
    kt, kv = [], []
    for t_u, v_u in zip(u_k.knot_t, u_k.knot_v):
        t_hist = (t_u - 1.0) + tau_M  # u argument t+shift -> history time
        if t_hist <= -1.0 or t_hist >= 0.0:
            continue
        kt.append(float(t_hist))
        kv.append(float(v_u))
    ts = [-1.0] + kt + [0.0]
    vs = [1.0] + kv + [u_k.value(shift)]
    if abs(vs[-1]) > 1e-12:
        raise ConstructionError(f"mollified input is {vs[-1]!r} at 1 - tau_M, expected 0")
    vs[-1] = 0.0
    segs = [
        Segment(-2.0, -1.0, "const", (1.0,)),
        Segment(-1.0, 0.0, "samples", (tuple(ts), tuple(vs))),
    ]
    return HistoryFn(segs)


def build_z20_eps(eps: float) -> HistoryFn:
    """1 on [-2, -1], linear to 0 on (-1, -1+eps], then 0."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    segs = [Segment(-2.0, -1.0, "const", (1.0,)), Segment(-1.0, -1.0 + eps, "linear", (1.0, 0.0))]
    if -1.0 + eps < 0.0:
        segs.append(Segment(-1.0 + eps, 0.0, "const", (0.0,)))
    return HistoryFn(segs)


@dataclass
class ConstructOpts:
    dwell_min: float = 0.05
    cap: float = 1e8
    budget: float = 400.0
    delta0: Optional[float] = None
    max_rounds: int = 20
    ctrl: StepControl = StepControl()
    certificate: Optional[EscapeCertificate] = None
    w0: tuple[float, float] = (0.0, 0.5)


@dataclass
class Lemma1Artifacts:
    """Certified transient bundle: replaying (x0, z10, any unit z20 history)
    through the full system produces |x(1)| >= 2M."""

    c: float
    tau_bar: float
    tau_M: float
    M: float
    achieved: float
    delta: float
    cap: float
    dwell_min: float
    z10: HistoryFn
    x0: tuple[HistoryFn, HistoryFn]
    u_k: Optional[ChannelSignal] = None
    certificate: Optional[EscapeCertificate] = None

    MANIFEST = "lemma1_manifest.txt"

    def initial_state(self, z20: Optional[HistoryFn] = None) -> InitialState:
        if z20 is None:
            z20 = HistoryFn.constant(1.0)
        return InitialState(self.x0, self.z10, z20)

    def save(self, out_dir) -> None:
        import pathlib

        d = pathlib.Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        lines = [
            f"c = {self.c:.17g}",
            f"tau_bar = {self.tau_bar:.17g}",
            f"tau_M = {self.tau_M:.17g}",
            f"M = {self.M:.17g}",
            f"achieved = {self.achieved:.17g}",
            f"dwell = {self.dwell_min:.17g}",
            f"delta = {self.delta:.17g}",
            f"cap = {self.cap:.17g}",
        ]
        (d / self.MANIFEST).write_text("\n".join(lines) + "\n")
        (d / "z10.hist").write_text(self.z10.to_text())
        (d / "x0_1.hist").write_text(self.x0[0].to_text())
        (d / "x0_2.hist").write_text(self.x0[1].to_text())

    @classmethod
    def load(cls, in_dir) -> "Lemma1Artifacts":
        import pathlib

        d = pathlib.Path(in_dir)
        kv = {}
        for line in (d / cls.MANIFEST).read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                kv[k.strip()] = float(v.strip())
        return cls(
            c=kv["c"],
            tau_bar=kv["tau_bar"],
            tau_M=kv["tau_M"],
            M=kv["M"],
            achieved=kv["achieved"],
            delta=kv["delta"],
            cap=kv["cap"],
            dwell_min=kv["dwell"],
            z10=HistoryFn.from_text((d / "z10.hist").read_text()),
            x0=(
                HistoryFn.from_text((d / "x0_1.hist").read_text()),
                HistoryFn.from_text((d / "x0_2.hist").read_text()),
            ),
        )


def lemma1_construct(M: float, opts: ConstructOpts = ConstructOpts()) -> Lemma1Artifacts:
    """Full arbitrarily-large-transient pipeline for a target M.

    Escape search -> calibration -> backward extension -> threshold time ->
    mollification -> z10/x0 assembly, then a full-system replay verifying
    |x(1)| >= 2M.  If mollification degraded the transient, the ramp width
    is halved (and the threshold multiplier raised every third round).
    """
    if M <= 0.0:
        raise ValueError("M must be positive")
    cert = opts.certificate
    needed_cap = max(opts.cap, 30.0 * M)
    if cert is None or cert.cap < 30.0 * M:
        cert = escape_search(opts.w0, opts.dwell_min, needed_cap, opts.budget)
    c = calibrate_c(cert)
    tau_bar, w_neg = backward_extend(c, opts.ctrl, opts.w0)
    u_cal = cert.u.rescaled(1.0 / c)

    best_achieved = -math.inf
    best: Optional[Lemma1Artifacts] = None
    for round_idx in range(opts.max_rounds):
        multiplier = 3.0 * 1.6 ** (round_idx // 3)
        thr = multiplier * M
        if thr >= cert.cap:
            break
        replay, hit = w_simulate(
            np.asarray(opts.w0, dtype=float), u_cal, c, 0.0, u_cal.total_duration,
            opts.ctrl, cap=thr,
        )
        if hit is None:
            raise ConstructionError(f"calibrated replay never reached {thr:.3e}")
        tau_M = pick_tau_M(replay, M, tau_bar, multiplier)
        min_dwell = _min_dwell_before(u_cal, 1.0 - tau_M)
        delta_base = opts.delta0 if opts.delta0 is not None else min_dwell / 8.0
        delta = min(delta_base, min_dwell / 4.0) / 2.0**round_idx
        if delta <= 0.0 or 1.0 - tau_M - 2.0 * delta <= 0.0:
            break
        u_k = mollify(u_cal, delta, 1.0 - tau_M, pre_value=1.0)
        z10 = build_z10(u_k, tau_M)
        wv = w_neg(-tau_M)
        x0 = (HistoryFn.constant(float(wv[0])), HistoryFn.constant(float(wv[1])))
        if math.hypot(float(wv[0]), float(wv[1])) > 1.0:
            raise ConstructionError("backward extension left the unit ball at -tau_M")
        arts = Lemma1Artifacts(
            c=c, tau_bar=tau_bar, tau_M=tau_M, M=M, achieved=math.nan,
            delta=delta, cap=cert.cap, dwell_min=opts.dwell_min,
            z10=z10, x0=x0, u_k=u_k, certificate=cert,
        )
        bundle = simulate(arts.initial_state(), Params(c), 1.0, opts.ctrl, cap=1e30)
        achieved = float(np.linalg.norm(bundle.x(1.0)))
        arts.achieved = achieved
        if achieved > best_achieved:
            best_achieved = achieved
            best = arts
        if achieved >= 2.0 * M:
            return arts
    raise ConstructionError(
        f"refinement exhausted; best |x(1)| = {best_achieved:.6e} < 2M = {2.0 * M:.6e}"
        + ("" if best is None else f" (tau_M = {best.tau_M!r})")
    )


def _min_dwell_before(u: SwitchingSignal, t_end: float) -> float:
    """Smallest dwell fully contained in [t_start, t_end]."""
    s = u.t_start
    out = math.inf
    for d in u.dwells:
        if s + d > t_end:
            break
        out = min(out, float(d))
        s += d
    if not math.isfinite(out):
        raise ConstructionError("no complete dwell before the mollification horizon")
    return out


def uga_adversary(
    T: float, opts: ConstructOpts = ConstructOpts()
) -> tuple[InitialState, float, float, float, Lemma1Artifacts]:
    """Witness initial state defeating uniform attractivity at horizon T.

    Chooses M = e^{c * lambda0 * T}, builds the transient artifacts for that
    M, and shrinks the z20 ramp width eps until the simulated |X(T)| >= 1.
    Returns (X0, M, eps, c, artifacts).
    """
    from .mat2 import sym_eig_bounds

    if T <= 1.0:
        raise ValueError("T must exceed 1")
    lam0 = -sym_eig_bounds(A0.sym())[0]
    cert = opts.certificate
    if cert is None:
        cert = escape_search(opts.w0, opts.dwell_min, opts.cap, opts.budget)
        opts = replace(opts, certificate=cert)
    c = calibrate_c(cert)
    if c * lam0 * T > 700.0:
        raise ConstructionError(
            f"M = exp({c * lam0 * T:.1f}) overflows double precision; reduce T"
        )
    M = math.exp(c * lam0 * T)
    arts = lemma1_construct(M, opts)
    eps = 0.5
    for _ in range(40):
        X0 = InitialState(arts.x0, arts.z10, build_z20_eps(eps))
        bundle = simulate(X0, Params(c), T, opts.ctrl, cap=1e30)
        if bundle.norm(T) >= 1.0:
            return X0, M, eps, c, arts
        eps *= 0.5
    raise ConstructionError("eps shrink loop exhausted without |X(T)| >= 1")
