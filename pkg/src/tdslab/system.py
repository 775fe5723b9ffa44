"""The counter-example dynamics.

Four state channels: a planar x driven by a switched, norm-amplified field,
and two scalar channels z1, z2 with pure exponential decay read back through
delays 1 and 2.  Because the z-channels never depend on x, they are known in
closed form and the x-dynamics reduce to a nonautonomous planar ODE driven
by two scalar time signals; `simulate` exploits that cascade, while
`simulate_dde` integrates the full 4-dimensional delay system as an
independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .integrate import (
    BudgetExceededError,
    DenseTrajectory,
    StepControl,
    StepUnderflowError,
    integrate,
)
from .mat2 import A0, A1

JOINT_TOL = 1e-12
DOMAIN = (-2.0, 0.0)
DELAYS = (1.0, 2.0)


def phi(s: float) -> float:
    """Saturation to [0, 1]: 0 below 0, identity on [0, 1], 1 above 1."""
    if s < 0.0:
        return 0.0
    if s > 1.0:
        return 1.0
    return s


def g(x, u: float) -> np.ndarray:
    """(1 + |x|^2) (phi(u) A1 + (1 - phi(u)) A0) x."""
    x = np.asarray(x, dtype=float)
    p = phi(u)
    q = 1.0 + x[0] * x[0] + x[1] * x[1]
    m11 = p * A1.a11 + (1.0 - p) * A0.a11
    m12 = p * A1.a12 + (1.0 - p) * A0.a12
    m21 = p * A1.a21 + (1.0 - p) * A0.a21
    m22 = p * A1.a22 + (1.0 - p) * A0.a22
    return q * np.array([m11 * x[0] + m12 * x[1], m21 * x[0] + m22 * x[1]])


@dataclass(frozen=True)
class Segment:
    t0: float
    t1: float
    kind: str  # const | linear | samples
    params: tuple

    def value(self, t: float) -> float:
        if self.kind == "const":
            return self.params[0]
        if self.kind == "linear":
            v0, v1 = self.params
            if self.t1 == self.t0:
                return v1
            return v0 + (v1 - v0) * (t - self.t0) / (self.t1 - self.t0)
        ts, vs = self.params
        return float(np.interp(t, ts, vs))

    def local_knots(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "const":
            return np.array([self.t0, self.t1]), np.array([self.params[0]] * 2)
        if self.kind == "linear":
            return np.array([self.t0, self.t1]), np.array(self.params, dtype=float)
        ts, vs = self.params
        return np.asarray(ts, dtype=float), np.asarray(vs, dtype=float)


class HistoryFn:
    """Piecewise history on [-2, 0]: constant, linear, or sampled segments.

    Segments must tile the domain exactly and join continuously (within
    1e-12).  Every kind is exactly piecewise linear, so knots and sup-norms
    are exact.
    """

    def __init__(self, segments: Sequence[Segment]):
        segs = list(segments)
        if not segs:
            raise ValueError("history needs at least one segment")
        if segs[0].t0 != DOMAIN[0] or segs[-1].t1 != DOMAIN[1]:
            raise ValueError("segments must tile [-2, 0] exactly")
        for s in segs:
            if not s.t1 > s.t0:
                raise ValueError("segment endpoints must increase")
            if s.kind not in ("const", "linear", "samples"):
                raise ValueError(f"unknown segment kind {s.kind!r}")
            if s.kind == "samples":
                ts, vs = s.params
                ts = np.asarray(ts, dtype=float)
                if ts[0] != s.t0 or ts[-1] != s.t1 or np.any(np.diff(ts) <= 0):
                    raise ValueError("sample times must span the segment strictly increasing")
        for a, b in zip(segs, segs[1:]):
            if a.t1 != b.t0:
                raise ValueError("segments must tile without gaps or overlaps")
            if abs(a.value(a.t1) - b.value(b.t0)) > JOINT_TOL:
                raise ValueError(
                    f"discontinuity {abs(a.value(a.t1) - b.value(b.t0)):.3e} at t = {a.t1}"
                )
        self.segments = segs
        self._starts = np.array([s.t0 for s in segs])
        kt, kv = [], []
        for s in segs:
            ts, vs = s.local_knots()
            for tv, vv in zip(ts, vs):
                if kt and tv <= kt[-1]:
                    continue
                kt.append(float(tv))
                kv.append(float(vv))
        self._knot_t = np.array(kt)
        self._knot_v = np.array(kv)

    @staticmethod
    def constant(v: float) -> "HistoryFn":
        return HistoryFn([Segment(DOMAIN[0], DOMAIN[1], "const", (float(v),))])

    @staticmethod
    def from_knots(ts, vs) -> "HistoryFn":
        ts = np.asarray(ts, dtype=float)
        vs = np.asarray(vs, dtype=float)
        return HistoryFn([Segment(ts[0], ts[-1], "samples", (tuple(ts), tuple(vs)))])

    def __call__(self, t: float) -> float:
        if t < DOMAIN[0] - 1e-12 or t > DOMAIN[1] + 1e-12:
            raise ValueError(f"history evaluated outside [-2, 0]: {t}")
        t = min(max(t, DOMAIN[0]), DOMAIN[1])
        i = int(np.clip(np.searchsorted(self._starts, t, side="right") - 1, 0, len(self.segments) - 1))
        return self.segments[i].value(t)

    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact piecewise-linear form (times, values)."""
        return self._knot_t, self._knot_v

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self._knot_v)))

    def at_zero(self) -> float:
        return float(self._knot_v[-1])

    def to_text(self) -> str:
        lines = []
        for s in self.segments:
            if s.kind == "const":
                lines.append(f"const {s.t0:.17g} {s.t1:.17g} {s.params[0]:.17g}")
            elif s.kind == "linear":
                lines.append(
                    f"linear {s.t0:.17g} {s.t1:.17g} {s.params[0]:.17g} {s.params[1]:.17g}"
                )
            else:
                ts, vs = s.params
                body = " ".join(f"{tv:.17g} {vv:.17g}" for tv, vv in zip(ts, vs))
                lines.append(f"samples {s.t0:.17g} {s.t1:.17g} {len(ts)} {body}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "HistoryFn":
        segs = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            kind, t0, t1 = parts[0], float(parts[1]), float(parts[2])
            if kind == "const":
                segs.append(Segment(t0, t1, "const", (float(parts[3]),)))
            elif kind == "linear":
                segs.append(Segment(t0, t1, "linear", (float(parts[3]), float(parts[4]))))
            elif kind == "samples":
                n = int(parts[3])
                vals = [float(p) for p in parts[4 : 4 + 2 * n]]
                ts = tuple(vals[0::2])
                vs = tuple(vals[1::2])
                segs.append(Segment(t0, t1, "samples", (ts, vs)))
            else:
                raise ValueError(f"unknown segment kind {kind!r}")
        return cls(segs)


@dataclass(frozen=True)
class Params:
    """Time-scale constant c > 0; delays are fixed at (1, 2) seconds."""

    c: float = 1.0
    delays: tuple[float, float] = DELAYS

    def __post_init__(self):
        if not (self.c > 0.0 and math.isfinite(self.c)):
            raise ValueError("c must be positive and finite")
        if self.delays != DELAYS:
            raise ValueError("delays are fixed at (1, 2)")


class InitialState:
    """Full initial history X0 = (x0, z10, z20) with x0 R^2-valued."""

    def __init__(self, x0: tuple[HistoryFn, HistoryFn], z10: HistoryFn, z20: HistoryFn):
        self.x0 = tuple(x0)
        self.z10 = z10
        self.z20 = z20
        if len(self.x0) != 2:
            raise ValueError("x0 must hold two scalar histories")

    FILES = ("x0_1.hist", "x0_2.hist", "z10.hist", "z20.hist")

    @staticmethod
    def zero() -> "InitialState":
        z = HistoryFn.constant(0.0)
        return InitialState((z, z), z, z)

    def channels(self) -> tuple[HistoryFn, ...]:
        return (self.x0[0], self.x0[1], self.z10, self.z20)

    def sup_norm(self) -> float:
        """sup over [-2, 0] of the Euclidean norm of the stacked 4-vector.

        Exact: every channel is piecewise linear, so |X(t)|^2 is a convex
        quadratic between merged knots and attains its max at a knot.
        """
        ts = np.unique(np.concatenate([ch.knots()[0] for ch in self.channels()]))
        vals = np.array([[ch(t) for ch in self.channels()] for t in ts])
        return float(np.max(np.sqrt(np.sum(vals * vals, axis=1))))

    def state_at(self, t: float) -> np.ndarray:
        return np.array([ch(t) for ch in self.channels()])

    def save(self, out_dir) -> None:
        import pathlib

        d = pathlib.Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for name, ch in zip(self.FILES, self.channels()):
            (d / name).write_text(ch.to_text())

    @classmethod
    def load(cls, in_dir) -> "InitialState":
        import pathlib

        d = pathlib.Path(in_dir)
        chans = [HistoryFn.from_text((d / name).read_text()) for name in cls.FILES]
        return cls((chans[0], chans[1]), chans[2], chans[3])


def z_eval(z0: HistoryFn, t: float) -> float:
    """Closed-form channel value: history for t <= 0, z0(0) e^{-t} for t > 0."""
    if t < DOMAIN[0]:
        raise ValueError(f"z channel evaluated before -2: {t}")
    if t <= 0.0:
        return z0(t)
    return z0.at_zero() * math.exp(-t)


class ChannelSignal:
    """Scalar time signal: piecewise-linear knots plus a tail.

    Tail kinds: ("exp", amp, t_from) for amp * e^{-(t - t_from)} past the
    last knot, or ("hold", v) for a constant continuation.  Before the first
    knot the first value holds.  These signals drive the planar kernel;
    saturation to [0, 1] happens inside the kernel.
    """

    def __init__(self, knot_t, knot_v, tail):
        self.knot_t = np.asarray(knot_t, dtype=float)
        self.knot_v = np.asarray(knot_v, dtype=float)
        if self.knot_t.size != self.knot_v.size or self.knot_t.size < 1:
            raise ValueError("need matching non-empty knot arrays")
        if np.any(np.diff(self.knot_t) <= 0):
            raise ValueError("knot times must be strictly increasing")
        if tail[0] not in ("exp", "hold"):
            raise ValueError("tail must be ('exp', amp, t_from) or ('hold', v)")
        self.tail = tail

    @staticmethod
    def constant(v: float) -> "ChannelSignal":
        return ChannelSignal([0.0], [v], ("hold", float(v)))

    @classmethod
    def from_history(cls, z0: HistoryFn, delay: float) -> "ChannelSignal":
        """Raw delayed channel t -> z(t - delay) for t >= 0."""
        ts, vs = z0.knots()
        ts = ts + delay
        idx = int(np.searchsorted(ts, 0.0, side="left"))
        if idx >= ts.size or ts[idx] > 0.0:
            t_cut = np.concatenate([[0.0], ts[idx:]])
            v_cut = np.concatenate([[z0(-delay)], vs[idx:]])
        else:
            t_cut, v_cut = ts[idx:], vs[idx:]
        return cls(t_cut, v_cut, ("exp", z0.at_zero(), float(delay)))

    def value(self, t: float) -> float:
        kt, kv = self.knot_t, self.knot_v
        if t <= kt[0]:
            return float(kv[0])
        if t >= kt[-1]:
            if self.tail[0] == "hold":
                return float(self.tail[1])
            amp, t_from = self.tail[1], self.tail[2]
            return amp * math.exp(-(t - t_from))
        return float(np.interp(t, kt, kv))

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        """Knot times plus saturation-level crossings inside (t0, t1)."""
        out = []
        for tv in self.knot_t:
            if t0 < tv < t1:
                out.append(float(tv))
        kt, kv = self.knot_t, self.knot_v
        for i in range(kt.size - 1):
            dv = kv[i + 1] - kv[i]
            if dv == 0.0:
                continue
            for level in (0.0, 1.0):
                if (kv[i] - level) * (kv[i + 1] - level) < 0.0:
                    tc = kt[i] + (level - kv[i]) * (kt[i + 1] - kt[i]) / dv
                    if t0 < tc < t1:
                        out.append(float(tc))
        if self.tail[0] == "exp" and self.tail[1] > 1.0:
            tc = self.tail[2] + math.log(self.tail[1])
            if t0 < tc < t1 and tc > self.knot_t[-1]:
                out.append(float(tc))
        return out

    def shifted(self, ds: float) -> "ChannelSignal":
        """Signal v with v(t) = self(t + ds)."""
        tail = self.tail
        if tail[0] == "exp":
            tail = ("exp", tail[1], tail[2] - ds)
        return ChannelSignal(self.knot_t - ds, self.knot_v, tail)

    def piece_params(self, t: float) -> tuple[int, float, float]:
        """(form, p0, p1) of the single piece active just after time t.

        form 0: p0 + p1*tau, form 1: p0*e^{-tau}, with tau local to t.
        """
        kt, kv = self.knot_t, self.knot_v
        if t >= kt[-1]:
            if self.tail[0] == "hold":
                return (0, float(self.tail[1]), 0.0)
            amp, t_from = self.tail[1], self.tail[2]
            return (1, amp * math.exp(-(t - t_from)), 0.0)
        if t < kt[0]:
            return (0, float(kv[0]), 0.0)
        i = int(np.clip(np.searchsorted(kt, t, side="right") - 1, 0, kt.size - 2))
        slope = (kv[i + 1] - kv[i]) / (kt[i + 1] - kt[i])
        return (0, float(kv[i] + slope * (t - kt[i])), float(slope))


@dataclass
class RunStats:
    steps: int = 0
    forced_accepts: int = 0
    segments: int = 0


def _drive_pieces(c, pieces, x0, ctrl: StepControl, cap: float, t_start: float):
    """Run the planar kernel over explicit signal pieces.

    pieces: iterable of (length, form_a, pa0, pa1, form_b, pb0, pb1); each
    is integrated in local time so sub-ulp dwell durations stay exact.
    Returns (DenseTrajectory, hit_time_or_None, RunStats).
    """
    x0 = np.asarray(x0, dtype=float)
    nbuf = 16384
    buf = [np.empty(nbuf) for _ in range(5)]
    ts: list[np.ndarray] = []
    xs: list[np.ndarray] = []
    fs: list[np.ndarray] = []
    stats = RunStats()
    t_hi, t_err = t_start, 0.0  # compensated base: true base = t_hi + t_err
    if not pieces:
        raise ValueError("no signal pieces to integrate")
    first = pieces[0]
    f0 = _kernels.planar_field(c, first[1], first[2], first[3], first[4], first[5], first[6], 0.0, x0[0], x0[1])
    ts.append(np.array([t_start]))
    xs.append(np.array([[x0[0], x0[1]]]))
    fs.append(np.array([[f0[0], f0[1]]]))
    xcur0, xcur1 = float(x0[0]), float(x0[1])
    h_carry = ctrl.h_init
    steps_left = ctrl.max_steps
    capped = False
    for L, fa, pa0, pa1, fb, pb0, pb1 in pieces:
        if L <= 0.0:
            continue
        while True:
            status, n, h_next, forced, used = _kernels.drive_segment(
                c, fa, pa0, pa1, fb, pb0, pb1,
                xcur0, xcur1, L,
                ctrl.rel_tol, ctrl.abs_tol,
                h_carry, ctrl.h_min, ctrl.h_max,
                steps_left, cap,
                buf[0], buf[1], buf[2], buf[3], buf[4],
            )
            if status != _kernels.SEG_BUFFER_FULL:
                break
            nbuf *= 2
            buf = [np.empty(nbuf) for _ in range(5)]
        stats.steps += used
        stats.forced_accepts += forced
        stats.segments += 1
        steps_left -= used
        if n > 0:
            ts.append(t_hi + (buf[0][:n] + t_err))
            xs.append(np.stack([buf[1][:n], buf[2][:n]], axis=1).copy())
            fs.append(np.stack([buf[3][:n], buf[4][:n]], axis=1).copy())
            xcur0, xcur1 = float(buf[1][n - 1]), float(buf[2][n - 1])
        h_carry = h_next
        if status == _kernels.SEG_UNDERFLOW:
            raise StepUnderflowError(
                "step size underflow (stiffness or finite escape)",
                float(ts[-1][-1]), math.hypot(xcur0, xcur1),
            )
        if status == _kernels.SEG_MAXSTEPS or steps_left <= 0:
            raise BudgetExceededError("max_steps exceeded", float(ts[-1][-1]), math.hypot(xcur0, xcur1))
        if status == _kernels.SEG_CAP:
            capped = True
            break
        # advance the compensated base by the true segment duration
        y = L + t_err
        t_new = t_hi + y
        t_err = y - (t_new - t_hi)
        t_hi = t_new
    traj = DenseTrajectory(np.concatenate(ts), np.concatenate(xs), np.concatenate(fs))
    hit = traj.first_norm_crossing(cap) if capped else None
    return traj, hit, stats


def _merged_pieces(sig_a: ChannelSignal, sig_b: ChannelSignal, t0: float, t1: float):
    bps = {t0, t1}
    bps.update(sig_a.breakpoints(t0, t1))
    bps.update(sig_b.breakpoints(t0, t1))
    grid = sorted(bps)
    pieces = []
    for a, b in zip(grid, grid[1:]):
        if b <= a:
            continue
        fa, pa0, pa1 = sig_a.piece_params(a)
        fb, pb0, pb1 = sig_b.piece_params(a)
        pieces.append((b - a, fa, pa0, pa1, fb, pb0, pb1))
    return pieces


@dataclass
class SolutionBundle:
    """Solution of the full system with the state evaluable on [-2, horizon]."""

    init: InitialState
    params: Params
    horizon: float
    x: DenseTrajectory
    z_traj: Optional[DenseTrajectory] = None  # integrated z-channels (oracle path)
    stats: RunStats = field(default_factory=RunStats)

    def state(self, t: float) -> np.ndarray:
        if t <= 0.0:
            return self.init.state_at(t)
        xv = self.x(t)
        if self.z_traj is not None:
            zv = self.z_traj(t)
            return np.array([xv[0], xv[1], zv[0], zv[1]])
        return np.array(
            [xv[0], xv[1], z_eval(self.init.z10, t), z_eval(self.init.z20, t)]
        )

    def states(self, ts) -> np.ndarray:
        return np.array([self.state(float(t)) for t in np.atleast_1d(ts)])

    def norm(self, t: float) -> float:
        return float(np.linalg.norm(self.state(t)))

    def norms(self, ts) -> np.ndarray:
        vals = self.states(ts)
        return np.sqrt(np.sum(vals * vals, axis=1))


def simulate(
    X0: InitialState,
    p: Params,
    T: float,
    ctrl: StepControl = StepControl(),
    cap: float = 1e15,
) -> SolutionBundle:
    """Cascade-exact simulation: closed-form z-channels drive the planar x.

    The z-channels enter as time signals (phi applied inside the kernel);
    x is integrated segment-by-segment between signal breakpoints.
    """
    if T <= 0.0:
        raise ValueError("horizon must be positive")
    sig_b = ChannelSignal.from_history(X0.z10, DELAYS[0])
    sig_a = ChannelSignal.from_history(X0.z20, DELAYS[1])
    pieces = _merged_pieces(sig_a, sig_b, 0.0, T)
    x_start = np.array([X0.x0[0](0.0), X0.x0[1](0.0)])
    traj, hit, stats = _drive_pieces(p.c, pieces, x_start, ctrl, cap, 0.0)
    if hit is not None:
        raise StepUnderflowError(
            "norm cap exceeded during simulate", hit, float(traj.norms(traj.t_end)[0])
        )
    return SolutionBundle(init=X0, params=p, horizon=T, x=traj, stats=stats)


def simulate_dde(
    X0: InitialState,
    p: Params,
    T: float,
    ctrl: StepControl = StepControl(),
) -> SolutionBundle:
    """Independent oracle: method-of-steps on the full 4-dimensional system."""
    from .integrate import dde_integrate

    if T <= 0.0:
        raise ValueError("horizon must be positive")
    c = p.c

    def rhs(t, y, hist):
        z1_lag = hist(t - DELAYS[0])[2]
        z2_lag = hist(t - DELAYS[1])[3]
        p2 = phi(z2_lag)
        gx = g(y[:2], z1_lag)
        a0x = np.array([A0.a11 * y[0] + A0.a12 * y[1], A0.a21 * y[0] + A0.a22 * y[1]])
        dx = c * (p2 * gx + (1.0 - p2) * a0x)
        return np.array([dx[0], dx[1], -y[2], -y[3]])

    init = [X0.x0[0], X0.x0[1], X0.z10, X0.z20]
    traj4 = dde_integrate(rhs, DELAYS, init, T, ctrl)
    x_traj = DenseTrajectory(traj4.t, traj4.y[:, :2], traj4.f[:, :2])
    z_traj = DenseTrajectory(traj4.t, traj4.y[:, 2:], traj4.f[:, 2:])
    return SolutionBundle(init=X0, params=p, horizon=T, x=x_traj, z_traj=z_traj)


def w_simulate(
    w0,
    u,
    c: float,
    t0: float,
    t1: float,
    ctrl: StepControl = StepControl(),
    cap: float = 1e12,
) -> tuple[DenseTrajectory, Optional[float]]:
    """Integrate the input-driven planar system w' = c(1+|w|^2)(uA1+(1-u)A0)w.

    `u` may be a constant, a ChannelSignal, an object exposing
    pieces(t0, t1) (switching signals), or a plain callable (generic path).
    Forward runs use the kernel with norm-cap event detection; backward runs
    (t1 < t0) use the generic integrator.
    """
    if cap <= 0.0:
        raise ValueError("cap must be positive")
    if t1 == t0:
        raise ValueError("t1 must differ from t0")
    w0 = np.asarray(w0, dtype=float)

    if t1 < t0:
        if isinstance(u, (int, float)):
            uval = lambda t: float(u)
        elif hasattr(u, "value"):
            uval = u.value
        else:
            uval = u
        rhs = lambda t, w: _w_rhs(c, uval(t), w)
        return integrate(rhs, t0, t1, w0, ctrl), None

    if isinstance(u, (int, float)):
        pieces = [(t1 - t0, 0, 1.0, 0.0, 0, float(u), 0.0)]
    elif hasattr(u, "pieces"):
        pieces = [
            (L, 0, 1.0, 0.0, fb, pb0, pb1) for (L, fb, pb0, pb1) in u.pieces(t0, t1)
        ]
    elif isinstance(u, ChannelSignal):
        pieces = _merged_pieces(ChannelSignal.constant(1.0), u, t0, t1)
    elif callable(u):
        rhs = lambda t, w: _w_rhs(c, u(t), w)
        from .integrate import EventSpec, integrate_until

        return integrate_until(rhs, t0, w0, EventSpec(cap), t1, ctrl)
    else:
        raise TypeError(f"unsupported input signal type {type(u)!r}")
    traj, hit, _stats = _drive_pieces(c, pieces, w0, ctrl, cap, t0)
    return traj, hit


def _w_rhs(c, uval, w):
    p = phi(uval)
    q = 1.0 + w[0] * w[0] + w[1] * w[1]
    m11 = p * A1.a11 + (1.0 - p) * A0.a11
    m12 = p * A1.a12 + (1.0 - p) * A0.a12
    m21 = p * A1.a21 + (1.0 - p) * A0.a21
    m22 = p * A1.a22 + (1.0 - p) * A0.a22
    return c * q * np.array([m11 * w[0] + m12 * w[1], m21 * w[0] + m22 * w[1]])
