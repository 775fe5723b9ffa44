"""Adaptive explicit Runge-Kutta 5(4) integration with dense output.

Dormand-Prince pair, cubic Hermite dense output on accepted steps, upward
norm-threshold event detection, backward-time integration, and a
method-of-steps driver for delay systems.  This is the generic (callable
right-hand side) path; the specialised planar kernels live in _kernels.py.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

# Dormand-Prince 5(4) tableau.
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
DP_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


class IntegrationError(RuntimeError):
    """Base error carrying the last reached time and state norm."""

    def __init__(self, msg: str, t_last: float, norm_last: float):
        super().__init__(f"{msg} (t = {t_last:.17g}, |y| = {norm_last:.6e})")
        self.t_last = t_last
        self.norm_last = norm_last


class StepUnderflowError(IntegrationError):
    """Step size collapsed below the representable/requested floor."""


class BudgetExceededError(IntegrationError):
    """max_steps exhausted before reaching the target time."""


@dataclass(frozen=True)
class StepControl:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    h_init: float = 0.0  # 0 -> automatic
    h_min: float = 1e-300
    h_max: float = math.inf
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.h_min <= self.h_max:
            raise ValueError("require 0 < h_min <= h_max")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True)
class EventSpec:
    """Upward crossing of the state Euclidean norm through `threshold`."""

    threshold: float
    direction: str = "up"

    def __post_init__(self):
        if self.threshold <= 0.0:
            raise ValueError("threshold must be positive")
        if self.direction != "up":
            raise ValueError("only upward norm crossings are supported")


def hermite_eval(t, tk, yk, fk, tk1, yk1, fk1):
    """Cubic Hermite value at t on the step [tk, tk1]."""
    h = tk1 - tk
    if h == 0.0:
        return yk1
    th = (t - tk) / h
    th2 = th * th
    th3 = th2 * th
    h00 = 2.0 * th3 - 3.0 * th2 + 1.0
    h10 = th3 - 2.0 * th2 + th
    h01 = -2.0 * th3 + 3.0 * th2
    h11 = th3 - th2
    return h00 * yk + (h10 * h) * fk + h01 * yk1 + (h11 * h) * fk1


class DenseTrajectory:
    """Accepted-step knots (t, y, f) with cubic Hermite evaluation.

    Knot times are strictly increasing; evaluation is defined on
    [t_start, t_end] and reproduces stored states exactly at knots.
    """

    def __init__(self, t: np.ndarray, y: np.ndarray, f: np.ndarray):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        f = np.asarray(f, dtype=float)
        if t.ndim != 1 or y.shape != (t.size, y.shape[1]) or f.shape != y.shape:
            raise ValueError("inconsistent knot array shapes")
        if t.size < 1:
            raise ValueError("trajectory needs at least one knot")
        # Knots that do not advance time (sub-ulp slivers near blow-up)
        # collapse onto one float; keep the last state at each such time.
        keep = np.empty(t.size, dtype=bool)
        keep[-1] = True
        last = t[-1]
        for i in range(t.size - 2, -1, -1):
            keep[i] = t[i] < last
            if keep[i]:
                last = t[i]
        self.t = np.ascontiguousarray(t[keep])
        self.y = np.ascontiguousarray(y[keep])
        self.f = np.ascontiguousarray(f[keep])

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def dim(self) -> int:
        return self.y.shape[1]

    def __call__(self, tq):
        tq_arr = np.atleast_1d(np.asarray(tq, dtype=float))
        lo, hi = self.t[0], self.t[-1]
        if np.any(tq_arr < lo - 1e-12 * max(1.0, abs(lo))) or np.any(
            tq_arr > hi + 1e-12 * max(1.0, abs(hi))
        ):
            raise ValueError("evaluation time outside trajectory domain")
        idx = np.clip(np.searchsorted(self.t, tq_arr, side="right") - 1, 0, self.t.size - 2)
        if self.t.size == 1:
            out = np.repeat(self.y, tq_arr.size, axis=0)
        else:
            out = np.empty((tq_arr.size, self.dim))
            for j, (tv, k) in enumerate(zip(tq_arr, idx)):
                out[j] = hermite_eval(
                    tv, self.t[k], self.y[k], self.f[k], self.t[k + 1], self.y[k + 1], self.f[k + 1]
                )
        if np.ndim(tq) == 0:
            return out[0]
        return out

    def norms(self, tq) -> np.ndarray:
        vals = self(np.atleast_1d(tq))
        return np.sqrt(np.sum(vals * vals, axis=1))

    def first_norm_crossing(self, threshold: float, rel_tol: float = 1e-10) -> Optional[float]:
        """First upward crossing time of |y(t)| through threshold, or None."""
        n = np.sqrt(np.sum(self.y * self.y, axis=1))
        if n[0] >= threshold:
            return self.t_start
        above = np.nonzero(n >= threshold)[0]
        if above.size == 0:
            return None
        k = int(above[0])
        a, b = self.t[k - 1], self.t[k]
        while (b - a) > rel_tol * max(abs(a), abs(b), 1e-30):
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            v = hermite_eval(
                mid, self.t[k - 1], self.y[k - 1], self.f[k - 1], self.t[k], self.y[k], self.f[k]
            )
            if float(np.linalg.norm(v)) >= threshold:
                b = mid
            else:
                a = mid
        return b


def _error_norm(err, y_old, y_new, ctrl):
    scale = ctrl.abs_tol + ctrl.rel_tol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))

def _initial_step(f, t0, y0, f0, span, ctrl):
    if ctrl.h_init > 0.0:
        return min(ctrl.h_init, span, ctrl.h_max)
    scale = ctrl.abs_tol + ctrl.rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, span, ctrl.h_max)


def _step(f, t, y, fy, h):
    """One Dormand-Prince step; returns (y_new, f_new, err_vec)."""
    k = [fy]
    for i in range(1, 7):
        yi = y + h * (DP_A[i] @ np.array(k[:i]))
        k.append(np.asarray(f(t + DP_C[i] * h, yi), dtype=float))
    karr = np.array(k)
    y_new = y + h * (DP_B @ karr)
    err = h * (DP_E @ karr)
    return y_new, k[6], err


def _drive(f, t0, t1, y0, ctrl, event=None):
    """Forward adaptive loop on [t0, t1] (t1 > t0).

    Returns (knot lists, hit time or None).  Knots include (t0, y0, f0).
    """
    y = np.asarray(y0, dtype=float).copy()
    t = t0
    fy = np.asarray(f(t, y), dtype=float)
    if fy.shape != y.shape:
        raise ValueError("rhs returned wrong shape")
    ts, ys, fs = [t], [y.copy()], [fy.copy()]
    hit = None
    if event is not None and float(np.linalg.norm(y)) >= event.threshold:
        return (ts, ys, fs), t0
    h = _initial_step(f, t0, y, fy, t1 - t0, ctrl)
    steps = 0
    while t < t1:
        if steps >= ctrl.max_steps:
            raise BudgetExceededError("max_steps exceeded", t, float(np.linalg.norm(y)))
        if h < ctrl.h_min:
            raise StepUnderflowError(
                "step size underflow (stiffness or finite escape)", t, float(np.linalg.norm(y))
            )
        rem = t1 - t
        at_end = h >= rem
        if at_end:
            h = rem
        if h > ctrl.h_max:
            h = ctrl.h_max
            at_end = False
        # Steps at the time-representability floor are accepted regardless of
        # the error estimate; otherwise nothing can advance.
        floor = 4.0 * np.spacing(max(abs(t), abs(t1)))
        forced = h <= floor or at_end
        y_new, f_new, err = _step(f, t, y, fy, h)
        steps += 1
        if not np.all(np.isfinite(y_new)):
            raise StepUnderflowError("non-finite state", t, float(np.linalg.norm(y)))
        enorm = _error_norm(err, y, y_new, ctrl)
        if enorm <= 1.0 or (forced and h <= floor):
            t = t1 if at_end else t + h
            y, fy = y_new, f_new
            ts.append(t)
            ys.append(y.copy())
            fs.append(fy.copy())
            if event is not None and float(np.linalg.norm(y)) >= event.threshold:
                hit = _refine_hit(ts, ys, fs, event.threshold)
                break
            fac = MAX_FACTOR if enorm == 0.0 else min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * enorm ** -0.2))
            h *= fac
        else:
            h *= max(MIN_FACTOR, SAFETY * enorm ** -0.2)
            if h < floor:
                h = floor
    return (ts, ys, fs), hit


def _refine_hit(ts, ys, fs, threshold, rel_tol=1e-10):
    a, b = ts[-2], ts[-1]
    ya, fa, yb, fb = ys[-2], fs[-2], ys[-1], fs[-1]
    while (b - a) > rel_tol * max(abs(a), abs(b), 1e-30):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        v = hermite_eval(mid, ts[-2], ya, fa, ts[-1], yb, fb)
        if float(np.linalg.norm(v)) >= threshold:
            b = mid
        else:
            a = mid
    return b


def integrate(f: Callable, t0: float, t1: float, x0, ctrl: StepControl = StepControl()) -> DenseTrajectory:
    """Integrate y' = f(t, y) from t0 to t1 (t1 < t0 integrates backward).

    The returned trajectory has increasing knot times regardless of
    direction.
    """
    if t1 == t0:
        raise ValueError("t1 must differ from t0")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if t1 > t0:
        (ts, ys, fs), _ = _drive(f, t0, t1, x0, ctrl)
        return DenseTrajectory(np.array(ts), np.array(ys), np.array(fs))
    # Backward: integrate Y(s) = y(t0 - s) forward in s.
    g = lambda s, Y: -np.asarray(f(t0 - s, Y), dtype=float)
    (ss, ys, gs), _ = _drive(g, 0.0, t0 - t1, x0, ctrl)
    ts = [t0 - s for s in ss]
    fs = [-gv for gv in gs]
    return DenseTrajectory(np.array(ts[::-1]), np.array(ys[::-1]), np.array(fs[::-1]))


def integrate_until(
    f: Callable,
    t0: float,
    x0,
    event: EventSpec,
    t_max: float,
    ctrl: StepControl = StepControl(),
) -> tuple[DenseTrajectory, Optional[float]]:
    """Integrate forward until the norm crosses event.threshold or t_max."""
    if t_max <= t0:
        raise ValueError("t_max must exceed t0")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    try:
        (ts, ys, fs), hit = _drive(f, t0, t_max, x0, ctrl, event=event)
    except StepUnderflowError as exc:
        raise StepUnderflowError(
            "probable finite escape before threshold", exc.t_last, exc.norm_last
        ) from exc
    return DenseTrajectory(np.array(ts), np.array(ys), np.array(fs)), hit


def dde_integrate(
    rhs: Callable,
    delays: Sequence[float],
    init: Sequence[Callable[[float], float]],
    horizon: float,
    ctrl: StepControl = StepControl(),
) -> DenseTrajectory:
    """Method-of-steps integration of x'(t) = rhs(t, x, hist) on [0, horizon].

    `hist(s)` resolves the full state vector at any s in [-max(delays), t]:
    from `init` (one scalar function per component) for s <= 0 and from the
    already-committed dense output for s > 0.  Integration windows have
    length min(delays), so delayed lookups never read ahead of committed
    output.
    """
    delays = [float(d) for d in delays]
    if not delays or any(d <= 0.0 for d in delays):
        raise ValueError("delays must be positive")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    tau_min = min(delays)
    tau_max = max(delays)
    dim = len(init)

    ts: list[float] = []
    ys: list[np.ndarray] = []
    fs: list[np.ndarray] = []
    committed_end = 0.0

    knot_t = np.empty(0)
    knot_y = np.empty((0, dim))
    knot_f = np.empty((0, dim))

    def hist(s: float) -> np.ndarray:
        if s < -tau_max - 1e-9:
            raise ValueError(f"history lookup at {s} precedes -max(delays)")
        if s <= 0.0:
            return np.array([fn(max(s, -tau_max)) for fn in init], dtype=float)
        if s > committed_end + 1e-9:
            raise ValueError(f"history lookup at {s} reads ahead of committed output")
        sc = min(s, committed_end)
        k = int(np.clip(np.searchsorted(knot_t, sc, side="right") - 1, 0, knot_t.size - 2))
        return hermite_eval(
            sc, knot_t[k], knot_y[k], knot_f[k], knot_t[k + 1], knot_y[k + 1], knot_f[k + 1]
        )

    y = np.array([fn(0.0) for fn in init], dtype=float)
    t = 0.0
    while t < horizon:
        t_next = min(t + tau_min, horizon)
        f_win = lambda tt, yy: np.asarray(rhs(tt, yy, hist), dtype=float)
        (wts, wys, wfs), _ = _drive(f_win, t, t_next, y, ctrl)
        start = 1 if ts else 0  # avoid duplicating the shared window endpoint
        ts.extend(wts[start:])
        ys.extend(wys[start:])
        fs.extend(wfs[start:])
        y = wys[-1]
        t = t_next
        knot_t = np.array(ts)
        knot_y = np.array(ys)
        knot_f = np.array(fs)
        committed_end = t
    return DenseTrajectory(knot_t, knot_y, knot_f)
