"""Hot inner loops for the planar switched field, numba-compiled.

The field integrated here covers every planar run in the package:

    x' = c * [ a(t) * (1 + |x|^2) * (b(t) A1 + (1 - b(t)) A0) x
               + (1 - a(t)) * A0 x ]

with a and b clamped to [0, 1].  The input-driven system (a == 1, b == u)
and the delay system reduced through its closed-form exponential channels
(a, b from delayed channel signals) are both instances.

Integration is segment-local: the caller splits the time axis at every
signal breakpoint and hands each segment to `drive_segment` in local time
tau in [0, L], where the raw signals are a single affine piece
(form 0: p0 + p1*tau) or an exponential tail (form 1: p0*exp(-tau)).
Local time keeps steps representable even when segments are narrower than
the ulp of the absolute time they sit at (near-escape dwells).

With TDSLAB_DISABLE_NUMBA=1 the same source runs as plain numpy/Python.
"""

import math

from ._numba import njit

# Segment driver status codes.
SEG_OK = 0
SEG_CAP = 1
SEG_UNDERFLOW = 2
SEG_MAXSTEPS = 3
SEG_BUFFER_FULL = 4

# Dormand-Prince 5(4) coefficients (numba reads these as compile-time consts).
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0

EPS = 2.220446049250313e-16


@njit
def clamp01(s):
    if s < 0.0:
        return 0.0
    if s > 1.0:
        return 1.0
    return s


@njit
def signal_raw(form, p0, p1, tau):
    if form == 0:
        return p0 + p1 * tau
    return p0 * math.exp(-tau)


@njit
def planar_field(c, form_a, pa0, pa1, form_b, pb0, pb1, tau, x0, x1):
    a = clamp01(signal_raw(form_a, pa0, pa1, tau))
    b = clamp01(signal_raw(form_b, pb0, pb1, tau))
    # B = b*A1 + (1-b)*A0 with A0 = ((-0.1, 0.5), (-2, 0)), A1 = ((0, 2), (-0.5, -0.1))
    w = 1.0 - b
    m11 = w * -0.1
    m12 = b * 2.0 + w * 0.5
    m21 = b * -0.5 + w * -2.0
    m22 = b * -0.1
    q = 1.0 + x0 * x0 + x1 * x1
    g0 = q * (m11 * x0 + m12 * x1)
    g1 = q * (m21 * x0 + m22 * x1)
    an = 1.0 - a
    d0 = c * (a * g0 + an * (-0.1 * x0 + 0.5 * x1))
    d1 = c * (a * g1 + an * (-2.0 * x0))
    return d0, d1


@njit
def drive_segment(
    c,
    form_a,
    pa0,
    pa1,
    form_b,
    pb0,
    pb1,
    x0,
    x1,
    seg_len,
    rel_tol,
    abs_tol,
    h_start,
    h_min,
    h_max,
    max_steps,
    cap,
    out_tau,
    out_x0,
    out_x1,
    out_f0,
    out_f1,
):
    """Adaptive RK5(4) over one signal segment in local time [0, seg_len].

    Accepted knots (tau, x, f) are appended to the out buffers, excluding
    the initial point.  Steps at the representability floor are accepted
    regardless of the error estimate (the caller sees the count).  Returns
    (status, n_written, h_next, forced_accepts, steps_used).
    """
    tau = 0.0
    n = 0
    cap2 = cap * cap
    forced = 0
    steps = 0
    fx0, fx1 = planar_field(c, form_a, pa0, pa1, form_b, pb0, pb1, tau, x0, x1)
    h = h_start
    if h <= 0.0 or h > seg_len:
        h = seg_len
    if h > h_max:
        h = h_max
    nbuf = out_tau.shape[0]
    while tau < seg_len:
        if steps >= max_steps:
            return SEG_MAXSTEPS, n, h, forced, steps
        if n >= nbuf:
            return SEG_BUFFER_FULL, n, h, forced, steps
        rem = seg_len - tau
        at_end = h >= rem
        if at_end:
            h = rem
        floor = h_min
        sp = 4.0 * EPS * tau
        if sp > floor:
            floor = sp
        forced_step = h <= floor
        k1_0, k1_1 = fx0, fx1
        y0 = x0 + h * (A21 * k1_0)
        y1 = x1 + h * (A21 * k1_1)
        k2_0, k2_1 = planar_field(c, form_a, pa0, pa1, form_b, pb0, pb1, tau + C2 * h, y0, y1)
        y0 = x0 + h * (A31 * k1_0 + A32 * k2_0)
        y1 = x1 + h * (A31 * k1_1 + A32 * k2_1)
        k3_0, k3_1 = planar_field(c, form_a, pa0, pa1, form_b, pb0, pb1, tau + C3 * h, y0, y1)
        y0 = x0 + h * (A41 * k1_0 + A42 * k2_0 + A43 * k3_0)
        y1 = x1 + h * (A41 * k1_1 + A42 * k2_1 + A43 * k3_1)
        k4_0, k4_1 = planar_field(c, form_a, pa0, pa1, form_b, pb0, pb1, tau + C4 * h, y0, y1)
        y0 = x0 + h * (A51 * k1_0 + A52 * k2_0 + A53 * k3_0 + A54 * k4_0)
        y1 = x1 + h * (A51 * k1_1 + A52 * k2_1 + A53 * k3_1 + A54 * k4_1)
        k5_0, k5_1 = planar_field(c, form_a, pa0, pa1, form_b, pb0, pb1, tau + C5 * h, y0, y1)
        y0 = x0 + h * (A61 * k1_0 + A62 * k2_0 + A63 * k3_0 + A64 * k4_0 + A65 * k5_0)
        y1 = x1 + h * (A61 * k1_1 + A62 * k2_1 + A63 * k3_1 + A64 * k4_1 + A65 * k5_1)
        k6_0, k6_1 = planar_field(c, form_a, pa0, pa1, form_b, pb0, pb1, tau + h, y0, y1)
        xn0 = x0 + h * (B1 * k1_0 + B3 * k3_0 + B4 * k4_0 + B5 * k5_0 + B6 * k6_0)
        xn1 = x1 + h * (B1 * k1_1 + B3 * k3_1 + B4 * k4_1 + B5 * k5_1 + B6 * k6_1)
        k7_0, k7_1 = planar_field(c, form_a, pa0, pa1, form_b, pb0, pb1, tau + h, xn0, xn1)
        e0 = h * (E1 * k1_0 + E3 * k3_0 + E4 * k4_0 + E5 * k5_0 + E6 * k6_0 + E7 * k7_0)
        e1 = h * (E1 * k1_1 + E3 * k3_1 + E4 * k4_1 + E5 * k5_1 + E6 * k6_1 + E7 * k7_1)
        steps += 1
        if not (math.isfinite(xn0) and math.isfinite(xn1)):
            return SEG_UNDERFLOW, n, h, forced, steps
        s0 = abs_tol + rel_tol * max(abs(x0), abs(xn0))
        s1 = abs_tol + rel_tol * max(abs(x1), abs(xn1))
        r0 = e0 / s0
        r1 = e1 / s1
        enorm = math.sqrt(0.5 * (r0 * r0 + r1 * r1))
        if enorm <= 1.0 or forced_step:
            if forced_step and enorm > 1.0:
                forced += 1
            tau = seg_len if at_end else tau + h
            x0, x1 = xn0, xn1
            fx0, fx1 = k7_0, k7_1
            out_tau[n] = tau
            out_x0[n] = x0
            out_x1[n] = x1
            out_f0[n] = fx0
            out_f1[n] = fx1
            n += 1
            if x0 * x0 + x1 * x1 >= cap2:
                return SEG_CAP, n, h, forced, steps
            if enorm == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * enorm ** -0.2
                if fac > 5.0:
                    fac = 5.0
                elif fac < 0.2:
                    fac = 0.2
            h *= fac
            if h > h_max:
                h = h_max
        else:
            fac = 0.9 * enorm ** -0.2
            if fac < 0.2:
                fac = 0.2
            h *= fac
            if h < floor:
                h = floor
    return SEG_OK, n, h, forced, steps
