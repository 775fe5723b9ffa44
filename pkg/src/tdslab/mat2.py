"""Closed-form 2x2 stability algebra.

Everything here is exact-arithmetic-quality: Hurwitz tests via the trace/det
criterion, Lyapunov solves via a hand-rolled 3x3 Cramer solve, and symmetric
eigenvalue bounds via the half-trace +/- radius formula.  No general
eigensolver is used, which keeps results deterministic and residuals near
machine epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class LyapunovError(ArithmeticError):
    """Lyapunov solve failed (singular system or residual out of tolerance)."""


@dataclass(frozen=True)
class Mat2:
    """Real 2x2 matrix."""

    a11: float
    a12: float
    a21: float
    a22: float

    def __post_init__(self):
        for v in (self.a11, self.a12, self.a21, self.a22):
            if not math.isfinite(v):
                raise ValueError(f"non-finite matrix entry: {v!r}")

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def sym(self) -> "SymMat2":
        """Symmetric part (A + A^T) / 2."""
        return SymMat2(self.a11, 0.5 * (self.a12 + self.a21), self.a22)

    def apply(self, x0: float, x1: float) -> tuple[float, float]:
        return (self.a11 * x0 + self.a12 * x1, self.a21 * x0 + self.a22 * x1)


@dataclass(frozen=True)
class SymMat2:
    """Symmetric 2x2 matrix stored as (p11, p12, p22)."""

    p11: float
    p12: float
    p22: float

    def __post_init__(self):
        for v in (self.p11, self.p12, self.p22):
            if not math.isfinite(v):
                raise ValueError(f"non-finite matrix entry: {v!r}")

    @property
    def det(self) -> float:
        return self.p11 * self.p22 - self.p12 * self.p12

    def is_positive_definite(self) -> bool:
        return self.p11 > 0.0 and self.det > 0.0

    def quad(self, x0: float, x1: float) -> float:
        """Quadratic form x^T S x."""
        return self.p11 * x0 * x0 + 2.0 * self.p12 * x0 * x1 + self.p22 * x1 * x1


# The two modes of the switched planar system.
A0 = Mat2(-0.1, 0.5, -2.0, 0.0)
A1 = Mat2(0.0, 2.0, -0.5, -0.1)

IDENTITY = SymMat2(1.0, 0.0, 1.0)


def hurwitz(a: Mat2) -> bool:
    """Exact 2x2 Hurwitz criterion: trace < 0 and det > 0."""
    return a.trace < 0.0 and a.det > 0.0


def a_lambda(lam: float) -> Mat2:
    """Convex combination lam * A1 + (1 - lam) * A0."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam!r}")
    w = 1.0 - lam
    return Mat2(
        lam * A1.a11 + w * A0.a11,
        lam * A1.a12 + w * A0.a12,
        lam * A1.a21 + w * A0.a21,
        lam * A1.a22 + w * A0.a22,
    )


def lyapunov_form(a: Mat2, p: SymMat2) -> SymMat2:
    """A^T P + P A (symmetric for symmetric P)."""
    return SymMat2(
        2.0 * (a.a11 * p.p11 + a.a21 * p.p12),
        a.a12 * p.p11 + (a.a11 + a.a22) * p.p12 + a.a21 * p.p22,
        2.0 * (a.a12 * p.p12 + a.a22 * p.p22),
    )


def lyapunov_solve(a: Mat2, q: SymMat2, residual_tol: float = 1e-12) -> SymMat2:
    """Solve A^T P + P A = -Q for symmetric positive-definite P.

    The three independent entries (p11, p12, p22) satisfy a 3x3 linear
    system solved here by Cramer's rule.  Requires A Hurwitz and Q positive
    definite; the returned P is verified to satisfy the equation with
    max-norm residual <= residual_tol.
    """
    if not hurwitz(a):
        raise ValueError("A is not Hurwitz: no positive-definite Lyapunov solution")
    if not q.is_positive_definite():
        raise ValueError("Q must be positive definite")

    # Rows: equation entries (1,1), (1,2), (2,2) in unknowns (p11, p12, p22).
    m = (
        (2.0 * a.a11, 2.0 * a.a21, 0.0),
        (a.a12, a.a11 + a.a22, a.a21),
        (0.0, 2.0 * a.a12, 2.0 * a.a22),
    )
    rhs = (-q.p11, -q.p12, -q.p22)

    def det3(c0, c1, c2):
        return (
            c0[0] * (c1[1] * c2[2] - c1[2] * c2[1])
            - c0[1] * (c1[0] * c2[2] - c1[2] * c2[0])
            + c0[2] * (c1[0] * c2[1] - c1[1] * c2[0])
        )

    cols = list(zip(*m))
    d = det3(*cols)
    if d == 0.0 or not math.isfinite(d):
        raise LyapunovError("singular 3x3 Lyapunov system")
    p11 = det3(rhs, cols[1], cols[2]) / d
    p12 = det3(cols[0], rhs, cols[2]) / d
    p22 = det3(cols[0], cols[1], rhs) / d
    p = SymMat2(p11, p12, p22)

    res = lyapunov_form(a, p)
    err = max(abs(res.p11 + q.p11), abs(res.p12 + q.p12), abs(res.p22 + q.p22))
    if err > residual_tol:
        raise LyapunovError(f"Lyapunov residual {err:.3e} exceeds {residual_tol:.1e}")
    if not p.is_positive_definite():
        raise LyapunovError("computed Lyapunov solution is not positive definite")
    return p


def sym_eig_bounds(s: SymMat2) -> tuple[float, float]:
    """Eigenvalues (lambda_min, lambda_max) of a symmetric 2x2 matrix."""
    mid = 0.5 * (s.p11 + s.p22)
    rad = math.hypot(0.5 * (s.p11 - s.p22), s.p12)
    return (mid - rad, mid + rad)


def _margin_ok(lam: float, p0: SymMat2) -> bool:
    # A_lam^T P0 + P0 A_lam + I/2 negative semidefinite?
    s = lyapunov_form(a_lambda(lam), p0)
    shifted = SymMat2(s.p11 + 0.5, s.p12, s.p22 + 0.5)
    return sym_eig_bounds(shifted)[1] <= 0.0


def find_lambda_bar(p0: SymMat2, tol: float = 1e-6) -> float:
    """Largest lambda_bar such that A_lam^T P0 + P0 A_lam <= -I/2 on [0, lambda_bar].

    Bisection on the semidefinite margin, then a grid scan at resolution tol
    guarding against non-monotone violations inside [0, lambda_bar].
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if not _margin_ok(0.0, p0):
        raise ValueError("margin fails at lambda = 0: P0 does not solve the A0 Lyapunov equation")
    if _margin_ok(1.0, p0):
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _margin_ok(mid, p0):
            lo = mid
        else:
            hi = mid
    lam_bar = lo
    # Guard scan: shrink to the first violation if the margin were non-monotone.
    n = int(lam_bar / tol)
    for k in range(1, n + 1):
        g = k * tol
        if g >= lam_bar:
            break
        if not _margin_ok(g, p0):
            lam_bar = g - tol
            break
    return lam_bar
