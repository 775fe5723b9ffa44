"""Command-line front end.

Subcommands: constants, escape, lemma1, uga, simulate, verify.  Exit codes:
0 all passes, 1 any fail, 2 inconclusive, 3 usage or I/O error.  Reports and
CSV files are written with 17 significant digits so identical configs and
seeds reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import math
import os
import pathlib
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .construct import (
    ConstructOpts,
    ConstructionError,
    EscapeCertificate,
    RampOverlapError,
    SearchError,
    escape_search,
    lemma1_construct,
)
from .integrate import IntegrationError, StepControl
from .system import InitialState, Params, simulate
from .construct import uga_adversary
from .verify import (
    VerificationReport,
    check_brs_violation,
    check_gas,
    check_les,
    check_uga_violation,
    constants,
    cross_check,
    random_initial_state,
)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 3


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):  # usage errors must exit 3, not argparse's 2
        raise UsageError(message)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-14
    dwell_min: float = 0.05
    cap: float = 1e8
    delta0: Optional[float] = None
    seed: int = 2024
    out_dir: str = ""

    def __post_init__(self):
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise UsageError("tolerances must be positive")
        if self.cap < 1e6:
            raise UsageError("cap must be at least 1e6")
        if self.delta0 is not None and self.delta0 <= 0.0:
            raise UsageError("delta0 must be positive")

    @property
    def ctrl(self) -> StepControl:
        return StepControl(rel_tol=self.rel_tol, abs_tol=self.abs_tol)

    def construct_opts(self, certificate: Optional[EscapeCertificate] = None) -> ConstructOpts:
        return ConstructOpts(
            dwell_min=self.dwell_min,
            cap=self.cap,
            delta0=self.delta0,
            ctrl=self.ctrl,
            certificate=certificate,
        )


def _load_config(path: Optional[str], overrides: dict) -> RunConfig:
    values: dict = {}
    if path:
        p = pathlib.Path(path)
        if not p.exists():
            raise UsageError(f"config file not found: {path}")
        for line in p.read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            k, v = (s.strip() for s in line.split("=", 1))
            values[k] = v
    cfg = {}
    casts = {
        "rel_tol": float,
        "abs_tol": float,
        "dwell_min": float,
        "cap": float,
        "delta0": float,
        "seed": int,
        "out_dir": str,
    }
    for k, cast in casts.items():
        if k in values:
            try:
                cfg[k] = cast(values[k])
            except ValueError as exc:
                raise UsageError(f"bad config value for {k}: {values[k]!r}") from exc
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    if not cfg.get("out_dir"):
        cfg["out_dir"] = os.environ.get("TDSLAB_OUT", "out")
    return RunConfig(**cfg)


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _write_csv(path: pathlib.Path, bundle, horizon: float, events=()) -> None:
    """Uniform grid at horizon/1000 spacing plus event times; 17 digits."""
    grid = np.linspace(0.0, horizon, 1001)
    if events:
        grid = np.unique(np.concatenate([grid, np.asarray(list(events))]))
    rows = ["t,x1,x2,z1,z2,norm"]
    for t in grid:
        s = bundle.state(float(t))
        n = math.sqrt(float(s @ s))
        rows.append(
            f"{_fmt(float(t))},{_fmt(s[0])},{_fmt(s[1])},{_fmt(s[2])},{_fmt(s[3])},{_fmt(n)}"
        )
    path.write_text("\n".join(rows) + "\n")


def _write_report(out: pathlib.Path, name: str, rep: VerificationReport) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"report_{name}.txt").write_text(rep.to_text())
    print(f"{rep.claim}: {rep.status}  ({rep.wall_clock_s:.2f}s)  -> report_{name}.txt")


def _write_certificate(out: pathlib.Path, cert: EscapeCertificate) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        f"T_esc = {_fmt(cert.T_esc)}",
        f"c = {_fmt(cert.T_esc)}",
        f"cap = {_fmt(cert.cap)}",
        f"w0 = {_fmt(cert.w0[0])} {_fmt(cert.w0[1])}",
        f"initial_value = {cert.u.initial_value}",
        f"pieces = {cert.u.dwells.size}",
    ]
    (out / "certificate.txt").write_text("\n".join(lines) + "\n")
    (out / "dwells.txt").write_text("".join(_fmt(d) + "\n" for d in cert.u.dwells))
    (out / "growth_log.txt").write_text(
        "".join(f"{_fmt(t)} {_fmt(r)}\n" for t, r in cert.growth_log)
    )


def _cmd_constants(args, cfg: RunConfig) -> int:
    cs = constants(args.c)
    print(f"c = {cs.c!r}")
    print(f"P0 = {cs.p0.p11!r} {cs.p0.p12!r} / {cs.p0.p12!r} {cs.p0.p22!r}")
    print(f"P1 = {cs.p1.p11!r} {cs.p1.p12!r} / {cs.p1.p12!r} {cs.p1.p22!r}")
    print(f"lambda_bar = {cs.lambda_bar!r}")
    print(f"lambda0 = {cs.lambda0!r}")
    print(f"alpha_lo = {cs.alpha_lo!r}")
    print(f"alpha_hi = {cs.alpha_hi!r}")
    print(f"k = {cs.k!r}")
    print(f"mu = {cs.mu!r}")
    return EXIT_PASS


def _cmd_escape(args, cfg: RunConfig) -> int:
    cert = escape_search(dwell_min=cfg.dwell_min, cap=cfg.cap)
    cert.verify_replay(cfg.ctrl)
    out = pathlib.Path(cfg.out_dir) / "escape"
    _write_certificate(out, cert)
    print(f"T_esc = {_fmt(cert.T_esc)} (c = T_esc), pieces = {cert.u.dwells.size}")
    print(f"certificate -> {out}")
    return EXIT_PASS


def _cmd_lemma1(args, cfg: RunConfig) -> int:
    arts = lemma1_construct(args.M, cfg.construct_opts())
    out = pathlib.Path(cfg.out_dir) / f"lemma1_M{args.M:g}"
    arts.save(out)
    X0 = arts.initial_state()
    X0.save(out / "initial_state")
    bundle = simulate(X0, Params(arts.c), 1.0, cfg.ctrl, cap=1e30)
    _write_csv(out / "trajectory.csv", bundle, 1.0)
    if args.plot:
        for name, ch in (("z10", arts.z10), ("z20", X0.z20), ("x0_1", arts.x0[0]), ("x0_2", arts.x0[1])):
            ts, vs = ch.knots()
            (out / f"plot_{name}.dat").write_text(
                "".join(f"{_fmt(t)} {_fmt(v)}\n" for t, v in zip(ts, vs))
            )
    ok = arts.achieved >= 2.0 * args.M
    print(
        f"M = {args.M:g}: c = {_fmt(arts.c)}, tau_M = {_fmt(arts.tau_M)}, "
        f"achieved |x(1)| = {_fmt(arts.achieved)} ({'pass' if ok else 'fail'})"
    )
    print(f"artifacts -> {out}")
    return EXIT_PASS if ok else EXIT_FAIL


def _cmd_uga(args, cfg: RunConfig) -> int:
    out = pathlib.Path(cfg.out_dir) / f"uga_T{args.T:g}"
    rep = check_uga_violation(args.T, cfg.construct_opts(), out_dir=out)
    _write_report(out, f"uga_T{args.T:g}", rep)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _cmd_simulate(args, cfg: RunConfig) -> int:
    init_dir = pathlib.Path(args.init)
    if not init_dir.exists():
        raise UsageError(f"initial state directory not found: {args.init}")
    X0 = InitialState.load(init_dir)
    bundle = simulate(X0, Params(args.c), args.horizon, cfg.ctrl, cap=1e30)
    out = pathlib.Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "simulate.csv"
    _write_csv(path, bundle, args.horizon)
    print(f"CSV -> {path}")
    return EXIT_PASS


def _cmd_verify(args, cfg: RunConfig) -> int:
    out = pathlib.Path(cfg.out_dir)
    reports: list[VerificationReport] = []
    suites = (
        ["les", "gas", "brs", "uga", "cross"] if args.suite == "all" else [args.suite]
    )
    cert: Optional[EscapeCertificate] = None
    if any(s in suites for s in ("gas", "brs", "uga")):
        cert = escape_search(dwell_min=cfg.dwell_min, cap=cfg.cap)

    for suite in suites:
        if suite == "les":
            rep = check_les(c=1.0, n=100, ctrl=cfg.ctrl, seed=cfg.seed, out_dir=out)
            _write_report(out, "les", rep)
            reports.append(rep)
        elif suite == "gas":
            rep = _gas_suite(cfg, cert)
            _write_report(out, "gas", rep)
            reports.append(rep)
        elif suite == "brs":
            for M in (10.0, 1e3, 1e6):
                rep = check_brs_violation(M, cfg.construct_opts(cert), out_dir=out)
                _write_report(out, f"brs_M{M:g}", rep)
                reports.append(rep)
        elif suite == "uga":
            for T in (3.0, 5.0):
                rep = check_uga_violation(T, cfg.construct_opts(cert), out_dir=out)
                _write_report(out, f"uga_T{T:g}", rep)
                reports.append(rep)
        elif suite == "cross":
            rep = _cross_suite(cfg)
            _write_report(out, "cross", rep)
            reports.append(rep)
        else:
            raise UsageError(f"unknown suite {suite!r}")

    if any(r.passed is False for r in reports):
        return EXIT_FAIL
    if any(r.passed is None for r in reports):
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def _gas_suite(cfg: RunConfig, cert: Optional[EscapeCertificate]) -> VerificationReport:
    """Criterion: the T = 3 witness converges below 1e-3, strictly after t = 3."""
    T = 3.0
    X0, _M, _eps, c, _arts = uga_adversary(T, cfg.construct_opts(cert))
    rep = check_gas(X0, c, tol=1e-3, ctrl=cfg.ctrl)
    rep.params["witness_T"] = T
    if rep.passed:
        exceeds = rep.measured["converged_at"] > T
        rep.measured["exceeds_witness_T"] = exceeds
        rep.passed = rep.passed and exceeds
    return rep


def _cross_suite(cfg: RunConfig) -> VerificationReport:
    import time

    t0 = time.perf_counter()
    cs = constants(1.0)
    rng = np.random.default_rng(cfg.seed)
    devs = []
    for _ in range(20):
        X0 = random_initial_state(rng, cs.lambda_bar * (0.1 + 0.9 * rng.random()))
        devs.append(cross_check(X0, 1.0, 5.0))
    max_dev = max(devs)
    return VerificationReport(
        claim="cross_check",
        params={"n": 20, "T": 5.0, "seed": cfg.seed},
        measured={"max_rel_deviation": max_dev},
        passed=max_dev <= 1e-6,
        wall_clock_s=time.perf_counter() - t0,
    )


def _build_parser() -> _Parser:
    parser = _Parser(prog="tdslab", description=__doc__)
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--out-dir", dest="out_dir", help="output directory (env TDSLAB_OUT)")
    parser.add_argument("--rel-tol", dest="rel_tol", type=float)
    parser.add_argument("--abs-tol", dest="abs_tol", type=float)
    parser.add_argument("--dwell-min", dest="dwell_min", type=float)
    parser.add_argument("--cap", type=float)
    parser.add_argument("--delta0", type=float)
    parser.add_argument("--seed", type=int)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="print the derived stability constants")
    p.add_argument("--c", type=float, required=True)

    sub.add_parser("escape", help="search a destabilizing input and calibrate c")

    p = sub.add_parser("lemma1", help="build the arbitrarily-large-transient witness")
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--plot", action="store_true", help="write per-channel plot data")

    p = sub.add_parser("uga", help="build and check the slow-convergence witness")
    p.add_argument("--T", type=float, required=True)

    p = sub.add_parser("simulate", help="simulate a serialized initial state")
    p.add_argument("--init", required=True, help="directory with channel .hist files")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--horizon", type=float, required=True)

    p = sub.add_parser("verify", help="run verification suites")
    p.add_argument("--suite", required=True, choices=["les", "gas", "brs", "uga", "cross", "all"])
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {
            k: getattr(args, k, None)
            for k in ("rel_tol", "abs_tol", "dwell_min", "cap", "delta0", "seed", "out_dir")
        }
        cfg = _load_config(args.config, overrides)
        handler = {
            "constants": _cmd_constants,
            "escape": _cmd_escape,
            "lemma1": _cmd_lemma1,
            "uga": _cmd_uga,
            "simulate": _cmd_simulate,
            "verify": _cmd_verify,
        }[args.command]
        return handler(args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConstructionError, SearchError, RampOverlapError, IntegrationError) as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
