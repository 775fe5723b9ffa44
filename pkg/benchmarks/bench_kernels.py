"""Benchmark the jitted planar kernels against the pure-numpy fallback.

Runs the same three workloads in this process and in a subprocess with
TDSLAB_DISABLE_NUMBA=1, then prints a timing table.  Usage:

    python benchmarks/bench_kernels.py            # orchestrates both modes
    python benchmarks/bench_kernels.py --mode one # time the current mode only
"""

import argparse
import json
import os
import subprocess
import sys
import time


def workloads():
    from tdslab.construct import ConstructOpts, escape_search, lemma1_construct
    from tdslab.system import HistoryFn, InitialState, Params, simulate
    from tdslab.verify import check_les

    cert = escape_search()  # also warms the JIT before any timing
    opts = ConstructOpts(certificate=cert)

    def bench_w_replay():
        cert.verify_replay()

    def bench_lemma1_m1e6():
        lemma1_construct(1e6, opts)

    def bench_les_sweep():
        check_les(c=1.0, n=25, seed=1)

    def bench_long_horizon():
        z = HistoryFn.from_knots([-2.0, -1.0, 0.0], [0.008, -0.004, 0.006])
        X0 = InitialState((HistoryFn.constant(0.005), HistoryFn.constant(0.0)), z, z)
        simulate(X0, Params(1.0), 2000.0)

    return [
        ("escape replay (cap 1e8)", bench_w_replay),
        ("transient build M=1e6", bench_lemma1_m1e6),
        ("small-ball sweep n=25", bench_les_sweep),
        ("long horizon T=2000", bench_long_horizon),
    ]


def time_current_mode(reps: int) -> dict:
    results = {}
    for name, fn in workloads():
        fn()  # warm (JIT compilation, caches)
        best = float("inf")
        for _ in range(reps):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        results[name] = best
    return results


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", choices=["both", "one"], default="both")
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args()

    if args.mode == "one":
        from tdslab._numba import NUMBA_ENABLED

        res = time_current_mode(args.reps)
        print(json.dumps({"numba": NUMBA_ENABLED, "results": res}))
        return 0

    rows = {}
    for disable in (False, True):
        env = dict(os.environ)
        env["TDSLAB_DISABLE_NUMBA"] = "1" if disable else "0"
        out = subprocess.run(
            [sys.executable, __file__, "--mode", "one", "--reps", str(args.reps)],
            capture_output=True,
            text=True,
            env=env,
            check=True,
        )
        payload = json.loads(out.stdout.strip().splitlines()[-1])
        rows["numpy" if disable else "numba"] = payload["results"]

    names = list(rows["numba"].keys())
    width = max(len(n) for n in names)
    print(f"{'workload':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for n in names:
        a, b = rows["numba"][n], rows["numpy"][n]
        print(f"{n:<{width}}  {a:>9.3f}s  {b:>9.3f}s  {b / a:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
