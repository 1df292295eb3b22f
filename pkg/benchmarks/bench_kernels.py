"""Time the hot kernels with numba and with the pure-NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Each backend runs in its own interpreter because ``LOBFORGE_NUMBA`` is read
at import. Compilation is excluded: every workload runs once before timing.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

WORKLOADS = ("clear", "fast_event", "run_path", "kbe_explore")


def _workloads():
    import numpy as np

    from lobforge import kernels
    from lobforge.experiments import canonical_origin
    from lobforge.flow import build_modelAB
    from lobforge.kbe import ask_increase_solution

    rng = np.random.default_rng(7)
    d = 10
    crossed = [(rng.integers(0, 4, d).astype(np.int64), rng.integers(0, 4, d).astype(np.int64)) for _ in range(2000)]
    origin = canonical_origin(1, 1)
    book_b, book_s = origin.arrays()
    model = build_modelAB("B", 10, guard="wipeout")
    args = model.kernel_args()
    dummy_f = np.zeros(1)
    dummy_i = np.zeros(1, dtype=np.int64)

    def clear():
        for b, s in crossed:
            kernels.clear(b, s)

    def fast_event():
        for i in range(2000):
            kernels.fast_event(book_b.copy(), book_s.copy(), i % 2, 2 + i % 4, 1 + i % 3)

    def run_path():
        for r in range(50):
            kernels.run_path(book_b, book_s, *args, 0.2, kernels.STOP_NONE, 1_000_000, np.random.default_rng([1, r]),
                             dummy_f, dummy_i, dummy_i, dummy_i, dummy_i, dummy_i, False)

    def kbe_explore():
        ask_increase_solution(model, origin, 0.02, 5e-4, 1e-3)

    return {"clear": clear, "fast_event": fast_event, "run_path": run_path, "kbe_explore": kbe_explore}


def _child(repeat: int) -> None:
    from lobforge._accel import backend_name

    out = {"backend": backend_name()}
    for name, fn in _workloads().items():
        fn()  # warm-up / compile
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out[name] = best
    print(json.dumps(out))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write the timings here")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        _child(args.repeat)
        return
    results = {}
    for flag in ("1", "0"):
        env = dict(os.environ, LOBFORGE_NUMBA=flag)
        proc = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat)], env=env,
                              capture_output=True, text=True, check=True)
        res = json.loads(proc.stdout.strip().splitlines()[-1])
        results[res["backend"]] = res
    fast, slow = results.get("numba"), results.get("numpy")
    print(f"{'workload':<12} {'numba [s]':>10} {'numpy [s]':>10} {'speed-up':>9}")
    for name in WORKLOADS:
        a = fast[name] if fast else float("nan")
        b = slow[name] if slow else float("nan")
        print(f"{name:<12} {a:>10.4f} {b:>10.4f} {b / a:>8.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
