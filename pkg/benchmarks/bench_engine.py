"""Compiled kernels versus the pure-Python fallback on the same workload.

    python3 benchmarks/bench_engine.py [--steps 1000] [--repeat 3]

The fallback runs in a child process with ABFSIM_DISABLE_NUMBA=1; both sides
report a checksum of the final state so the comparison doubles as a
consistency check.
"""
import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

from abfsim import _accel, generators
from abfsim.engine import NoiseSpec, run
from abfsim.graph import shortest_distances
from abfsim.schedule import counting_process_schedule

WORKLOADS = ("noiseless-step", "noisy-instr")


def workload(name, steps):
    g = generators.buckyball(2)
    o = shortest_distances(g)
    s = counting_process_schedule(g, (4, 4, 2), steps, 0)
    if name == "noiseless-step":
        return lambda: run(g, s, "zero-d-inf-buffers", oracle=o)
    noise = NoiseSpec((0, 2), (-0.3, 0), (-0.1, 0.1), seed=1)
    return lambda: run(g, s, "zero-d-inf-buffers", noise, granularity="instr", oracle=o)


def measure(steps, repeat):
    out = {"numba": _accel.USE_NUMBA}
    for name in WORKLOADS:
        fn = workload(name, steps)
        tr = fn()  # warm-up and compile
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            tr = fn()
            best = min(best, time.perf_counter() - t0)
        out[name] = {"seconds": best, "checksum": hashlib.sha256(tr.final.tobytes()).hexdigest()[:16]}
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.child:
        print(json.dumps(measure(args.steps, args.repeat)))
        return 0
    env = dict(os.environ, ABFSIM_DISABLE_NUMBA="1")
    child = subprocess.run([sys.executable, __file__, "--child", "--steps", str(args.steps), "--repeat", "1"],
                           env=env, capture_output=True, text=True, check=True)
    slow = json.loads(child.stdout)
    fast = measure(args.steps, args.repeat)
    print(f"{'workload':<16}{'numba s':>10}{'python s':>11}{'speedup':>9}  match")
    for name in WORKLOADS:
        a, b = fast[name], slow[name]
        print(f"{name:<16}{a['seconds']:>10.4f}{b['seconds']:>11.3f}{b['seconds'] / a['seconds']:>8.0f}x  "
              f"{a['checksum'] == b['checksum']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
