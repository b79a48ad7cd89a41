"""Time the compiled kernels against the pure-numpy fallback.

Each backend runs in its own interpreter, since the choice is made at import
time from METAAD_DISABLE_NUMBA.

    python3 benchmarks/bench_kernels.py [--reps 3]
"""
import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
from metaad import kernels
from metaad.discounting import DiscountSpec
from metaad.instances import gen_random
from metaad.offline import brute_force, solve_exact
from metaad.online import run_metaad

reps = int(sys.argv[1])
spec = DiscountSpec.classic_small_bid()
big = gen_random(1, 50, 2000, degree=8)
tight = [gen_random(s, 5, 16, degree=3, capacity=(2, 6)) for s in range(10)]
tiny = [gen_random(s, 3, 9, degree=2, capacity=(1, 3)) for s in range(20)]

def bench(fn):
    fn()  # warm-up, includes compilation
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps

out = {
    "numba": kernels.USING_NUMBA,
    "online loop (V=2000, U=50)": bench(lambda: run_metaad(big, spec)),
    "branch-and-bound (10 x V=16, U=5)": bench(lambda: [solve_exact(i) for i in tight]),
    "brute force (20 x V=9, U=3)": bench(lambda: [brute_force(i) for i in tiny]),
}
print(json.dumps(out))
"""


def run(disable, reps):
    env = dict(os.environ)
    env.pop("METAAD_DISABLE_NUMBA", None)
    if disable:
        env["METAAD_DISABLE_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", WORKER, str(reps)], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args()
    t0 = time.perf_counter()
    fast, slow = run(False, args.reps), run(True, args.reps)
    if not fast.pop("numba") or slow.pop("numba"):
        sys.exit("backend selection did not take effect")
    print(f"{'kernel':38s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for k in fast:
        print(f"{k:38s} {fast[k]:10.4f} {slow[k]:10.4f} {slow[k] / fast[k]:8.1f}x")
    print(f"total wall time {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
