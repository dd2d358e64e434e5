"""Compiled vs pure-Python kernel timings.

Each backend runs in a fresh interpreter because the backend is chosen at
import time (CREDSTUFF_PURE_PYTHON=1 forces the fallback).

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, random, sys, timeit
from credstuff import _backend
from credstuff.group import P256, TEST_GROUP, gen, encrypt
from credstuff.cuckoo import FilterParams, CuckooFilter
from credstuff.pmt import build_query, respond

repeat = int(sys.argv[1])
rng = random.Random(7)
r = P256.order
bases = [P256.mul_gen(rng.randrange(1, r)) for _ in range(18)]
rows = [[rng.randrange(r) for _ in range(18)] for _ in range(16)]
k = rng.randrange(r)
pt = bases[0]
fixed = P256.fixed_base(pt)

params = FilterParams.for_capacity(128)
filt = CuckooFilter(params, r, 1, rng)
for _ in range(128):
    filt.insert(rng.getrandbits(256).to_bytes(32, "big"))
query, kp = build_query(b"probe", params.hasher(1), P256, rng=rng)
matrix = filt.snapshot()

tg = TEST_GROUP
tbases = [tg.mul_gen(rng.randrange(1, tg.order)) for _ in range(18)]
trows = [[rng.randrange(tg.order) for _ in range(18)] for _ in range(16)]

def best(fn, number):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number

out = {
    "backend": _backend.BACKEND,
    "p256_msm_16x18_s": best(lambda: P256.msm_rows(rows, bases), 2),
    "p256_fixed_mul_s": best(lambda: fixed.mul(k), 20),
    "p256_ladder_s": best(lambda: P256.mul_ct(k, pt), 10),
    "p256_respond_beta16_s": best(lambda: respond(query, matrix, P256, rng), 1),
    "test_msm_16x18_s": best(lambda: tg.msm_rows(trows, tbases), 20),
}
print(json.dumps(out))
"""


def run(pure: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env["CREDSTUFF_PURE_PYTHON"] = "1" if pure else "0"
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    comp = run(False, args.repeat)
    py = run(True, args.repeat)
    if comp["backend"] != "compiled":
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
    print(f"{'kernel':28s} {'compiled':>12s} {'python':>12s} {'speedup':>8s}")
    for key in comp:
        if key == "backend":
            continue
        c, p = comp[key], py[key]
        print(f"{key:28s} {c * 1e3:10.3f}ms {p * 1e3:10.3f}ms {p / c:7.1f}x")


if __name__ == "__main__":
    main()
