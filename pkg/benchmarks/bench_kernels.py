"""Compare the SHA-256 chain kernels: numba, pure numpy, and a hashlib loop.

    python benchmarks/bench_kernels.py [--lanes 4288] [--steps 15] [--repeat 3]

The default workload is one slice of Merkle key generation: 64 WOTS keys of
67 chains each, walked to the top of the chain. A second section times a
whole MSS key generation in subprocesses, one per CBDCLAB_BACKEND value,
since the backend is fixed at import time.
"""

import argparse
import hashlib
import os
import subprocess
import sys
from time import perf_counter

import numpy as np

from cbdclab.crypto import kernels


def chain_hashlib(prefix, headers, values, start, steps):
    out = values.copy()
    for r in range(headers.shape[0]):
        head = prefix + headers[r].tobytes()
        v = out[r].tobytes()
        for s in range(steps[r]):
            v = hashlib.sha256(head + bytes([start[r] + s]) + v).digest()
        out[r] = np.frombuffer(v, dtype=np.uint8)
    return out


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = perf_counter()
        result = fn()
        times.append(perf_counter() - t0)
    return min(times), result


def keygen_in_subprocess(backend, height):
    code = (
        "from time import perf_counter\n"
        "from cbdclab.crypto import Drbg, SchemeConfig, SchemeId, keygen\n"
        "cfg = SchemeConfig(mss_height=%d)\n"
        "keygen(SchemeId.PQ_MSS, Drbg.from_int(0), SchemeConfig(mss_height=1))\n"
        "t0 = perf_counter()\n"
        "k = keygen(SchemeId.PQ_MSS, Drbg.from_int(1), cfg)\n"
        "print(perf_counter() - t0, k.public.hex())\n" % height
    )
    env = dict(os.environ, CBDCLAB_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    seconds, root = out.stdout.split()
    return float(seconds), root


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lanes", type=int, default=64 * 67)
    ap.add_argument("--steps", type=int, default=15)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--height", type=int, default=8, help="MSS height for the end-to-end keygen")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    prefix = b"bench-chain"
    headers = rng.integers(0, 256, (args.lanes, 6), dtype=np.uint8)
    values = rng.integers(0, 256, (args.lanes, 32), dtype=np.uint8)
    start = np.zeros(args.lanes, dtype=np.int64)
    steps = np.full(args.lanes, args.steps, dtype=np.int64)
    work = (prefix, headers, values, start, steps)
    hashes = args.lanes * args.steps

    kernels.chain_rows_numba(*[w[:1] if isinstance(w, np.ndarray) else w for w in work])  # compile
    rows = []
    ref_time, ref = best_of(lambda: chain_hashlib(*work), args.repeat)
    for name, fn in (("numba", kernels.chain_rows_numba), ("numpy", kernels.chain_rows_numpy)):
        t, out = best_of(lambda: fn(*work), args.repeat)
        rows.append((name, t, np.array_equal(out, ref)))
    rows.append(("hashlib", ref_time, True))

    print(f"chain kernel: {args.lanes} lanes x {args.steps} steps = {hashes} compressions")
    print(f"{'backend':<10}{'seconds':>10}{'us/hash':>10}{'vs hashlib':>12}  matches")
    for name, t, same in rows:
        print(f"{name:<10}{t:>10.4f}{t / hashes * 1e6:>10.3f}{ref_time / t:>11.2f}x  {same}")

    print(f"\nMSS keygen, height {args.height} ({2 ** args.height} WOTS keys), fresh interpreter per backend")
    roots = set()
    for backend in ("numba", "numpy"):
        t, root = keygen_in_subprocess(backend, args.height)
        roots.add(root)
        print(f"{backend:<10}{t:>10.3f}s  root {root[:16]}")
    print("roots agree" if len(roots) == 1 else "ROOTS DIFFER")


if __name__ == "__main__":
    main()
