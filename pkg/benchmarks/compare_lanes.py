"""Time the compiled scan kernels against the pure-numpy fallback.

Builds one code database, then scans it from two subprocesses: one with
the default kernel lane and one with HASHSCREEN_PURE_PYTHON=1. Both lanes
must return bit-identical results; the table at the end reports the
median scan time of each and the speedup.

Usage:
    python3 benchmarks/compare_lanes.py [--count N] [--code-bits D]
                                        [--k K] [--repetitions R]
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from hashscreen.codedb import build_database
from hashscreen.codes import tail_mask, words_for_bits


def _worker(args) -> int:
    from hashscreen import codedb, kernels
    from hashscreen.codes import BinaryCode

    db = codedb.open_database(args.db)
    query = BinaryCode.from_bytes(bytes.fromhex(args.query_hex), db.code_bits)
    times = []
    result = None
    for _ in range(args.repetitions):
        t0 = time.perf_counter()
        result = codedb.topk_hamming(db, query, args.k, threads=1)
        times.append(time.perf_counter() - t0)
    print(
        json.dumps(
            {
                "backend": kernels.BACKEND,
                "seconds": float(np.median(times)),
                "indices": [int(i) for i in result.indices],
                "scores": [int(s) for s in result.scores],
            }
        )
    )
    return 0


def _run_lane(db_path, query_hex, args, pure: bool) -> dict:
    env = dict(os.environ)
    if pure:
        env["HASHSCREEN_PURE_PYTHON"] = "1"
    else:
        env.pop("HASHSCREEN_PURE_PYTHON", None)
    cmd = [
        sys.executable, os.path.abspath(__file__), "--worker",
        "--db", db_path, "--query-hex", query_hex,
        "--k", str(args.k), "--repetitions", str(args.repetitions),
    ]
    out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--count", type=int, default=2_000_000)
    parser.add_argument("--code-bits", type=int, default=128)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--repetitions", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    parser.add_argument("--db", help=argparse.SUPPRESS)
    parser.add_argument("--query-hex", dest="query_hex", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.worker:
        return _worker(args)

    rng = np.random.default_rng(args.seed)
    n_words = words_for_bits(args.code_bits)
    mask = tail_mask(args.code_bits)

    def blocks():
        done = 0
        while done < args.count:
            m = min(65536, args.count - done)
            block = rng.integers(0, 2**64, size=(m, n_words), dtype=np.uint64)
            block[:, -1] &= mask
            yield block
            done += m

    with tempfile.TemporaryDirectory(prefix="hashscreen-lanes-") as workdir:
        db_path = os.path.join(workdir, "lanes.dhdb")
        print(f"building {args.count} codes at {args.code_bits} bits ...")
        build_database(blocks(), db_path, args.code_bits)
        qwords = rng.integers(0, 2**64, size=n_words, dtype=np.uint64)
        qwords[-1] &= mask
        query_hex = qwords.astype("<u8").tobytes().hex()

        compiled = _run_lane(db_path, query_hex, args, pure=False)
        python = _run_lane(db_path, query_hex, args, pure=True)

    if compiled["indices"] != python["indices"] or compiled["scores"] != python["scores"]:
        print("LANE MISMATCH: the two kernel lanes disagree", file=sys.stderr)
        return 1

    print(f"\ntop-{args.k} over C={args.count}, d={args.code_bits}, "
          f"median of {args.repetitions}:")
    print(f"  {'lane':<12} {'backend':<10} {'seconds':>10}")
    for label, row in (("default", compiled), ("forced-pure", python)):
        print(f"  {label:<12} {row['backend']:<10} {row['seconds']:>10.4f}")
    if compiled["backend"] == python["backend"]:
        print("note: compiled extension unavailable; both lanes ran the fallback")
    else:
        print(f"  speedup: {python['seconds'] / compiled['seconds']:.1f}x")
    print("results: bit-identical across lanes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
