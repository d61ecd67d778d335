"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are called directly, so the environment switch does not
matter here. Results are checked for equality before timing.
"""

import argparse
import random
import sys
import timeit

from stegsuggest import _purecore

try:
    from stegsuggest import _speedups
except ImportError:
    _speedups = None


def cases(rng: random.Random):
    keys = [(rng.getrandbits(32), rng.getrandbits(64)) for _ in range(200)]
    origs = [rng.getrandbits(32)]
    for _ in range(9999):
        origs.append((origs[-1] + rng.randrange(100)) & 0xFFFFFFFF)
    return {
        "keyed_permutation(1024)": (
            lambda m: m.keyed_permutation(0xC0FFEE, 1024),
            200,
        ),
        "ssi_candidates x200": (
            lambda m: [
                (m.ssi_candidates_sha1(i, h) if m is _speedups else m.ssi_candidates(i, h))
                for i, h in keys
            ],
            20,
        ),
        "ts_rewrite_run(10k)": (lambda m: m.ts_rewrite_run(origs, 12345), 50),
        "splitmix64_at x10k": (lambda m: [m.splitmix64_at(7, c) for c in range(10_000)], 10),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _speedups is None:
        print("compiled extension not built; only the python backend is available", file=sys.stderr)
    print(f"{'kernel':<26}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, (fn, number) in cases(random.Random(0)).items():
        py = min(timeit.repeat(lambda: fn(_purecore), number=number, repeat=args.repeat)) / number
        if _speedups is None:
            print(f"{name:<26}{py * 1e3:>12.3f}{'-':>12}{'-':>10}")
            continue
        assert fn(_purecore) == fn(_speedups), name
        cy = min(timeit.repeat(lambda: fn(_speedups), number=number, repeat=args.repeat)) / number
        print(f"{name:<26}{py * 1e3:>12.3f}{cy * 1e3:>12.3f}{py / cy:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
