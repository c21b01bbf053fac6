"""Time the symmetric-function kernels for every available backend.

Usage::

    python3 benchmarks/bench_kernels.py [--batch 200000] [--repeat 5]

Prints the best wall time per call and the speedup of each backend over the
numpy fallback.
"""

import argparse
import timeit

import numpy as np

from hessquot.kernels import available_backends


def cases(batch, rng):
    for n in (2, 3, 4, 6):
        lam = rng.uniform(0.1, 5.0, (batch, n))
        alpha = max(1, n // 2)
        yield f"n={n}", lam, alpha


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available_backends()
    rng = np.random.default_rng(args.seed)
    print(f"backends: {', '.join(backends)}; batch {args.batch}")
    print(f"{'kernel':<16}{'case':<8}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for label, lam, alpha in cases(args.batch, rng):
        calls = {
            "esym": lambda m: m.esym(lam),
            "esym_deleted": lambda m: m.esym_deleted(lam),
            "esym_deleted2": lambda m: m.esym_deleted2(lam),
            "quotient_grad": lambda m: m.quotient_grad(lam, alpha),
        }
        for kernel, call in calls.items():
            times = {}
            for name, mod in backends.items():
                call(mod)  # warm up
                times[name] = min(timeit.repeat(lambda: call(mod), number=1, repeat=args.repeat))
            fastest = min(times.values())
            speedup = times["python"] / fastest
            cols = "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
            print(f"{kernel:<16}{label:<8}{cols}{speedup:>9.1f}x")


if __name__ == "__main__":
    main()
