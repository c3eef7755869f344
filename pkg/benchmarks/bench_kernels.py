"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from spdelab.kernels import available_backends


def cases():
    rng = np.random.default_rng(0)
    streams = rng.integers(0, 2**63, size=1024, dtype=np.uint64)
    modes = rng.integers(0, 2**63, size=1024, dtype=np.uint64)
    x = np.linspace(0.0, 1.0, 514)[1:-1, None]
    v = np.sin(3.0 * x[:, 0]) + 0.1 * rng.standard_normal(x.shape[0])
    x2 = np.stack(np.meshgrid(np.linspace(0, 1, 34)[1:-1], np.linspace(0, 1, 34)[1:-1]), -1).reshape(-1, 2)
    v2 = np.sin(np.pi * x2[:, 0]) * x2[:, 1]
    return {
        "mix64 (1M keys)": lambda k: k.mix64(np.arange(1 << 20, dtype=np.uint64)),
        "counter_normals 1024x1024": lambda k: k.counter_normals(streams, modes),
        "pair_sum 1d P=512": lambda k: k.pair_sum(v, x, 1.5),
        "pair_sum 2d P=1024": lambda k: k.pair_sum(v2, x2, 2.5),
        "pair_max 1d P=512": lambda k: k.pair_max(v, x, 0.4),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = available_backends()
    names = list(backends)
    print(f"{'kernel':28s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases().items():
        times = []
        for name in names:
            mod = backends[name]
            fn(mod)  # warm up
            times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)))
        row = f"{label:28s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
