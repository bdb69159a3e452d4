#!/usr/bin/env python3
"""Benchmark the compiled sweep kernels against the numpy reference.

Usage: python benchmarks/bench_kernels.py [--sizes 64,128,256] [--repeats 5]
(equivalent to `sftkit bench`).
"""

import argparse

from sftkit.bench import format_benchmark, run_benchmark


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="64,128,256")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--mesh-side", type=int, default=16)
    args = parser.parse_args()
    sizes = tuple(int(s) for s in args.sizes.split(","))
    rows, has_compiled = run_benchmark(
        sizes=sizes, mesh_side=args.mesh_side, repeats=args.repeats
    )
    print(format_benchmark(rows, has_compiled))


if __name__ == "__main__":
    main()
