#!/usr/bin/env python3
"""Sum-tree microbenchmark across capacities 2^10 .. 2^20."""
import argparse

from replaylab import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ops", type=int, default=400_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    harness.bench_sumtree([10], 10_000)  # compile
    rep = harness.bench_sumtree(list(range(10, 21, 2)), args.ops, args.seed)
    print(rep.table())
    print(f"\n2^20 : 2^10 per-op ratio {rep.ratio(1 << 20, 1 << 10):.2f}")
    zero = harness.bench_sumtree([20], args.ops, args.seed, prefill=False)
    print(f"zero-filled 2^20 (set only): {zero.ns_per_op[0]:.0f} ns/op")


if __name__ == "__main__":
    main()
