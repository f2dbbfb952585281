#!/usr/bin/env python3
"""Object appears then disappears; compare keeping the buffer against wiping it at removal.

    python3 scripts/forgetting.py --out results/forgetting
"""
import argparse
import os

import numpy as np

from replaylab import assays, harness, report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/forgetting")
    ap.add_argument("--seeds", type=lambda t: [int(s) for s in t.split(",")],
                    default=assays.ADAPTATION_SEEDS)
    ap.add_argument("--weight-decay", type=float, default=None)
    args = ap.parse_args()

    cfgs = [assays.forgetting(seed, clear=clear, weight_decay=args.weight_decay)
            for clear in (False, True) for seed in args.seeds]
    runs = harness.run_many(cfgs, out=args.out)
    n = len(args.seeds)
    kept, cleared = runs[:n], runs[n:]
    t1, end = assays.FORGETTING_T1, assays.FORGETTING_TOTAL
    pre = [harness.extract(m, f"test_loss:1@{t1}") for m in kept]
    post = [harness.extract(m, f"test_loss:1@{end}") for m in kept]
    post_clear = [harness.extract(m, f"test_loss:1@{end}") for m in cleared]
    print("held-out loss on the object phase (median)")
    print(f"  kept buffer   at removal {np.median(pre):.3e}  at end {np.median(post):.3e}"
          f"  (rank-sum p {harness.rank_sum_p(pre, post):.4f})")
    print(f"  wiped buffer  at end {np.median(post_clear):.3e}"
          f"  vs kept p {harness.rank_sum_p(post_clear, post):.4f}")
    path, _ = report.render([args.out], os.path.join(args.out, "report"),
                            metric=f"test_loss:1@{end}")
    print(f"report: {path}")


if __name__ == "__main__":
    main()
