#!/usr/bin/env python3
"""Novel-object adaptation assay: steps to the 5th interaction and post-change model error.

    python3 scripts/adaptation.py --out results/adaptation --seeds 0-9
"""
import argparse
import json
import os

import numpy as np

from replaylab import assays, harness, report


def seed_list(text):
    if "-" in text and "," not in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/adaptation")
    ap.add_argument("--seeds", type=seed_list, default=assays.ADAPTATION_SEEDS)
    ap.add_argument("--strategies", default=",".join(assays.ADAPTATION_STRATEGIES))
    args = ap.parse_args()

    templates = [assays.adaptation(s) for s in args.strategies.split(",")]
    rep, runs = harness.compare(templates, args.seeds, assays.ADAPTATION_METRIC, out=args.out)
    print(rep.table())

    step = 20_000 + 10_000
    loss = {}
    for m in runs:
        loss.setdefault(m.config["priority.strategy"], []).append(
            harness.extract(m, f"test_loss:1@{step}"))
    print(f"\nheld-out object-phase loss at step {step} (median)")
    for s, v in loss.items():
        print(f"  {s:12s} {np.median(v):.3e}")
    if "curious" in loss and "uniform" in loss:
        wins = sum(a < b for a, b in zip(loss["curious"], loss["uniform"]))
        print(f"  curious lower than uniform in {wins}/{len(loss['curious'])} seed pairs")

    with open(os.path.join(args.out, "comparison.json"), "w") as fh:
        json.dump({**rep.as_dict(), "test_loss_at_t0_plus_10k": loss}, fh, indent=2)
    path, _ = report.render([args.out], os.path.join(args.out, "report"))
    print(f"\nreport: {path}")


if __name__ == "__main__":
    main()
