"""Render markdown tables and static PNG plots from metrics files."""
import glob
import os
from collections import defaultdict

import numpy as np

from . import harness


def collect(paths):
    """Metrics files from a mix of files and directories, grouped by label."""
    files = []
    for p in paths:
        if os.path.isdir(p):
            files.extend(sorted(glob.glob(os.path.join(p, "*.jsonl"))))
        else:
            files.append(p)
    files = [f for f in files if not f.endswith(".timing.jsonl")]
    groups = defaultdict(list)
    for f in files:
        m = harness.read_metrics(f)
        label = m.config.get("run.label") or m.config["priority.strategy"]
        groups[label].append(m)
    return dict(sorted(groups.items()))


def _median_curve(runs, getter):
    steps = [r["step"] for r in runs[0].records]
    rows = [[getter(rec) for rec in m.records[:len(steps)]] for m in runs]
    n = min(len(r) for r in rows)
    arr = np.array([r[:n] for r in rows], dtype=float)
    return np.array(steps[:n]), np.median(arr, axis=0)


def summary_table(groups, metric="steps_to_interaction:5"):
    values = {label: [harness.extract(m, metric) for m in runs] for label, runs in groups.items()}
    seeds = sorted({m.config["run.seed"] for runs in groups.values() for m in runs})
    if len(values) >= 2:
        return harness.compare_values(values, metric, seeds).table()
    label, vals = next(iter(values.items()))
    s = harness.summarize(vals)
    return f"metric: {metric}\n\n{label}: median {s['median']} over {s['n']} runs ({s['censored']} censored)"


def plot(groups, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    phases = sorted({p for runs in groups.values() for m in runs
                     for rec in m.records[:1] for p in rec["test_loss"]})
    fig, axes = plt.subplots(1, len(phases) or 1, figsize=(4.5 * max(1, len(phases)), 3.5),
                             squeeze=False)
    for ax, phase in zip(axes[0], phases):
        for label, runs in groups.items():
            if phase not in runs[0].records[0]["test_loss"]:
                continue
            x, y = _median_curve(runs, lambda rec: rec["test_loss"][phase])
            ax.plot(x, y, label=label)
        ax.set_yscale("log")
        ax.set_title(f"held-out loss, phase {phase}")
        ax.set_xlabel("step")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "test_loss.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, runs in groups.items():
        x, y = _median_curve(runs, lambda rec: rec["interactions"])
        ax.plot(x, y, label=label)
    ax.set_xlabel("step")
    ax.set_ylabel("cumulative interactions (median)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "interactions.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def render(paths, out_dir, metric="steps_to_interaction:5", plots=True):
    groups = collect(paths)
    if not groups:
        raise FileNotFoundError(f"no metrics files under {paths}")
    os.makedirs(out_dir, exist_ok=True)
    text = ["# Run report", "", summary_table(groups, metric), ""]
    last = {label: runs for label, runs in groups.items() if runs[0].records}
    if last:
        phases = sorted({p for runs in last.values() for p in runs[0].records[-1]["test_loss"]})
        text += ["## Final held-out loss (median)", "",
                 "| label | " + " | ".join(f"phase {p}" for p in phases) + " |",
                 "|---|" + "---|" * len(phases)]
        for label, runs in last.items():
            final = [m.records[-1]["test_loss"] for m in runs]
            cells = [f"{np.median([f[p] for f in final]):.4g}" if p in final[0] else "" for p in phases]
            text.append(f"| {label} | " + " | ".join(cells) + " |")
        text.append("")
    written = plot(groups, out_dir) if plots and last else []
    text += [f"![{os.path.basename(p)}]({os.path.basename(p)})" for p in written]
    path = os.path.join(out_dir, "report.md")
    with open(path, "w") as fh:
        fh.write("\n".join(text) + "\n")
    return path, written
