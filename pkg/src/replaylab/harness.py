"""Experiment runner: single runs, seed comparisons, sweeps and the sum-tree bench.

A run writes ``<out>/<label>_seed<seed>.jsonl``: a header record with the
flattened config, one ``interval`` record per ``metrics_interval`` steps and
a closing ``summary`` record. Wall-clock timings go to a ``.timing.jsonl``
sidecar so the metrics file itself is byte-reproducible.
"""
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import config as config_mod
from .agent import Agent
from .envs import make_env, steps_to_kth_interaction
from .replay import PrioritizedBuffer
from .sumtree import EmptyDistributionError, SumTree
from .worldmodel import DisagreementEnsemble, DynamicsModel

METRICS_VERSION = 1


def _dump(record):
    return json.dumps(record, sort_keys=True, allow_nan=False) + "\n"


def metrics_path(cfg, out=None):
    return os.path.join(out or cfg.out, f"{cfg.name}_seed{cfg.seed}.jsonl")


@dataclass
class RunMetrics:
    config: dict
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    path: str = None

    def series(self, key):
        return [r[key] for r in self.records]

    def test_loss(self, phase, step):
        for r in self.records:
            if r["step"] == step:
                return r["test_loss"].get(str(phase))
        return None


def build(cfg):
    """Instantiate env, buffer, model, ensemble and agent for a config."""
    env = make_env(cfg.env_name, seed=cfg.seed, **cfg.env_params)
    buffer = PrioritizedBuffer(cfg.capacity, cfg.priority)
    m = cfg.model
    model = DynamicsModel(env.obs_dim, env.n_actions, m.learning_rate, m.weight_decay,
                          seed=cfg.seed, init_scale=m.init_scale)
    ensemble = DisagreementEnsemble(env.obs_dim, env.n_actions, m.ensemble_size,
                                    m.learning_rate, m.weight_decay, seed=cfg.seed,
                                    init_scale=m.init_scale)
    agent = Agent(env, cfg.agent, cfg.priority)
    return env, buffer, model, ensemble, agent


def _test_losses(env, model):
    return {str(p): float(model.batch_losses(*arrays).mean())
            for p, arrays in sorted(env.test_sets.items())}


def run(cfg, out=None, write=True):
    """Execute one run to ``cfg.total_steps``; deterministic given the seed."""
    env, buffer, model, ensemble, agent = build(cfg)
    rng = np.random.default_rng(cfg.seed)
    flat = config_mod.to_flat(cfg)
    # where the file lands is not part of the result
    flat.pop("run.out")
    metrics = RunMetrics(config=flat)
    path = timing_path = None
    fh = tfh = None
    if write:
        path = metrics_path(cfg, out)
        timing_path = path[:-len(".jsonl")] + ".timing.jsonl"
        try:
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            fh = open(path, "w")
            tfh = open(timing_path, "w")
        except OSError:
            if fh:
                fh.close()
            raise
        metrics.path = path
    try:
        if fh:
            fh.write(_dump({"type": "header", "version": METRICS_VERSION, "config": flat}))
        clear_at = set(cfg.clear_buffer_at)
        interval = cfg.metrics_interval
        next_record = interval
        rewards = []
        losses = []
        start = time.perf_counter()
        while env.global_step < cfg.total_steps:
            if env.global_step in clear_at:
                buffer.clear()
            report = agent.train_cycle(buffer, model, ensemble, rng)
            rewards.append(report.mean_reward)
            losses.append(report.mean_model_loss)
            if env.global_step >= next_record:
                diag = buffer.diagnostics()
                rec = {
                    "type": "interval",
                    "step": env.global_step,
                    "phase": env.phase,
                    "interactions": getattr(env, "interactions", 0),
                    "test_loss": _test_losses(env, model),
                    "train_loss": float(np.mean(losses)),
                    "mean_return": float(np.mean(rewards)),
                    "diagnostics": {
                        "relative_probability": {str(k): v for k, v in diag.relative_probability.items()},
                        "mean_visit_count": {str(k): v for k, v in diag.mean_visit_count.items()},
                    },
                }
                metrics.records.append(rec)
                if fh:
                    fh.write(_dump(rec))
                    tfh.write(_dump({"step": env.global_step,
                                     "wall_clock": time.perf_counter() - start}))
                rewards, losses = [], []
                next_record += interval
        summary = {
            "type": "summary",
            "steps": env.global_step,
            "interaction_steps": list(getattr(env, "interaction_steps", [])),
            "inserted_total": buffer.inserted_total,
            "priority_updates": buffer.priority_updates,
            "skipped_updates": buffer.skipped_updates,
            "cycles": agent.cycles,
        }
        t0 = getattr(env, "t0", 0)
        summary["steps_to_5th_interaction"] = steps_to_kth_interaction(
            summary["interaction_steps"], 5, t0) if hasattr(env, "interaction_steps") else None
        metrics.summary = summary
        if fh and cfg.total_steps > 0:
            fh.write(_dump(summary))
    finally:
        if fh:
            fh.close()
            tfh.close()
    return metrics


def read_metrics(path):
    metrics = None
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            kind = rec.get("type")
            if kind == "header":
                metrics = RunMetrics(config=rec["config"], path=path)
            elif kind == "interval":
                metrics.records.append(rec)
            elif kind == "summary":
                metrics.summary = rec
    if metrics is None:
        raise ValueError(f"{path}: no header record")
    return metrics


# -- metric extraction -------------------------------------------------------

def extract(metrics, name):
    """Scalar metric by name; None marks a censored run.

    Names: ``steps_to_interaction:K`` (from the phase change),
    ``test_loss:PHASE@STEP``, ``final_interactions``.
    """
    if name.startswith("steps_to_interaction:"):
        k = int(name.split(":", 1)[1])
        t0 = metrics.config.get("env.t0", 0)
        return steps_to_kth_interaction(metrics.summary.get("interaction_steps", []), k, t0)
    if name == "steps_to_5th_interaction":
        return extract(metrics, "steps_to_interaction:5")
    if name.startswith("test_loss:"):
        phase, _, step = name.split(":", 1)[1].partition("@")
        return metrics.test_loss(int(phase), int(step))
    if name == "final_interactions":
        return metrics.records[-1]["interactions"] if metrics.records else 0
    raise ValueError(f"unknown metric {name!r}")


# -- parallel execution ------------------------------------------------------

def worker_count(n_jobs):
    cap = os.environ.get("CR_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def _run_job(job):
    text, out = job
    cfg = config_mod.loads(text)
    m = run(cfg, out=out)
    return m.path


def run_many(cfgs, out=None):
    """Run configs in a worker pool; results come back in input order."""
    jobs = [(config_mod.dumps(c), out) for c in cfgs]
    workers = worker_count(len(jobs))
    if workers == 1:
        paths = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(_run_job, jobs))
    return [read_metrics(p) for p in paths]


# -- comparisons -------------------------------------------------------------

def rank_sum_p(x, y, alternative="two-sided"):
    """Mann-Whitney p-value; censored (None) values rank worst.

    ``alternative="greater"`` tests whether ``x`` tends to exceed ``y``.
    """
    xs = [math.inf if v is None else float(v) for v in x]
    ys = [math.inf if v is None else float(v) for v in y]
    if len(set(xs + ys)) == 1:
        return 1.0
    finite = [v for v in xs + ys if math.isfinite(v)]
    worst = (max(finite) + 1.0) if finite else 0.0
    xs = [worst if math.isinf(v) else v for v in xs]
    ys = [worst if math.isinf(v) else v for v in ys]
    return float(stats.mannwhitneyu(xs, ys, alternative=alternative).pvalue)


def summarize(values):
    present = sorted(v for v in values if v is not None)
    censored = len(values) - len(present)
    out = {"n": len(values), "censored": censored}
    # censored runs rank worst, so they sit at +inf in order statistics
    ranked = present + [math.inf] * censored
    if present:
        q1, med, q3 = np.percentile(ranked, [25, 50, 75], method="linear") if not censored \
            else [_percentile_with_inf(ranked, q) for q in (25, 50, 75)]
        out.update(median=float(med), q1=float(q1), q3=float(q3))
    else:
        out.update(median=None, q1=None, q3=None, all_censored=True)
    return out


def _percentile_with_inf(sorted_vals, q):
    pos = (len(sorted_vals) - 1) * q / 100.0
    lo, hi = math.floor(pos), math.ceil(pos)
    a, b = sorted_vals[lo], sorted_vals[hi]
    if lo == hi or a == b:
        return a
    if math.isinf(b):
        return math.inf
    return a + (b - a) * (pos - lo)


@dataclass
class ComparisonReport:
    metric: str
    seeds: list
    values: dict            # label -> list of metric values (None = censored)
    summary: dict           # label -> summarize()
    p_values: dict          # "a|b" -> two-sided rank-sum p

    def p(self, a, b):
        return self.p_values.get(f"{a}|{b}", self.p_values.get(f"{b}|{a}"))

    def as_dict(self):
        return {"metric": self.metric, "seeds": self.seeds, "values": self.values,
                "summary": _finite(self.summary), "p_values": self.p_values}

    def table(self):
        lines = [f"metric: {self.metric}", "",
                 "| label | n | censored | median | IQR |", "|---|---|---|---|---|"]
        for label, s in self.summary.items():
            med = "censored" if s["median"] is None else _fmt(s["median"])
            iqr = "" if s["median"] is None else f"{_fmt(s['q1'])} to {_fmt(s['q3'])}"
            lines.append(f"| {label} | {s['n']} | {s['censored']} | {med} | {iqr} |")
        lines += ["", "| pair | rank-sum p |", "|---|---|"]
        for pair, p in self.p_values.items():
            lines.append(f"| {pair.replace('|', ' vs ')} | {p:.4g} |")
        return "\n".join(lines)


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isinf(v)):
        return "inf"
    return f"{v:.6g}"


def _finite(obj):
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, float) and math.isinf(obj):
        return None
    return obj


def compare_values(values, metric, seeds):
    labels = list(values)
    summary = {label: summarize(values[label]) for label in labels}
    pvals = {f"{a}|{b}": rank_sum_p(values[a], values[b])
             for a, b in itertools.combinations(labels, 2)}
    return ComparisonReport(metric, list(seeds), values, summary, pvals)


def compare(templates, seeds, metric, out=None, min_seeds=5):
    """Run every template under every seed and compare one metric across labels."""
    labels = [t.name for t in templates]
    if len(set(labels)) < 2:
        raise ValueError("compare needs at least two distinct strategies/labels")
    if len(seeds) < min_seeds:
        raise ValueError(f"compare needs at least {min_seeds} seeds")
    cfgs = [t.replace(seed=s) for t in templates for s in seeds]
    results = run_many(cfgs, out=out)
    values = {label: [] for label in labels}
    for cfg, m in zip(cfgs, results):
        values[cfg.name].append(extract(m, metric))
    return compare_values(values, metric, seeds), results


def sweep(template, grid, seeds, out=None):
    """Cartesian product over ``grid`` ({flat key: [values]}) times seeds."""
    keys = sorted(grid)
    cfgs = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        tag = ",".join(f"{k.split('.')[-1]}={v}" for k, v in overrides.items())
        base = template.with_overrides(overrides)
        base = base.replace(label=f"{template.name}[{tag}]" if tag else template.name)
        cfgs.extend(base.replace(seed=s) for s in seeds)
    return cfgs, run_many(cfgs, out=out)


# -- sum-tree benchmark -------------------------------------------------------

@dataclass
class BenchReport:
    capacities: list
    ns_per_op: list
    sample_refused: list
    ops: int

    @property
    def ratios(self):
        base = self.ns_per_op[0]
        return [v / base for v in self.ns_per_op]

    def ratio(self, cap_a, cap_b):
        return self.ns_per_op[self.capacities.index(cap_a)] / self.ns_per_op[self.capacities.index(cap_b)]

    def table(self):
        lines = ["| capacity | ns/op | ratio | sampling |", "|---|---|---|---|"]
        for cap, ns, r, refused in zip(self.capacities, self.ns_per_op, self.ratios, self.sample_refused):
            lines.append(f"| 2^{cap.bit_length() - 1} | {ns:.0f} | {r:.2f} | {'refused' if refused else 'yes'} |")
        return "\n".join(lines)


def bench_workload(capacity, ops, seed, prefill=True):
    rng = np.random.default_rng([seed, capacity])
    idx = rng.integers(0, capacity, ops).tolist()
    pri = (rng.random(ops) + 1e-3).tolist() if prefill else [0.0] * ops
    us = rng.random(ops).tolist()
    return idx, pri, us


def bench_sumtree(capacity_exponents, ops, seed=0, prefill=True, repeats=3):
    """Mean ns per call for interleaved set and sample calls.

    ``ops`` counts calls; half are ``set`` and half ``sample``. With
    ``prefill=False`` the tree stays all-zero, sampling is refused with an
    empty-distribution error and only ``set`` calls are timed.
    """
    if ops < 1:
        raise ValueError("ops must be >= 1")
    caps, times, refused = [], [], []
    for k in capacity_exponents:
        cap = 1 << int(k)
        tree = SumTree(cap)
        if prefill:
            fill = np.random.default_rng([seed, cap, 1]).random(cap) + 1e-3
            tree.nodes[tree._size:tree._size + cap] = fill
            tree.rebuild()
        pairs = max(1, ops // 2)
        idx, pri, us = bench_workload(cap, pairs, seed, prefill)
        sample_ok = True
        try:
            tree.sample(0.5)
        except EmptyDistributionError:
            sample_ok = False
        best = math.inf
        for _ in range(repeats):
            set_ = tree.set
            sample = tree.sample
            t = time.perf_counter_ns()
            if sample_ok:
                for i, p, u in zip(idx, pri, us):
                    set_(i, p)
                    sample(u)
                n_calls = 2 * pairs
            else:
                for i, p in zip(idx, pri):
                    set_(i, p)
                n_calls = pairs
            best = min(best, (time.perf_counter_ns() - t) / n_calls)
        caps.append(cap)
        times.append(best)
        refused.append(not sample_ok)
    return BenchReport(caps, times, refused, ops)
