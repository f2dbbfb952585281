"""Command line entry point: ``replaylab {run,compare,sweep,bench,report}``.

Exit codes: 0 success, 1 configuration error, 2 I/O error.
"""
import argparse
import json
import os
import sys

from . import config as config_mod
from . import harness
from .replay import Strategy

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _load(args, path=None):
    path = path or args.config
    cfg = config_mod.load(path) if path else config_mod.RunConfig()
    overrides = {}
    if getattr(args, "strategy", None) and not isinstance(args.strategy, list):
        overrides["priority.strategy"] = Strategy.parse(args.strategy).value
    if getattr(args, "total_steps", None) is not None:
        overrides["run.total_steps"] = args.total_steps
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = args.seed
    if getattr(args, "out", None):
        overrides["run.out"] = args.out
    return cfg.with_overrides(overrides) if overrides else cfg


def _templates(args):
    paths = args.config or [None]
    strategies = args.strategy or []
    templates = []
    for path in paths:
        base = _load(argparse.Namespace(config=path, total_steps=args.total_steps, out=args.out))
        if strategies:
            for s in strategies:
                name = Strategy.parse(s).value
                t = base.with_overrides({"priority.strategy": name})
                templates.append(t.replace(label=f"{base.label}-{name}" if base.label else None))
        else:
            templates.append(base)
    return templates


def cmd_run(args):
    cfg = _load(args)
    m = harness.run(cfg)
    print(json.dumps({"metrics": m.path, **{k: v for k, v in m.summary.items() if k != "type"}}))


def cmd_compare(args):
    templates = _templates(args)
    seeds = args.seeds or list(range(5))
    report, _ = harness.compare(templates, seeds, args.metric, out=args.out)
    print(report.table())
    out = args.out or templates[0].out
    path = os.path.join(out, "comparison.json")
    with open(path, "w") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
    print(f"\nwritten {path}")


def _grid(items):
    grid = {}
    for item in items or []:
        key, sep, values = item.partition("=")
        if not sep:
            raise config_mod.ConfigError(item, "sweep axes look like section.key=v1,v2")
        grid[key.strip()] = config_mod.parse_value(key, f"[{values}]")
    return grid


def cmd_sweep(args):
    template = _load(args)
    cfgs, results = harness.sweep(template, _grid(args.grid), args.seeds or [template.seed],
                                  out=args.out)
    for cfg, m in zip(cfgs, results):
        value = harness.extract(m, args.metric)
        print(f"{cfg.name}\tseed={cfg.seed}\t{args.metric}={value}")


def cmd_bench(args):
    rep = harness.bench_sumtree(args.exponents, args.ops, args.seed, prefill=not args.zero)
    print(rep.table())
    if len(rep.capacities) > 1:
        print(f"\nratio 2^{rep.capacities[-1].bit_length() - 1}:2^{rep.capacities[0].bit_length() - 1}"
              f" = {rep.ratios[-1]:.2f}")


def cmd_report(args):
    from . import report
    path, plots = report.render(args.paths, args.out or "report", args.metric,
                                plots=not args.no_plots)
    print(path)
    for p in plots:
        print(p)


def build_parser():
    p = argparse.ArgumentParser(prog="replaylab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute one run and write its metrics file")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--strategy")
    r.add_argument("--total-steps", type=int)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run strategies across seeds and test a metric")
    c.add_argument("--config", action="append", help="repeatable; one template per file")
    c.add_argument("--strategy", type=lambda s: s.split(","), help="comma list of strategies")
    c.add_argument("--seeds", type=_int_list)
    c.add_argument("--out")
    c.add_argument("--total-steps", type=int)
    c.add_argument("--metric", default="steps_to_interaction:5")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", help="cartesian product over listed values")
    s.add_argument("--config")
    s.add_argument("--grid", action="append", metavar="KEY=V1,V2")
    s.add_argument("--seeds", type=_int_list)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--strategy")
    s.add_argument("--total-steps", type=int)
    s.add_argument("--metric", default="steps_to_interaction:5")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench", help="sum-tree microbenchmark")
    b.add_argument("--exponents", type=_int_list, default=[10, 12, 14, 16, 18, 20])
    b.add_argument("--ops", type=int, default=200_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--zero", action="store_true", help="zero-filled tree (set-only)")
    b.set_defaults(func=cmd_bench)

    rp = sub.add_parser("report", help="markdown tables and PNG plots from metrics files")
    rp.add_argument("paths", nargs="+")
    rp.add_argument("--out")
    rp.add_argument("--metric", default="steps_to_interaction:5")
    rp.add_argument("--no-plots", action="store_true")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
