"""``seesaw`` command line: gen, train, sweep, gradcheck, compare.

Exit codes: 0 ok, 1 invalid configuration, 2 training diverged, 3 gradcheck failed.
Nothing is written until a command has validated its inputs and finished computing.
"""
import argparse
import csv
import io
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as cfgmod
from .data import GROUP_NAMES, Dataset, generate, generate_balanced
from .gradcheck import run_gradcheck
from .heads import dump_heads
from .losses import ClassCounts
from .telemetry import grad_ratio_report, group_mean_ratios, ratio_spread, write_report
from .trainer import TrainingDiverged, summarize_sweep, sweep, train, write_metrics_csv, write_sweep_csv

EXIT_CONFIG, EXIT_DIVERGED, EXIT_GRADCHECK = 1, 2, 3


def _add_config_flags(parser):
    parser.add_argument("--config", help="key = value configuration file")
    group = parser.add_argument_group("configuration overrides")
    for key, (_, help_text) in cfgmod.KEYS.items():
        group.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key, metavar="VALUE", help=help_text)


def _load(args, extra=None):
    raw = cfgmod.read_config_file(args.config) if args.config else {}
    for key in cfgmod.KEYS:
        value = getattr(args, "cfg_" + key, None)
        if value is not None:
            raw[key] = value
    raw.update(extra or {})
    return cfgmod.build_config(raw)


def _dataset(exp, seed=None):
    if exp.dataset:
        return Dataset.from_csv(exp.dataset)
    spec = exp.spec if seed is None else replace(exp.spec, seed=seed)
    return generate(spec)


def _write_files(files):
    for path, writer in files:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        writer(path)


def cmd_gen(args):
    exp = _load(args)
    ds = generate(exp.spec)
    files = [(args.out, ds.to_csv)]
    if args.test_out:
        files.append((args.test_out, generate_balanced(exp.spec, exp.train.eval_per_class).to_csv))
    _write_files(files)
    print(f"wrote {len(ds)} samples, class counts {ds.class_counts_static.tolist()}")
    return 0


def cmd_train(args):
    exp = _load(args)
    counts = ClassCounts.load(exp.counts_file) if exp.counts_file else None
    ds = _dataset(exp)
    result = train(ds, exp.train, initial_counts=counts)
    m = result.metrics
    rows = grad_ratio_report(result.telemetry, _static_counts(ds, result.telemetry.num_classes),
                             exp.train.group_thresholds)
    out = exp.out_dir

    def write_ckpt(path):
        with open(path, "w", newline="\n") as fh:
            dump_heads([h for h in (result.head, result.obj_head) if h is not None], fh)

    files = [
        (os.path.join(out, "metrics.csv"), lambda p: write_metrics_csv(m, p)),
        (os.path.join(out, "telemetry.csv"), lambda p: write_report(rows, p)),
        (os.path.join(out, "checkpoint.txt"), write_ckpt),
    ]
    if result.counts is not None:
        files.append((os.path.join(out, "counts.txt"), result.counts.save))
    _write_files(files)
    groups = " ".join(f"{g}={m.group_acc[g]:.4f}" for g in GROUP_NAMES)
    print(f"overall={m.overall_acc:.4f} {groups} final_loss={m.loss_curve[-1] if m.loss_curve else float('nan'):.4f}")
    return 0


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _static_counts(ds, n_out):
    counts = ds.class_counts_static
    if n_out > counts.shape[0]:
        counts = np.append(counts, np.sum(ds.labels < 0))
    return counts


def _seed_list(exp, n):
    if n < 1:
        raise cfgmod.ConfigError("--seeds must be >= 1")
    return [exp.train.seed + k for k in range(n)]


def cmd_sweep(args):
    exp = _load(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise cfgmod.ConfigError(f"bad --values {args.values!r}") from None
    if not values:
        raise cfgmod.ConfigError("--values is empty")
    seeds = _seed_list(exp, args.seeds)
    rows = sweep(lambda s: _dataset(exp, s), exp.train, args.param, values, seeds)
    path = args.out or os.path.join(exp.out_dir, f"sweep_{args.param}.csv")
    _write_files([(path, lambda p: write_sweep_csv(rows, p))])
    for value, agg in summarize_sweep(rows).items():
        print(f"{args.param}={value:g} " + " ".join(f"{k}={v:.4f}" for k, v in agg.items()))
    return 0


def cmd_gradcheck(args):
    errors = run_gradcheck(args.trials, args.h, args.seed)
    ok = True
    for name, err in errors.items():
        passed = err < args.tol
        ok &= passed
        print(f"{name:<30} max_rel_err={err:.3e} {'ok' if passed else 'FAIL'}")
    print(f"max relative error {max(errors.values()):.3e} (tol {args.tol:g})")
    return 0 if ok else EXIT_GRADCHECK


COMPARE_COLUMNS = ["seed"] + [f"{loss}_{g}" for loss in ("ce", "seesaw") for g in ("overall",) + GROUP_NAMES] \
    + [f"delta_{g}" for g in ("overall",) + GROUP_NAMES] + ["ce_ratio_spread", "seesaw_ratio_spread"]


def compare_runs(exp, seeds):
    """Paired CE / Seesaw runs on the same data per seed; returns one dict per seed."""
    out = []
    for seed in seeds:
        ds = _dataset(exp, seed)
        row = {"seed": seed}
        for loss in ("ce", "seesaw"):
            res = train(ds, replace(exp.train, loss=loss, seed=seed))
            m = res.metrics
            row[f"{loss}_overall"] = m.overall_acc
            for g in GROUP_NAMES:
                row[f"{loss}_{g}"] = m.group_acc[g]
            report = grad_ratio_report(res.telemetry, _static_counts(ds, res.telemetry.num_classes),
                                       exp.train.group_thresholds)
            row[f"{loss}_ratio_spread"] = ratio_spread(group_mean_ratios(report))
        for g in ("overall",) + GROUP_NAMES:
            row[f"delta_{g}"] = row[f"seesaw_{g}"] - row[f"ce_{g}"]
        out.append(row)
    return out


def cmd_compare(args):
    extra = {}
    if args.classes is not None:
        extra["num_classes"] = str(args.classes)
    if args.ratio is not None:
        extra["imbalance_ratio"] = str(args.ratio)
    exp = _load(args, extra)
    rows = compare_runs(exp, _seed_list(exp, args.seeds))
    mean = {"seed": "mean"}
    for col in COMPARE_COLUMNS[1:]:
        mean[col] = float(np.mean([r[col] for r in rows]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_COLUMNS)
    for r in rows + [mean]:
        w.writerow([r["seed"]] + [f"{r[c]:.6f}" for c in COMPARE_COLUMNS[1:]])
    text = buf.getvalue()
    if args.out:
        _write_files([(args.out, lambda p: _write_text(p, text))])
    sys.stdout.write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="seesaw", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic long-tailed dataset as CSV")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--test-out", help="also write the balanced held-out set")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train once; write metrics, telemetry, checkpoint and counts")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="sweep p, q or tau")
    _add_config_flags(p)
    p.add_argument("--param", choices=("p", "q", "tau"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference checks of all analytic gradients")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("compare", help="paired CE vs Seesaw runs with grouped accuracy deltas")
    _add_config_flags(p)
    p.add_argument("--classes", type=int)
    p.add_argument("--ratio", type=float)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
