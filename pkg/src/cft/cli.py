"""Command-line pipeline: synth, drop, train, cft, eval, bench.

Every command writes its machine-readable JSON report (including the parsed
arguments) to ``--out`` when given and prints a short table to stdout.
Failures exit with status 1 and a one-line diagnostic on stderr; argparse
usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from cft.baseline import train_head
from cft.bench import run_bench
from cft.bp import BP_PRESETS, BPConfig, Optimizer, cft_bp, tune_category_bp
from cft.cache import load_cache, save_cache
from cft.common import REPORT_SCHEMA, Report
from cft.errors import CFTError
from cft.ga import PRESETS as GA_PRESETS
from cft.ga import cft_ga, preset, tune_category_ga
from cft.greedy import cft_greedy
from cft.head import load_head, predict, save_head
from cft.labels import (
    POLICY_NAMES,
    LabelValue,
    assume_negative,
    drop_labels,
    policy_from_name,
    read_labels_csv,
    resolve_uncertain,
    write_labels_csv,
)
from cft.losses import ASLParams
from cft.metrics import MetricKind, mean_metric
from cft.synthetic import SyntheticSpec, generate


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def _table(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def _args_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _emit(args, report: dict, table: str) -> None:
    report = {"schema": REPORT_SCHEMA, "command": args.command, "args": _args_dict(args), **report}
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(table)


def _parse_subset(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated category indices, got {text!r}") from None


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {text}")
    return v


# --- commands -----------------------------------------------------------------


def cmd_synth(args) -> None:
    spec = SyntheticSpec(args.n, args.z, args.c, args.positive_rate, args.noise, args.seed, args.sharpness)
    cache, labels, oracle = generate(spec)
    save_cache(cache, args.cache)
    write_labels_csv(labels, args.labels)
    if args.oracle:
        save_head(oracle, args.oracle)
    pos = (labels.values == LabelValue.POSITIVE).mean(axis=0)
    rows = [[c, f"{p:.4f}"] for c, p in enumerate(pos)]
    _emit(args, {"positive_fraction": pos.tolist()}, _table(["category", "pos_frac"], rows))


def cmd_drop(args) -> None:
    labels = read_labels_csv(args.labels)
    dropped = drop_labels(labels, args.keep, args.seed, stratified=args.stratified)
    write_labels_csv(dropped, args.output)
    known = dropped.known_mask().sum(axis=0)
    rows = [[c, int(k)] for c, k in enumerate(known)]
    _emit(args, {"known_per_category": known.tolist()}, _table(["category", "known"], rows))


def cmd_train(args) -> None:
    cache = load_cache(args.cache)
    labels = read_labels_csv(args.labels)
    targets = resolve_uncertain(assume_negative(labels), labels, policy_from_name(args.uncertain), args.seed)
    config = BPConfig(
        args.optimizer, args.lr, args.epochs, ASLParams(args.gamma_pos, args.gamma_neg, args.margin)
    )
    head, losses = train_head(cache, targets, config, args.seed, return_losses=True)
    save_head(head, args.output)
    table = _table(["epoch", "loss"], [[0, _fmt(losses[0])], [len(losses) - 1, _fmt(losses[-1])]])
    _emit(args, {"initial_loss": float(losses[0]), "final_loss": float(losses[-1])}, table)


def _bp_config(args) -> BPConfig:
    name = args.preset or "coco-bp"
    if name not in BP_PRESETS:
        raise CFTError(f"preset {name!r} is not a bp preset; choose from {sorted(BP_PRESETS)}")
    cfg = BP_PRESETS[name]
    over = {}
    if args.metric:
        over["early_stop_metric"] = MetricKind(args.metric)
    if args.epochs is not None:
        over["epochs"] = args.epochs
    if args.lr is not None:
        over["learning_rate"] = args.lr
    return replace(cfg, **over) if over else cfg


def _ga_config(args):
    name = args.preset or "coco-ga"
    if name not in GA_PRESETS:
        raise CFTError(f"preset {name!r} is not a ga preset; choose from {sorted(GA_PRESETS)}")
    over = {}
    if args.metric:
        over["fitness_metric"] = MetricKind(args.metric)
    if args.generations is not None:
        over["generations"] = args.generations
    return preset(name, **over)


def cmd_cft(args) -> None:
    head = load_head(args.head)
    cache = load_cache(args.cache)
    labels = read_labels_csv(args.labels)
    valid = (load_cache(args.valid[0]), read_labels_csv(args.valid[1])) if args.valid else None
    common = dict(seed=args.seed, jobs=args.jobs)

    if args.variant == "bp":
        config = _bp_config(args)
        kind = config.early_stop_metric or MetricKind.AUC
        if args.uncertain == "greedy":
            def tune(unit, data, s):
                u, traj, rep = tune_category_bp(unit, data, config, s, kind)
                return u, rep, traj

            out, report = cft_greedy(head, cache, labels, valid, tune, "bp", kind, **common)
        else:
            out, report = cft_bp(head, cache, labels, valid, policy_from_name(args.uncertain), config, **common)
    else:
        config = _ga_config(args)
        if args.fitness_source == "valid" and valid is None:
            raise CFTError("--fitness-source valid needs --valid")
        if args.uncertain == "greedy":
            def tune(unit, data, s):
                return tune_category_ga(unit, data, config, s, args.fitness_source)

            out, report = cft_greedy(
                head, cache, labels, valid, tune, "ga", config.fitness_metric, **common
            )
        else:
            out, report = cft_ga(
                head, cache, labels, valid, policy_from_name(args.uncertain), config,
                fitness_source=args.fitness_source, **common,
            )
    if args.uncertain != "greedy":
        report.categories = [replace(r, policy=args.uncertain) for r in report.categories]
    save_head(out, args.output)
    _emit(args, _report_body(report), _cft_table(report))


def _report_body(report: Report) -> dict:
    body = report.to_dict()
    body.pop("schema")
    return body


def _cft_table(report: Report) -> str:
    rows = [
        [r.category, r.n_train, r.n_valid, r.best_epoch if r.best_epoch is not None else "-",
         _fmt(r.metric_before), _fmt(r.metric_after), r.metric_source, r.policy or "", "skip" if r.skipped else ""]
        for r in report.categories
    ]
    before, after = report.mean_before_after()
    rows.append(["mean", "", "", "", _fmt(before), _fmt(after), "", "", ""])
    header = ["category", "n_train", "n_valid", "best", f"{report.metric}_before", f"{report.metric}_after",
              "source", "policy", ""]
    return _table(header, rows)


def cmd_eval(args) -> None:
    head = load_head(args.head)
    cache = load_cache(args.cache)
    labels = read_labels_csv(args.labels)
    if cache.n_samples != labels.n_samples or head.n_categories != labels.n_categories:
        raise CFTError("head, cache and labels have inconsistent shapes")
    preds = predict(head, cache.data)
    sets = []
    for c in range(labels.n_categories):
        col = labels.values[:, c]
        known = (col == LabelValue.POSITIVE) | (col == LabelValue.NEGATIVE)
        sets.append((c, (np.where(col[known] == LabelValue.POSITIVE, 1, -1), preds[known, c])))
    kind = MetricKind(args.metric)
    mean, per_cat, skipped = mean_metric(sets, kind, args.subset)
    body = {"metric": kind.value, "mean": mean, "per_category": {str(c): v for c, v in per_cat.items()},
            "skipped": skipped}
    rows = [[c, _fmt(v)] for c, v in per_cat.items()]
    if args.groups:
        counts = labels.known_mask().sum(axis=0)
        ranked = np.argsort(counts, kind="stable")
        groups = []
        for g, cats in enumerate(np.array_split(ranked, args.groups)):
            vals = [per_cat[int(c)] for c in cats if int(c) in per_cat]
            groups.append({
                "group": g,
                "categories": [int(c) for c in cats],
                "mean": float(np.mean(vals)) if vals else None,
            })
            rows.append([f"group{g}", _fmt(groups[-1]["mean"])])
        body["groups"] = groups
    rows.append(["mean", _fmt(mean)])
    _emit(args, body, _table(["category", kind.value], rows))


def cmd_bench(args) -> None:
    result = run_bench(args.n, args.z, args.known_frac, args.epochs, args.generations, args.pop, args.seed)
    rows = [["bp", args.epochs, f"{result['bp_seconds_per_lr']:.3f}"],
            ["ga", args.generations, f"{result['ga_seconds_per_lr']:.3f}"]]
    _emit(args, result, _table(["method", "iters", "seconds_per_lr"], rows))


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cft", description="Category-wise fine-tuning of a classification head")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--out", help="write the JSON report here")
        return p

    p = add("synth", cmd_synth, "generate a synthetic problem")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--z", type=int, required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--positive-rate", type=float, default=0.1)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--sharpness", type=float, default=6.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--oracle", help="also save the teacher head")

    p = add("drop", cmd_drop, "keep a fraction of known labels")
    p.add_argument("--labels", required=True)
    p.add_argument("--keep", type=_unit_interval, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stratified", action="store_true")
    p.add_argument("--output", required=True)

    p = add("train", cmd_train, "train a head on assume-negative targets")
    p.add_argument("--cache", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--uncertain", choices=POLICY_NAMES, default="ignore")
    p.add_argument("--optimizer", choices=[o.value for o in Optimizer], default="adam")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--gamma-pos", type=float, default=0.0)
    p.add_argument("--gamma-neg", type=float, default=4.0)
    p.add_argument("--margin", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)

    p = add("cft", cmd_cft, "category-wise fine-tuning")
    p.add_argument("--head", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--valid", nargs=2, metavar=("FEATURES", "LABELS"))
    p.add_argument("--variant", choices=["bp", "ga"], default="bp")
    p.add_argument("--metric", choices=[k.value for k in MetricKind])
    p.add_argument("--preset", choices=sorted(BP_PRESETS) + sorted(GA_PRESETS))
    p.add_argument("--uncertain", choices=POLICY_NAMES + ("greedy",), default="ignore")
    p.add_argument("--epochs", type=int, help="override the bp preset's epochs")
    p.add_argument("--lr", type=float, help="override the bp preset's learning rate")
    p.add_argument("--generations", type=int, help="override the ga preset's generations")
    p.add_argument("--fitness-source", choices=["train", "valid"], default="train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)

    p = add("eval", cmd_eval, "mean AUC/AP of a head")
    p.add_argument("--head", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--metric", choices=[k.value for k in MetricKind], default="auc")
    p.add_argument("--subset", type=_parse_subset, help="comma-separated categories to average")
    p.add_argument("--groups", type=int, help="per-group means over categories sorted by known count")

    p = add("bench", cmd_bench, "per-unit timing of bp and ga")
    p.add_argument("--n", type=int, default=300_000)
    p.add_argument("--z", type=int, default=512)
    p.add_argument("--known-frac", type=_unit_interval, default=0.1)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--generations", type=int, default=1000)
    p.add_argument("--pop", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    if getattr(args, "groups", None) is not None and args.groups < 1:
        parser.error("--groups must be >= 1")
    try:
        args.func(args)
    except (CFTError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"cft {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
