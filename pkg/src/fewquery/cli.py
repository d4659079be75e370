"""Command-line entry point: ``fewquery <command> ...``.

Exit codes: 0 success, 2 input/format error, 3 target unreachable,
4 every attacked document ran out of budget.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import ABLATION_MODES, dataset_summary, emit_report, load_dataset, run_ablation, run_experiment
from .bench import MetricsReport
from .embed import load_embeddings
from .errors import DomainError, FewQueryError, FormatError, QueryError
from .search import EXHAUSTED_BUDGET, MODE_LABELS, AttackConfig, read_config_file
from .target import TrainConfig, load_target, train_local_target

log = logging.getLogger("fewquery")

EXIT_OK, EXIT_INPUT, EXIT_UNREACHABLE, EXIT_BUDGET = 0, 2, 3, 4

# CLI flag -> AttackConfig field
FLAG_FIELDS = {
    "method": "method",
    "rank_strategy": "use_rank_strategy",
    "replace_strategy": "use_replace_strategy",
    "n": "n_neighbors",
    "k": "k_direction",
    "pop": "population_size",
    "max_gen": "max_generations",
    "budget": "max_queries_per_doc",
    "seed": "seed",
}
_BOOL_FLAGS = {"rank_strategy", "replace_strategy"}


def _attack_flags(p, with_strategies=True):
    p.add_argument("--data", help="dataset path (csv or jsonl)")
    p.add_argument("--format", choices=["csv", "jsonl"], help="dataset format (default: file suffix)")
    p.add_argument("--target", help="model.json from train-target, or http(s):// endpoint")
    p.add_argument("--glove", help="vectors used to encode queries for the surrogate")
    p.add_argument("--counter", help="counter-fitted vectors used for synonym candidates")
    p.add_argument("--method", choices=["greedy", "genetic"])
    if with_strategies:
        p.add_argument("--rank-strategy", action="store_true", default=None)
        p.add_argument("--replace-strategy", action="store_true", default=None)
    p.add_argument("--n", type=int, help="nearest neighbors considered per word")
    p.add_argument("--k", type=int, help="candidates kept by the direction filter")
    p.add_argument("--pop", type=int, help="genetic population size")
    p.add_argument("--max-gen", type=int, help="genetic generation limit")
    p.add_argument("--budget", type=int, help="max attack queries per document")
    p.add_argument("--sample", type=int, help="documents to attack (default 1000)")
    p.add_argument("--seed", type=int, help="sampling and search seed")
    p.add_argument("--parallel", type=int, help="concurrent document attacks (default 1)")
    p.add_argument("--config", help="flat key=value file; command-line flags override it")


def build_parser():
    parser = argparse.ArgumentParser(prog="fewquery", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-target", help="train the local bag-of-words target")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)

    p = sub.add_parser("attack", help="attack a sample of documents with one configuration")
    _attack_flags(p)
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--ledger", help="write the query ledger (JSONL) here")
    p.add_argument("--trace", help="directory for per-document step traces")

    p = sub.add_parser("ablate", help="run baseline, +WRankS, +WRepS and +both")
    _attack_flags(p, with_strategies=False)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("report", help="print a saved report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["csv", "table", "json"], default="table")

    p = sub.add_parser("make-world", help="write a synthetic corpus and vector files")
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--seed", type=int, default=7)
    return parser


def _merge_config(args):
    """Fill unset flags from ``--config``; returns extra AttackConfig fields from the file."""
    extra = {}
    if not getattr(args, "config", None):
        return extra
    values = read_config_file(args.config)
    fields = set(AttackConfig.__dataclass_fields__)
    reverse = {v: k for k, v in FLAG_FIELDS.items()}
    for key, value in values.items():
        dest = reverse.get(key, key)
        if hasattr(args, dest) and dest not in ("config", "command"):
            if getattr(args, dest) is not None:
                continue
            if dest in _BOOL_FLAGS:
                value = value.lower() in ("1", "true", "yes", "on")
            elif dest in ("n", "k", "pop", "max_gen", "budget", "sample", "seed", "parallel"):
                try:
                    value = int(value)
                except ValueError:
                    raise FormatError(f"{args.config}: bad integer for {key}: {value!r}") from None
            setattr(args, dest, value)
        elif key in fields:
            extra[key] = value
        else:
            raise FormatError(f"{args.config}: unknown key {key!r}")
    return extra


def _attack_config(args, extra):
    method = args.method or extra.get("method") or "greedy"
    cfg = AttackConfig.for_method(method)
    changes = {}
    for flag, fld in FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            changes[fld] = value
    cfg = AttackConfig.from_mapping({**cfg.to_dict(), **extra, **changes})
    return cfg


def _require(args, *names):
    missing = [n for n in names if not getattr(args, n, None)]
    if missing:
        raise FormatError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _load_inputs(args):
    _require(args, "data", "target", "counter")
    docs = load_dataset(args.data, args.format)
    log.info("dataset: %s", dataset_summary(docs))
    target = load_target(args.target)
    counter = load_embeddings(args.counter, name="counter-fitted")
    glove = load_embeddings(args.glove, name="glove") if args.glove else None
    return docs, target, counter, glove


def _budget_abort(report):
    attacked = [r for r in report.rows if not r.skipped]
    return bool(attacked) and all(r.status == EXHAUSTED_BUDGET for r in attacked)


def cmd_train_target(args):
    docs = load_dataset(args.data, args.format)
    summary = dataset_summary(docs)
    print(summary)
    model = train_local_target(docs, TrainConfig(epochs=args.epochs, learning_rate=args.lr, seed=args.seed))
    model.save(args.out)
    print(f"training accuracy {model.train_accuracy:.4f}; model written to {args.out}")
    return EXIT_OK


def cmd_attack(args):
    extra = _merge_config(args)
    _require(args, "out")
    cfg = _attack_config(args, extra)
    docs, target, counter, glove = _load_inputs(args)
    out = run_experiment(
        docs, target, cfg, counter_store=counter, glove_store=glove,
        sample_size=args.sample or 1000, seed=args.seed or 0, parallel=args.parallel or 1,
        keep_traces=bool(args.trace),
    )
    out.report.save(args.out)
    if args.ledger:
        out.ledger.persist(args.ledger)
    if args.trace:
        tdir = Path(args.trace)
        tdir.mkdir(parents=True, exist_ok=True)
        for doc_id, steps in out.traces.items():
            with open(tdir / f"doc_{doc_id}.jsonl", "w", encoding="utf-8") as fh:
                for step in steps:
                    fh.write(json.dumps(step, sort_keys=True) + "\n")
    print(emit_report(out.report, None, "table"))
    if out.report.partial:
        return EXIT_UNREACHABLE
    return EXIT_BUDGET if _budget_abort(out.report) else EXIT_OK


def cmd_ablate(args):
    extra = _merge_config(args)
    _require(args, "out")
    base = _attack_config(args, extra)
    docs, target, counter, glove = _load_inputs(args)
    outputs = run_ablation(
        docs, target, base, seed=args.seed or 0, counter_store=counter, glove_store=glove,
        sample_size=args.sample or 1000, parallel=args.parallel or 1,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for rank, rep in ABLATION_MODES:
        label = MODE_LABELS[(rank, rep)]
        o = outputs[label]
        slug = label.lstrip("+").lower()
        o.report.save(out_dir / f"report_{slug}.json")
        o.ledger.persist(out_dir / f"ledger_{slug}.jsonl")
        reports.append(o.report)
    emit_report(reports, out_dir / "ablation.csv", "csv")
    table = emit_report(reports, out_dir / "ablation.txt", "table")
    print(table)
    if any(r.partial for r in reports):
        return EXIT_UNREACHABLE
    return EXIT_BUDGET if all(_budget_abort(r) for r in reports) else EXIT_OK


def cmd_report(args):
    report = MetricsReport.load(args.input)
    sys.stdout.write(emit_report(report, None, args.format))
    return EXIT_OK


def cmd_make_world(args):
    from .synthetic import WorldConfig, write_world

    paths = write_world(args.out, args.n_train, args.n_test, WorldConfig(seed=args.seed))
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


COMMANDS = {
    "train-target": cmd_train_target,
    "attack": cmd_attack,
    "ablate": cmd_ablate,
    "report": cmd_report,
    "make-world": cmd_make_world,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](args)
    except QueryError as exc:
        print(f"error: target unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except (FormatError, DomainError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FewQueryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
