"""Ablate the two query-saving strategies on a synthetic world.

Builds the world and target first if ``--world`` has none, then runs baseline,
+WRankS, +WRepS and +both on the same seeded sample and prints the full-run
table plus the same metrics after a warm-up window.

    python3 scripts/run_ablation.py --world runs/world --out runs/ablation
"""
import argparse
import logging
import time
from pathlib import Path

from fewquery.bench import emit_report, load_dataset, run_ablation, window
from fewquery.embed import load_embeddings
from fewquery.search import AttackConfig
from fewquery.synthetic import write_world
from fewquery.target import LocalTextClassifier, train_local_target


def ensure_world(world):
    if not (world / "model.json").exists():
        write_world(world)
        train_local_target(load_dataset(world / "train.jsonl")).save(world / "model.json")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--world", default="runs/world")
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--method", choices=["greedy", "genetic"], default="greedy")
    ap.add_argument("--sample", type=int, default=200)
    ap.add_argument("--warmup", type=int, default=50)
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--k", type=int, default=15)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    world = Path(args.world)
    ensure_world(world)
    docs = load_dataset(world / "test.jsonl")
    target = LocalTextClassifier.load(world / "model.json")
    counter = load_embeddings(world / "counter_fitted.txt")
    glove = load_embeddings(world / "glove.txt")
    base = AttackConfig.for_method(args.method, n_neighbors=args.n, k_direction=args.k, seed=args.seed)

    t0 = time.perf_counter()
    outputs = run_ablation(docs, target, base, seed=args.seed, counter_store=counter, glove_store=glove, sample_size=args.sample)
    elapsed = time.perf_counter() - t0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = [o.report for o in outputs.values()]
    for label, o in outputs.items():
        slug = label.lstrip("+").lower()
        o.report.save(out / f"report_{slug}.json")
        o.ledger.persist(out / f"ledger_{slug}.jsonl")
    emit_report(reports, out / "ablation.csv", "csv")

    print(f"all {len(docs)} test documents, sample {args.sample}, {elapsed:.0f}s")
    print(emit_report(reports, None, "table"))
    windowed = [window(r, args.warmup, args.sample) for r in reports]
    print(f"\nafter a {args.warmup}-document warm-up")
    print(emit_report(windowed, None, "table"))
    ratio = windowed[-1].avg_queries / windowed[0].avg_queries
    print(f"\n+both / baseline queries: {ratio:.3f}")


if __name__ == "__main__":
    main()
