"""Write the synthetic corpus, vector files and a trained local target.

    python3 scripts/make_world.py --out runs/world
"""
import argparse
from pathlib import Path

from fewquery.bench import dataset_summary, load_dataset
from fewquery.synthetic import WorldConfig, write_world
from fewquery.target import TrainConfig, train_local_target


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/world")
    ap.add_argument("--n-train", type=int, default=2000)
    ap.add_argument("--n-test", type=int, default=500)
    ap.add_argument("--world-seed", type=int, default=7)
    ap.add_argument("--train-seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    paths = write_world(out, args.n_train, args.n_test, WorldConfig(seed=args.world_seed))
    train = load_dataset(paths["train"])
    test = load_dataset(paths["test"])
    print("train:", dataset_summary(train))
    print("test: ", dataset_summary(test))

    model = train_local_target(train, TrainConfig(seed=args.train_seed))
    model.save(out / "model.json")
    test_acc = sum(model.predict(d.tokens).label == d.gold_label for d in test) / len(test)
    print(f"target: train accuracy {model.train_accuracy:.4f}, test accuracy {test_acc:.4f}")
    print(f"wrote {', '.join(str(p) for p in paths.values())}, {out / 'model.json'}")


if __name__ == "__main__":
    main()
