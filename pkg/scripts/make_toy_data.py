"""Regenerate the bundled toy dataset under configs/toy/."""
import argparse
import json
from pathlib import Path

from lagamc.catalog import LabelCatalog, save_catalog, save_dataset
from lagamc.toydata import TOPICS, toy_split


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=Path(__file__).resolve().parents[1] / "configs" / "toy", type=Path)
    ap.add_argument("--labels", type=int, default=4)
    ap.add_argument("--train", type=int, default=50)
    ap.add_argument("--test", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    names = list(TOPICS)[: args.labels]
    # seed catalog: a terse initial description only, the stub supplies the refined one
    seed = LabelCatalog.from_entries(
        {"name": n, "initial_text": TOPICS[n][0].split(",")[0] + ", a topic label.", "source": "seed"}
        for n in names)
    save_catalog(seed, args.out / "catalog.json")
    stub = {"by_label": {n: TOPICS[n][0] for n in names}}
    (args.out / "stub.json").write_text(json.dumps(stub, indent=2) + "\n")
    save_dataset(toy_split("train", args.train, args.labels, args.seed), args.out / "train.jsonl")
    save_dataset(toy_split("test", args.test, args.labels, args.seed), args.out / "test.jsonl")
    print(f"wrote toy data for {len(names)} labels to {args.out}")


if __name__ == "__main__":
    main()
