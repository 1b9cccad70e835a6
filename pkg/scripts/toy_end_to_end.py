"""Train the reference model on the bundled toy set and score it on train and test.

Also reports the untrained-adapter baseline (0 epochs) so the effect of
fine-tuning is visible next to the final numbers.
"""
import argparse
import dataclasses
import logging
import tempfile
import time
from pathlib import Path

from lagamc.catalog import load_catalog, load_dataset
from lagamc.descgen import StubClient, refine_catalog
from lagamc.evalkit import evaluate
from lagamc.matcher import predict_many
from lagamc.promptkit import PromptTemplate, build_records
from lagamc.trainer import TrainConfig, load_artifacts, train_reference

ROOT = Path(__file__).resolve().parents[1]


def score(art_dir, split, catalog, template):
    gen, enc, _ = load_artifacts(art_dir)
    results = predict_many(list(split), gen, enc, catalog, template)
    return evaluate(split, {r.document_id: r.predicted_labels for r in results}, catalog)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--toy", type=Path, default=ROOT / "configs" / "toy")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--baseline", action="store_true", help="also score 0 training epochs")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    train = load_dataset(args.toy / "train.jsonl", name="train")
    test = load_dataset(args.toy / "test.jsonl", name="test")
    catalog = refine_catalog(load_catalog(args.toy / "catalog.json"), train,
                             StubClient.from_file(args.toy / "stub.json"))
    template = PromptTemplate.load(ROOT / "configs" / "templates" / "toy.json")
    records = build_records(list(train), catalog, template)
    base_cfg = TrainConfig.load(args.toy / "train_config.json")

    for seed in args.seeds:
        epochs = [0, base_cfg.epochs] if args.baseline else [base_cfg.epochs]
        for n_epochs in epochs:
            cfg = dataclasses.replace(base_cfg, seed=seed, epochs=n_epochs)
            with tempfile.TemporaryDirectory() as tmp:
                t0 = time.perf_counter()
                train_reference(cfg, records, tmp, catalog)
                tr = score(tmp, train, catalog, template)
                te = score(tmp, test, catalog, template)
                print(f"seed {seed} epochs {n_epochs:2d}  train micro {tr.micro_f1:.3f} macro {tr.macro_f1:.3f}  "
                      f"test micro {te.micro_f1:.3f} macro {te.macro_f1:.3f}  ({time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
