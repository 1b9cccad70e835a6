"""``lagamc`` command-line interface.

Exit codes: 0 success, 2 invalid input or configuration, 3 stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import catalog as cat
from . import descgen, evalkit, matcher, pipeline, promptkit
from .trainer import TrainConfig, load_artifacts, train_reference

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3

REFERENCE_TIMINGS = {"sentences": 10000, "labels": 1000, "dim": 1024,
               "batched_seconds": 0.089, "sequential_seconds": 0.354}


def _dump(obj, out: str | None = None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_stats(args) -> int:
    catalog = cat.load_catalog(args.catalog)
    train = cat.load_dataset(args.train, name="train")
    dev = cat.load_dataset(args.dev, name="dev") if args.dev else None
    test = cat.load_dataset(args.test, name="test") if args.test else None
    _dump(cat.compute_stats(train, dev, test, catalog).to_json())
    return EXIT_OK


def cmd_prepare(args) -> int:
    catalog = cat.load_catalog(args.catalog)
    train = cat.load_dataset(args.train, name="train")
    if args.offline_stub:
        client = descgen.StubClient.from_file(args.offline_stub)
    elif args.endpoint and args.model:
        client = descgen.ChatCompletionsClient(args.endpoint, args.model)
    else:
        print("either --offline-stub or both --endpoint and --model are required", file=sys.stderr)
        return EXIT_INVALID
    stats = descgen.RefineStats()
    refined = descgen.refine_catalog(
        catalog, train, client, k=args.k, seed=args.seed, dataset_blurb=args.dataset_blurb,
        item_name=args.item_name, max_concurrency=args.concurrency, stats=stats,
    )
    cat.save_catalog(refined, args.out)
    for w in promptkit.lint_catalog(refined):
        print(f"warning: {w}", file=sys.stderr)
    if stats.fallbacks:
        print(f"warning: kept seed descriptions for {', '.join(stats.fallbacks)}", file=sys.stderr)
    return EXIT_OK


def cmd_build_prompts(args) -> int:
    catalog = cat.load_catalog(args.catalog)
    template = promptkit.PromptTemplate.load(args.template)
    split = cat.load_dataset(args.train)
    unknown = pipeline.validate_unknown(split, catalog)
    if unknown:
        print(f"labels missing from catalog: {unknown}", file=sys.stderr)
        return EXIT_INVALID
    for w in promptkit.lint_catalog(catalog):
        print(f"warning: {w}", file=sys.stderr)
    records = promptkit.build_records(split, catalog, template, args.max_target_tokens)
    promptkit.save_records(records, args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    config = TrainConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    records = promptkit.load_records(args.prompts)
    records = [r for r in records if r.target is not None]
    catalog = cat.load_catalog(args.catalog) if args.catalog else None
    arts = train_reference(config, records, args.out_dir, catalog)
    if args.template:
        promptkit.PromptTemplate.load(args.template).save(Path(args.out_dir) / "template.json")
    _dump({"epochs": len(arts.log), "lambda": arts.lambda_value,
           "final_hybrid": arts.log[-1].hybrid if arts.log else None})
    return EXIT_OK


def cmd_predict(args) -> int:
    gen, enc, _ = load_artifacts(args.artifacts)
    template_path = Path(args.template) if args.template else Path(args.artifacts) / "template.json"
    if not template_path.exists():
        print("no prompt template: pass --template", file=sys.stderr)
        return EXIT_INVALID
    catalog = cat.load_catalog(args.catalog)
    docs = list(cat.load_dataset(args.input))
    results = matcher.predict_many(docs, gen, enc, catalog, promptkit.PromptTemplate.load(template_path),
                                   args.threshold)
    pipeline.write_predictions(results, catalog, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    result = matcher.benchmark(args.sentences, args.labels, args.dim, seed=args.seed or 0, repeats=args.repeats)
    result["reference_timings"] = REFERENCE_TIMINGS
    _dump(result, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    catalog = cat.load_catalog(args.catalog)
    gold = cat.load_dataset(args.gold, name="test")
    preds = evalkit.load_predictions(args.pred)
    train = cat.load_dataset(args.train, name="train") if args.train else None
    report = evalkit.evaluate(gold, preds, catalog, train, args.rare, args.buckets, args.max_k)
    pipeline.write_report(report, args.out)
    print(f"micro_f1 {report.micro_f1:.4f}\nmacro_f1 {report.macro_f1:.4f}")
    return EXIT_OK


def cmd_split_zeroshot(args) -> int:
    catalog = cat.load_catalog(args.catalog)
    train = cat.load_dataset(args.train, name="train")
    test = cat.load_dataset(args.test, name="test")
    new_train, new_test, unseen = evalkit.zero_shot_split(train, test, catalog, args.n, args.seed or 0)
    out = Path(args.out_dir)
    cat.save_dataset(new_train, out / "train.jsonl")
    cat.save_dataset(new_test, out / "test.jsonl")
    _dump({"unseen": unseen, "n_train": len(new_train), "n_removed": len(train) - len(new_train)},
          out / "unseen.json")
    return EXIT_OK


def cmd_run(args) -> int:
    run_dir = args.run_dir or Path(args.config).with_suffix("").name + "-run"
    pipeline.run_pipeline(args.config, run_dir, force=args.force, until=args.until, seed=args.seed)
    code, text = pipeline.inspect(run_dir)
    print(text)
    return code


def cmd_inspect(args) -> int:
    code, text = pipeline.inspect(args.run_dir)
    print(text, file=sys.stdout if code == 0 else sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lagamc", description="Generative multi-label text classification.")
    p.add_argument("--seed", type=int, default=None, help="override the seed of the command")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("stats", help="dataset statistics as JSON")
    s.add_argument("--train", required=True)
    s.add_argument("--dev")
    s.add_argument("--test")
    s.add_argument("--catalog", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("prepare-descriptions", help="refine seed label descriptions")
    s.add_argument("--catalog", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--offline-stub")
    s.add_argument("--endpoint")
    s.add_argument("--model")
    s.add_argument("--dataset-blurb", default="")
    s.add_argument("--item-name", default="Text")
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--concurrency", type=int, default=4)
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("build-prompts", help="write prompt/target records as JSONL")
    s.add_argument("--train", required=True)
    s.add_argument("--catalog", required=True)
    s.add_argument("--template", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--max-target-tokens", type=int)
    s.set_defaults(func=cmd_build_prompts)

    s = sub.add_parser("train", help="train the reference generator and encoder")
    s.add_argument("--config", required=True)
    s.add_argument("--prompts", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--catalog", help="include every catalog description in the vocabulary")
    s.add_argument("--template", help="store the prompt template with the artifacts")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="generate and match labels for a dataset")
    s.add_argument("--artifacts", required=True)
    s.add_argument("--catalog", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--template")
    s.add_argument("--threshold", type=float, nargs="?", const=matcher.DEFAULT_THRESHOLD, default=None)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("bench-matcher", help="time batched vs sequential matching")
    s.add_argument("--sentences", type=int, default=10000)
    s.add_argument("--labels", type=int, default=1000)
    s.add_argument("--dim", type=int, default=1024)
    s.add_argument("--repeats", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("evaluate", help="Micro/Macro-F1 and analysis slices")
    s.add_argument("--gold", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--catalog", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--train", help="training split, needed for the rare-label slice")
    s.add_argument("--rare", type=float, default=0.15)
    s.add_argument("--buckets", type=int, default=4)
    s.add_argument("--max-k", type=int, default=5)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("split-zeroshot", help="hold out labels from training")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--catalog", required=True)
    s.add_argument("--n", type=int, default=4)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_split_zeroshot)

    s = sub.add_parser("run", help="run or resume the whole pipeline")
    s.add_argument("config")
    s.add_argument("--run-dir")
    s.add_argument("--force", action="store_true")
    s.add_argument("--until", choices=pipeline.STAGES)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("inspect", help="summarise a run directory")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "split-zeroshot" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except pipeline.StageFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (pipeline.ConfigError, cat.DatasetError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (descgen.GenerationError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
