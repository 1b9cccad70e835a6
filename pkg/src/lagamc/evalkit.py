"""Micro/Macro-F1 and the slice analyses used to study a prediction run."""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .catalog import DatasetSplit, LabelCatalog, with_documents
from .promptkit import build_target


@dataclass
class PredictionSet:
    """Aligned gold and predicted label sets keyed by document id."""

    gold: dict[str, frozenset[str]]
    pred: dict[str, frozenset[str]]

    def __post_init__(self):
        if set(self.gold) != set(self.pred):
            missing = sorted(set(self.gold) ^ set(self.pred))[:5]
            raise ValueError(f"gold and predictions cover different documents, e.g. {missing}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, Iterable[str], Iterable[str]]]) -> "PredictionSet":
        gold, pred = {}, {}
        for doc_id, g, p in pairs:
            gold[doc_id] = frozenset(g)
            pred[doc_id] = frozenset(p)
        return cls(gold, pred)

    @classmethod
    def from_split(cls, split: DatasetSplit, predictions: Mapping[str, Iterable[str]]) -> "PredictionSet":
        return cls(
            {d.id: d.label_set for d in split},
            {d.id: frozenset(predictions.get(d.id, ())) for d in split},
        )

    @property
    def ids(self) -> list[str]:
        return list(self.gold)

    def restrict(self, ids: Iterable[str]) -> "PredictionSet":
        ids = list(ids)
        return PredictionSet({i: self.gold[i] for i in ids}, {i: self.pred[i] for i in ids})


@dataclass
class LabelScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


@dataclass
class EvalReport:
    micro_f1: float
    macro_f1: float
    per_label: dict[str, LabelScore]
    n_documents: int = 0
    slices: dict[str, object] = field(default_factory=dict)
    label_count_table: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        out = {
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "n_documents": self.n_documents,
            "per_label": {
                name: {"tp": s.tp, "fp": s.fp, "fn": s.fn, "f1": s.f1}
                for name, s in self.per_label.items()
            },
        }
        if self.slices:
            out["slices"] = self.slices
        if self.label_count_table:
            out["label_count_table"] = self.label_count_table
        return out


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    return LabelScore(tp, fp, fn).f1


def compute_f1(preds: PredictionSet, catalog: LabelCatalog,
               labels: Sequence[str] | None = None) -> EvalReport:
    """Micro-F1 over pooled counts, Macro-F1 as the plain mean over ``labels``.

    ``labels`` defaults to the whole catalog; a label with no gold or
    predicted occurrence scores 0.
    """
    labels = list(catalog.names if labels is None else labels)
    per_label = {name: LabelScore() for name in catalog.names}
    for doc_id, gold in preds.gold.items():
        pred = preds.pred[doc_id]
        for name in gold | pred:
            if name not in per_label:
                raise ValueError(f"label {name!r} in document {doc_id!r} is not in the catalog")
            score = per_label[name]
            if name in gold and name in pred:
                score.tp += 1
            elif name in pred:
                score.fp += 1
            else:
                score.fn += 1
    chosen = {name: per_label[name] for name in labels}
    tp = sum(s.tp for s in chosen.values())
    fp = sum(s.fp for s in chosen.values())
    fn = sum(s.fn for s in chosen.values())
    macro = math.fsum(s.f1 for s in chosen.values()) / len(chosen) if chosen else 0.0
    return EvalReport(f1_from_counts(tp, fp, fn), macro, chosen, len(preds.gold))


def rare_labels(train: DatasetSplit, catalog: LabelCatalog, fraction: float = 0.15) -> list[str]:
    """The ``ceil(fraction * p)`` least frequent training labels, ties by catalog index."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    counts = train.label_counts()
    size = math.ceil(fraction * len(catalog))
    ranked = sorted(catalog.names, key=lambda n: (counts.get(n, 0), catalog.index_of(n)))
    return ranked[:size]


def rare_label_slice(train: DatasetSplit, test_preds: PredictionSet, catalog: LabelCatalog,
                     fraction: float = 0.15) -> dict:
    """Macro-F1 over the rare labels, on test documents whose gold set touches them."""
    rare = rare_labels(train, catalog, fraction)
    rare_set = set(rare)
    ids = [i for i, gold in test_preds.gold.items() if gold & rare_set]
    out = {"fraction": fraction, "labels": rare, "n_documents": len(ids)}
    if not ids:
        out.update(empty=True, macro_f1=None, micro_f1=None)
        return out
    report = compute_f1(test_preds.restrict(ids), catalog, labels=rare)
    out.update(empty=False, macro_f1=report.macro_f1, micro_f1=report.micro_f1)
    return out


def zero_shot_split(train: DatasetSplit, test: DatasetSplit, catalog: LabelCatalog,
                    n_unseen: int, seed: int = 0) -> tuple[DatasetSplit, DatasetSplit, list[str]]:
    """Hold out ``n_unseen`` labels by dropping every training document that carries one."""
    if n_unseen < 0 or n_unseen >= len(catalog):
        raise ValueError("n_unseen must satisfy 0 <= n_unseen < number of labels")
    if n_unseen == 0:
        return train, test, []
    in_test = test.label_counts()
    candidates = [n for n in catalog.names if in_test.get(n, 0) > 0]
    if len(candidates) < n_unseen:
        raise ValueError(f"only {len(candidates)} labels occur in test; cannot hold out {n_unseen}")
    rng = random.Random(seed)
    unseen = sorted(rng.sample(candidates, n_unseen), key=catalog.index_of)
    unseen_set = set(unseen)
    kept = [d for d in train if not (d.label_set & unseen_set)]
    if not kept:
        raise ValueError("holding out these labels removes every training document")
    return with_documents(train, kept), test, unseen


def length_buckets(test: DatasetSplit, test_preds: PredictionSet, catalog: LabelCatalog,
                   n_buckets: int = 4) -> list[dict]:
    """Scores per bucket of test documents ranked by gold target length."""
    if n_buckets < 1:
        raise ValueError("n_buckets must be >= 1")
    docs = [d for d in test if d.id in test_preds.gold]
    lengths = {d.id: len(build_target(d, catalog).split()) if d.gold_labels else 0 for d in docs}
    ranked = sorted(lengths, key=lambda i: (lengths[i], i))
    base, extra = divmod(len(ranked), n_buckets)
    buckets, start = [], 0
    for b in range(n_buckets):
        size = base + (1 if b < extra else 0)
        ids = ranked[start:start + size]
        start += size
        entry = {"bucket": b, "n_documents": len(ids)}
        if ids:
            rep = compute_f1(test_preds.restrict(ids), catalog)
            entry.update(
                mean_length=math.fsum(lengths[i] for i in ids) / len(ids),
                micro_f1=rep.micro_f1,
                macro_f1=rep.macro_f1,
            )
        buckets.append(entry)
    return buckets


def label_count_table(test_preds: PredictionSet, max_k: int = 5) -> dict:
    """Documents with exactly k gold / k predicted labels for k = 1..max_k."""
    if max_k < 1:
        raise ValueError("max_k must be >= 1")
    rows = [{"k": k, "n_actual": 0, "n_predicted": 0} for k in range(1, max_k + 1)]
    tallies = {"empty_gold": 0, "empty_predictions": 0, "gold_above_max": 0, "predicted_above_max": 0}
    for doc_id, gold in test_preds.gold.items():
        for size, key, empty_key, above_key in (
            (len(gold), "n_actual", "empty_gold", "gold_above_max"),
            (len(test_preds.pred[doc_id]), "n_predicted", "empty_predictions", "predicted_above_max"),
        ):
            if size == 0:
                tallies[empty_key] += 1
            elif size > max_k:
                tallies[above_key] += 1
            else:
                rows[size - 1][key] += 1
    return {"rows": rows, **tallies}


def evaluate(test: DatasetSplit, predictions: Mapping[str, Iterable[str]], catalog: LabelCatalog,
             train: DatasetSplit | None = None, rare_fraction: float = 0.15,
             n_buckets: int = 4, max_k: int = 5) -> EvalReport:
    preds = PredictionSet.from_split(test, predictions)
    report = compute_f1(preds, catalog)
    if train is not None:
        report.slices["rare"] = rare_label_slice(train, preds, catalog, rare_fraction)
    report.slices["length_buckets"] = length_buckets(test, preds, catalog, n_buckets)
    table = label_count_table(preds, max_k)
    report.label_count_table = table["rows"]
    report.slices["label_count_tallies"] = {k: v for k, v in table.items() if k != "rows"}
    return report


def load_predictions(path: str | Path) -> dict[str, list[str]]:
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[str(rec["id"])] = list(rec["labels"])
    return out
