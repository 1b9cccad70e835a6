"""Datasets, label catalogs and their on-disk formats.

Datasets are JSONL (one ``{"id", "text", "labels"}`` object per line) and
catalogs are a single JSON object ``{"labels": [...]}`` whose array order is
the catalog order.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

SPLIT_NAMES = ("train", "dev", "test", "other")
SOURCES = ("seed", "refined", "manual")

DEFAULT_SCHEMA = {"id": "id", "text": "text", "labels": "labels"}


class DatasetError(ValueError):
    """Raised for unreadable or inconsistent dataset and catalog files."""


@dataclass(frozen=True)
class Label:
    name: str
    index: int

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise DatasetError("label name must be non-empty")


@dataclass(frozen=True)
class LabelDescription:
    label: Label
    initial_text: str = ""
    refined_text: str = ""
    source: str = "seed"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DatasetError(f"unknown description source {self.source!r}")

    @property
    def text(self) -> str:
        """The description used as a generation target (refined, else initial)."""
        return self.refined_text or self.initial_text


@dataclass(frozen=True)
class LabelCatalog:
    labels: tuple[Label, ...]
    descriptions: tuple[LabelDescription, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.descriptions):
            raise DatasetError("catalog needs exactly one description per label")
        seen = set()
        for i, (lab, desc) in enumerate(zip(self.labels, self.descriptions)):
            if lab.index != i:
                raise DatasetError(f"label {lab.name!r} has index {lab.index}, expected {i}")
            if desc.label != lab:
                raise DatasetError(f"description at position {i} belongs to {desc.label.name!r}")
            if lab.name in seen:
                raise DatasetError(f"duplicate label {lab.name!r}")
            seen.add(lab.name)
        object.__setattr__(self, "_index", {lab.name: lab.index for lab in self.labels})

    @classmethod
    def from_entries(cls, entries: Iterable[Mapping]) -> "LabelCatalog":
        labels, descs = [], []
        for i, entry in enumerate(entries):
            lab = Label(str(entry["name"]).strip(), i)
            labels.append(lab)
            descs.append(
                LabelDescription(
                    lab,
                    initial_text=entry.get("initial_text", "") or "",
                    refined_text=entry.get("refined_text", "") or "",
                    source=entry.get("source", "seed") or "seed",
                )
            )
        return cls(tuple(labels), tuple(descs))

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    @property
    def names(self) -> list[str]:
        return [lab.name for lab in self.labels]

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"label {name!r} not in catalog") from None

    def description(self, name: str) -> LabelDescription:
        return self.descriptions[self.index_of(name)]

    def target_texts(self) -> list[str]:
        return [d.text for d in self.descriptions]

    def with_descriptions(self, descriptions: Sequence[LabelDescription]) -> "LabelCatalog":
        return LabelCatalog(self.labels, tuple(descriptions))

    def subset(self, names: Iterable[str]) -> "LabelCatalog":
        """Catalog restricted to ``names``, kept in this catalog's order and re-indexed."""
        keep = set(names)
        return LabelCatalog.from_entries(
            _entry(d) for d in self.descriptions if d.label.name in keep
        )

    def reordered(self, names: Sequence[str]) -> "LabelCatalog":
        if sorted(names) != sorted(self.names):
            raise DatasetError("reordering must be a permutation of the catalog labels")
        return LabelCatalog.from_entries(_entry(self.description(n)) for n in names)

    def to_json(self) -> dict:
        return {"labels": [_entry(d) for d in self.descriptions]}


def _entry(desc: LabelDescription) -> dict:
    return {
        "name": desc.label.name,
        "initial_text": desc.initial_text,
        "refined_text": desc.refined_text,
        "source": desc.source,
    }


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    gold_labels: tuple[str, ...] = ()

    @property
    def label_set(self) -> frozenset[str]:
        return frozenset(self.gold_labels)


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    documents: tuple[Document, ...]

    def __post_init__(self):
        if self.name not in SPLIT_NAMES:
            raise DatasetError(f"unknown split name {self.name!r}")

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self.documents]

    def label_counts(self) -> Counter:
        return Counter(lab for d in self.documents for lab in d.label_set)


@dataclass(frozen=True)
class DatasetStats:
    n_train: int
    n_dev: int
    n_test: int
    n_labels: int
    max_labels_per_sample: int
    avg_desc_length: float

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Issue:
    kind: str  # unknown_label | empty_text | empty_labels
    document_id: str
    detail: str = ""


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.issues)

    def __len__(self) -> int:
        return len(self.issues)

    def of_kind(self, kind: str) -> list[Issue]:
        return [i for i in self.issues if i.kind == kind]


def _split_name_for(path: Path) -> str:
    stem = path.stem.lower()
    for name in ("train", "dev", "test"):
        if name in stem:
            return name
    return "other"


def load_dataset(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    name: str | None = None,
) -> DatasetSplit:
    """Read a JSONL dataset, preserving file order.

    ``schema`` maps the canonical field names ``id``, ``text`` and ``labels``
    to the names used in the file. The split name is guessed from the file
    name when not given.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    fields = {**DEFAULT_SCHEMA, **(schema or {})}
    docs: list[Document] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc_id = str(rec[fields["id"]])
                text = rec[fields["text"]]
                labels = rec[fields["labels"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed record ({exc})") from None
            if not isinstance(text, str) or not isinstance(labels, list):
                raise DatasetError(f"{path}:{lineno}: text must be a string and labels a list")
            if doc_id in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate id {doc_id!r}")
            seen.add(doc_id)
            docs.append(Document(doc_id, text, tuple(str(lab).strip() for lab in labels)))
    return DatasetSplit(name or _split_name_for(path), tuple(docs))


def save_dataset(split: DatasetSplit, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for doc in split.documents:
            rec = {"id": doc.id, "text": doc.text, "labels": list(doc.gold_labels)}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_catalog(path: str | Path) -> LabelCatalog:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"catalog file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        entries = data["labels"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"{path}: malformed catalog ({exc})") from None
    return LabelCatalog.from_entries(entries)


def save_catalog(catalog: LabelCatalog, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(catalog.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def compute_stats(
    train: DatasetSplit,
    dev: DatasetSplit | None,
    test: DatasetSplit | None,
    catalog: LabelCatalog,
) -> DatasetStats:
    if not len(catalog):
        raise DatasetError("catalog is empty")
    splits = [s for s in (train, dev, test) if s is not None]
    max_labels = max((len(d.label_set) for s in splits for d in s), default=0)
    lengths = [len(t.split()) for t in catalog.target_texts() if t.strip()]
    return DatasetStats(
        n_train=len(train),
        n_dev=len(dev) if dev is not None else 0,
        n_test=len(test) if test is not None else 0,
        n_labels=len(catalog),
        max_labels_per_sample=max_labels,
        avg_desc_length=math.fsum(lengths) / len(lengths) if lengths else 0.0,
    )


def validate(split: DatasetSplit, catalog: LabelCatalog) -> ValidationReport:
    report = ValidationReport()
    for doc in split:
        if not doc.text.strip():
            report.issues.append(Issue("empty_text", doc.id))
        if not doc.gold_labels:
            report.issues.append(Issue("empty_labels", doc.id))
        for lab in doc.gold_labels:
            if lab not in catalog:
                report.issues.append(Issue("unknown_label", doc.id, lab))
    return report


def with_documents(split: DatasetSplit, documents: Iterable[Document]) -> DatasetSplit:
    return replace(split, documents=tuple(documents))
