"""Prompt and target construction, and splitting of generated text."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

from .catalog import DatasetError, Document, LabelCatalog

log = logging.getLogger(__name__)

# A sentence ends at a period followed by whitespace or the end of the text.
_BOUNDARY = re.compile(r"\.(?:\s+|$)")
_INTERNAL_BOUNDARY = re.compile(r"\.\s+\S")


@dataclass(frozen=True)
class PromptTemplate:
    instruction: str
    task_name: str = "Multi-label Text Classification"
    task_description: str = "Generate label description for the given texts."
    separator: str = "\n"

    def __post_init__(self):
        if not self.instruction.strip():
            raise ValueError("template instruction must be non-empty")
        if not self.task_description.strip():
            raise ValueError("template task_description must be non-empty")

    @classmethod
    def load(cls, path: str | Path) -> "PromptTemplate":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class PromptRecord:
    document_id: str
    prompt: str
    target: str | None = None

    def to_json(self) -> dict:
        return {"id": self.document_id, "prompt": self.prompt, "target": self.target}

    @classmethod
    def from_json(cls, rec: dict) -> "PromptRecord":
        return cls(str(rec["id"]), rec["prompt"], rec.get("target"))


def build_prompt(template: PromptTemplate, doc: Document) -> str:
    if not doc.text.strip():
        raise ValueError(f"document {doc.id!r} has empty text")
    parts = [
        "Instruction: " + template.instruction,
        "Task: " + template.task_name,
        "Description: " + template.task_description,
        doc.text,
    ]
    return template.separator.join(parts)


def _terminate(description: str) -> str:
    return description.strip().rstrip(".").rstrip() + "."


def build_target(doc: Document, catalog: LabelCatalog, max_tokens: int | None = None) -> str:
    """Concatenate the gold labels' descriptions in catalog order.

    Each description ends in exactly one period. ``max_tokens`` caps the
    whitespace-token length; truncation is logged, never silent.
    """
    unknown = [lab for lab in doc.gold_labels if lab not in catalog]
    if unknown:
        raise DatasetError(f"document {doc.id!r} has labels not in catalog: {unknown}")
    order = sorted(doc.label_set, key=catalog.index_of)
    target = " ".join(_terminate(catalog.description(lab).text) for lab in order)
    if max_tokens is not None:
        words = target.split()
        if len(words) > max_tokens:
            log.warning(
                "target for %s truncated from %d to %d tokens", doc.id, len(words), max_tokens
            )
            target = " ".join(words[:max_tokens])
    return target


def split_generated(text: str) -> list[str]:
    pieces = (p.strip() for p in _BOUNDARY.split(text))
    return [p + "." for p in pieces if p]


def lint_catalog(catalog: LabelCatalog) -> list[str]:
    """Warn about descriptions the sentence splitter would cut in two."""
    warnings = []
    for desc in catalog.descriptions:
        body = desc.text.strip()
        if _INTERNAL_BOUNDARY.search(body):
            warnings.append(
                f"description of {desc.label.name!r} contains an internal sentence boundary"
            )
        if not body:
            warnings.append(f"description of {desc.label.name!r} is empty")
    for w in warnings:
        log.warning(w)
    return warnings


def build_records(
    docs: Iterable[Document],
    catalog: LabelCatalog,
    template: PromptTemplate,
    max_target_tokens: int | None = None,
) -> list[PromptRecord]:
    records = []
    for doc in docs:
        target = build_target(doc, catalog, max_target_tokens) if doc.gold_labels else None
        records.append(PromptRecord(doc.id, build_prompt(template, doc), target))
    return records


def save_records(records: Iterable[PromptRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


def load_records(path: str | Path) -> list[PromptRecord]:
    with Path(path).open(encoding="utf-8") as fh:
        return [PromptRecord.from_json(json.loads(line)) for line in fh if line.strip()]
