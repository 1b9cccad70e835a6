"""Mapping generated description sentences to catalog labels.

Similarities are cosines of unit-normalised embeddings, so one matrix product
gives all of them. ``match_sequential`` is a deliberately naive loop kept as
the reference for the batched path.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .catalog import Document, LabelCatalog
from .promptkit import PromptTemplate, build_prompt, split_generated

DEFAULT_THRESHOLD = 0.4


class CatalogMismatch(ValueError):
    pass


def catalog_fingerprint(catalog: LabelCatalog) -> str:
    payload = json.dumps([[d.label.name, d.text] for d in catalog.descriptions], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _unit_rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms == 0, 1.0, norms)


def _embed(enc, texts: Sequence[str]) -> np.ndarray:
    if hasattr(enc, "embed_numpy"):
        return _unit_rows(enc.embed_numpy(texts))
    out = enc.embed(list(texts))
    if hasattr(out, "detach"):
        out = out.detach().cpu().numpy()
    return _unit_rows(out)


@dataclass(frozen=True)
class LabelEmbeddingMatrix:
    matrix: np.ndarray
    catalog_hash: str

    def __len__(self) -> int:
        return self.matrix.shape[0]


@dataclass
class SentenceMatch:
    text: str
    label: int | None
    similarity: float


@dataclass
class MatchResult:
    document_id: str
    sentences: list[SentenceMatch] = field(default_factory=list)
    predicted_labels: list[str] = field(default_factory=list)

    def to_json(self, catalog: LabelCatalog) -> dict:
        return {
            "id": self.document_id,
            "sentences": [
                {"text": s.text,
                 "label": None if s.label is None else catalog.names[s.label],
                 "similarity": s.similarity}
                for s in self.sentences
            ],
            "labels": list(self.predicted_labels),
        }


def embed_catalog(enc, catalog: LabelCatalog) -> LabelEmbeddingMatrix:
    if not len(catalog):
        raise ValueError("cannot embed an empty catalog")
    texts = catalog.target_texts()
    if any(not t.strip() for t in texts):
        raise ValueError("every label needs a description before embedding")
    return LabelEmbeddingMatrix(_embed(enc, texts), catalog_fingerprint(catalog))


def best_labels_batched(sent_emb, label_emb, threshold: float | None = None):
    """Argmax label per sentence from one (sentences x labels) product."""
    s = np.asarray(sent_emb, dtype=np.float64)
    if s.shape[0] == 0:
        return []
    sims = s @ np.asarray(label_emb, dtype=np.float64).T
    best = sims.argmax(axis=1)  # first maximum, i.e. lowest label index on ties
    best_sim = sims[np.arange(len(best)), best]
    out = []
    for idx, sim in zip(best.tolist(), best_sim.tolist()):
        out.append((None if threshold is not None and sim < threshold else idx, sim))
    return out


def best_labels_sequential(sent_emb, label_emb, threshold: float | None = None):
    """Same contract as ``best_labels_batched``, one dot product at a time."""
    s = np.asarray(sent_emb, dtype=np.float64)
    labels = np.asarray(label_emb, dtype=np.float64)
    out = []
    for row in s:
        best, best_sim = 0, -np.inf
        for j in range(labels.shape[0]):
            sim = float(np.dot(row, labels[j]))
            if sim > best_sim:
                best, best_sim = j, sim
        out.append((None if threshold is not None and best_sim < threshold else best, best_sim))
    return out


def match_batch(sentences: Sequence[str], enc, labmat: LabelEmbeddingMatrix,
                threshold: float | None = None):
    if not len(labmat):
        raise ValueError("label matrix is empty")
    if not sentences:
        return []
    return best_labels_batched(_embed(enc, sentences), labmat.matrix, threshold)


def match_sequential(sentences: Sequence[str], enc, labmat: LabelEmbeddingMatrix,
                     threshold: float | None = None):
    if not len(labmat):
        raise ValueError("label matrix is empty")
    if not sentences:
        return []
    return best_labels_sequential(_embed(enc, sentences), labmat.matrix, threshold)


def assemble(document_id: str, sentences: Sequence[str], matches, catalog: LabelCatalog) -> MatchResult:
    result = MatchResult(document_id)
    seen = set()
    for text, (idx, sim) in zip(sentences, matches):
        result.sentences.append(SentenceMatch(text, idx, sim))
        if idx is not None and idx not in seen:
            seen.add(idx)
            result.predicted_labels.append(catalog.names[idx])
    return result


def predict_many(docs: Sequence[Document], gen, enc, catalog: LabelCatalog, template: PromptTemplate,
                 threshold: float | None = None, labmat: LabelEmbeddingMatrix | None = None,
                 batch_size: int = 16) -> list[MatchResult]:
    """Generate, split and match for every document."""
    if labmat is None:
        labmat = embed_catalog(enc, catalog)
    elif labmat.catalog_hash != catalog_fingerprint(catalog):
        raise CatalogMismatch("label embedding matrix was built from a different catalog")
    results = []
    for start in range(0, len(docs), batch_size):
        chunk = docs[start:start + batch_size]
        prompts = [build_prompt(template, d) for d in chunk]
        try:
            generations = gen.generate(prompts)
        except Exception as exc:
            ids = ", ".join(d.id for d in chunk)
            raise RuntimeError(f"generation failed for documents {ids}: {exc}") from exc
        for doc, text in zip(chunk, generations):
            sentences = split_generated(text)
            matches = match_batch(sentences, enc, labmat, threshold) if sentences else []
            results.append(assemble(doc.id, sentences, matches, catalog))
    return results


def predict(doc: Document, gen, enc, catalog: LabelCatalog, template: PromptTemplate,
            threshold: float | None = None, labmat: LabelEmbeddingMatrix | None = None) -> MatchResult:
    return predict_many([doc], gen, enc, catalog, template, threshold, labmat)[0]


def benchmark(n_sentences: int, n_labels: int, dim: int, seed: int = 0, repeats: int = 1) -> dict:
    """Time the batched and sequential paths on random unit vectors."""
    rng = np.random.default_rng(seed)
    sents = _unit_rows(rng.standard_normal((n_sentences, dim)))
    labels = _unit_rows(rng.standard_normal((n_labels, dim)))

    def timed(fn):
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            res = fn(sents, labels)
            best = min(best, time.perf_counter() - t0)
        return best, res

    t_batch, r_batch = timed(best_labels_batched)
    t_seq, r_seq = timed(best_labels_sequential)
    agree = all(a[0] == b[0] and abs(a[1] - b[1]) <= 1e-6 for a, b in zip(r_batch, r_seq))
    return {
        "sentences": n_sentences,
        "labels": n_labels,
        "dim": dim,
        "batched_seconds": t_batch,
        "sequential_seconds": t_seq,
        "speedup": t_seq / t_batch if t_batch > 0 else float("inf"),
        "outputs_agree": agree,
    }
