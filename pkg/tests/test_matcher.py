import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lagamc.catalog import Document, LabelCatalog
from lagamc.matcher import (
    DEFAULT_THRESHOLD,
    CatalogMismatch,
    assemble,
    best_labels_batched,
    best_labels_sequential,
    benchmark,
    catalog_fingerprint,
    embed_catalog,
    match_batch,
    match_sequential,
    predict,
    predict_many,
)
from lagamc.promptkit import PromptTemplate


class TableEncoder:
    """Looks sentences up in a fixed table; anything unknown maps to ``fallback``."""

    def __init__(self, table, fallback=None):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.fallback = fallback

    def embed_numpy(self, texts):
        rows = []
        for t in texts:
            v = self.table.get(t)
            if v is None:
                v = np.asarray(self.fallback, dtype=float)
            rows.append(v / np.linalg.norm(v))
        return np.stack(rows)


class FixedGenerator:
    def __init__(self, outputs):
        self.outputs = outputs

    def generate(self, prompts, max_new_tokens=None):
        return [self.outputs[p.rsplit("\n", 1)[-1]] for p in prompts]


@pytest.fixture
def catalog():
    return LabelCatalog.from_entries([
        {"name": "Anger", "refined_text": "Anger is rage."},
        {"name": "Joy", "refined_text": "Joy is delight."},
        {"name": "Fear", "refined_text": "Fear is dread."},
    ])


@pytest.fixture
def encoder():
    return TableEncoder({
        "Anger is rage.": [1, 0, 0],
        "Joy is delight.": [0, 1, 0],
        "Fear is dread.": [0, 0, 1],
        "Quite angry.": [0.9, 0.3, 0.1],
        "Happy stuff.": [0.2, 1.0, 0.0],
        "Unrelated noise.": [0.3, 0.3, 0.3],
        "Spaceships.": [-1, -1, -1],
    })


@pytest.fixture
def template():
    return PromptTemplate("Describe the text.")


def test_self_match(catalog, encoder):
    labmat = embed_catalog(encoder, catalog)
    matches = match_batch(catalog.target_texts(), encoder, labmat)
    assert [m[0] for m in matches] == [0, 1, 2]
    assert all(m[1] == pytest.approx(1.0, abs=1e-6) for m in matches)


def test_nearest_label(catalog, encoder):
    labmat = embed_catalog(encoder, catalog)
    assert [m[0] for m in match_batch(["Quite angry.", "Happy stuff."], encoder, labmat)] == [0, 1]


def test_threshold_rejects(catalog, encoder):
    labmat = embed_catalog(encoder, catalog)
    # cosine of (-1,-1,-1) with any axis is -1/sqrt(3)
    [(idx, sim)] = match_batch(["Spaceships."], encoder, labmat, threshold=DEFAULT_THRESHOLD)
    assert idx is None and sim == pytest.approx(-1 / np.sqrt(3))
    [(idx, _)] = match_batch(["Spaceships."], encoder, labmat)
    assert idx is not None


def test_threshold_boundary_is_inclusive():
    labels = np.eye(2)
    sents = np.array([[0.4, np.sqrt(1 - 0.16)]])
    assert best_labels_batched(sents, labels, threshold=0.9)[0][0] == 1
    assert best_labels_batched(sents, labels, threshold=0.95)[0][0] is None


def test_ties_go_to_lowest_index():
    labels = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    sents = np.array([[1.0, 0.0]])
    assert best_labels_batched(sents, labels)[0][0] == 0
    assert best_labels_sequential(sents, labels)[0][0] == 0


def test_empty_sentences(catalog, encoder):
    labmat = embed_catalog(encoder, catalog)
    assert match_batch([], encoder, labmat) == []
    assert match_sequential([], encoder, labmat) == []
    result = assemble("d", [], [], catalog)
    assert result.predicted_labels == [] and result.sentences == []


def test_empty_catalog_rejected(encoder):
    with pytest.raises(ValueError):
        embed_catalog(encoder, LabelCatalog.from_entries([]))


def test_duplicate_sentences_deduplicated(catalog, encoder):
    labmat = embed_catalog(encoder, catalog)
    sents = ["Quite angry.", "Happy stuff.", "Anger is rage."]
    result = assemble("d", sents, match_batch(sents, encoder, labmat), catalog)
    assert result.predicted_labels == ["Anger", "Joy"]
    assert len(result.sentences) == 3


def test_hallucinated_sentence_still_maps(catalog, encoder, template):
    gen = FixedGenerator({"doc text": "Unrelated noise."})
    result = predict(Document("d1", "doc text"), gen, encoder, catalog, template)
    assert result.predicted_labels == ["Anger"]  # all cosines equal, lowest index wins
    result = predict(Document("d1", "doc text"), gen, encoder, catalog, template, threshold=0.9)
    assert result.predicted_labels == []


def test_predict_many_end_to_end(catalog, encoder, template):
    gen = FixedGenerator({"a": "Quite angry. Fear is dread.", "b": "", "c": "Happy stuff"})
    docs = [Document("1", "a"), Document("2", "b"), Document("3", "c")]
    results = predict_many(docs, gen, encoder, catalog, template, batch_size=2)
    assert [r.predicted_labels for r in results] == [["Anger", "Fear"], [], ["Joy"]]
    js = results[0].to_json(catalog)
    assert js["id"] == "1" and js["sentences"][1]["label"] == "Fear"


def test_generation_error_names_documents(catalog, encoder, template):
    class Broken:
        def generate(self, prompts, max_new_tokens=None):
            raise OSError("device lost")

    with pytest.raises(RuntimeError, match="x1, x2"):
        predict_many([Document("x1", "a"), Document("x2", "b")], Broken(), encoder, catalog, template)


def test_fingerprint_guard(catalog, encoder, template):
    labmat = embed_catalog(encoder, catalog)
    other = catalog.reordered(["Joy", "Anger", "Fear"])
    assert catalog_fingerprint(other) != catalog_fingerprint(catalog)
    gen = FixedGenerator({"a": "Quite angry."})
    with pytest.raises(CatalogMismatch):
        predict_many([Document("1", "a")], gen, encoder, other, template, labmat=labmat)


unit_rows = arrays(np.float64, st.tuples(st.integers(1, 6), st.just(4)),
                   elements=st.floats(-3, 3, allow_nan=False)).filter(
    lambda a: (np.linalg.norm(a, axis=1) > 1e-3).all())


def normalise(a):
    return a / np.linalg.norm(a, axis=1, keepdims=True)


@settings(max_examples=100, deadline=None)
@given(unit_rows, unit_rows)
def test_batched_equals_sequential(sents, labels):
    s, l = normalise(sents), normalise(labels)
    a, b = best_labels_batched(s, l), best_labels_sequential(s, l)
    for row, (ia, sa), (ib, sb) in zip(s, a, b):
        assert sa == pytest.approx(sb, abs=1e-12)
        # indices may differ only between candidates tied up to rounding
        assert float(np.dot(row, l[ib])) == pytest.approx(float(np.dot(row, l[ia])), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(unit_rows, unit_rows, st.floats(-1, 1), st.floats(-1, 1))
def test_threshold_monotone(sents, labels, t1, t2):
    lo, hi = sorted((t1, t2))
    s, l = normalise(sents), normalise(labels)
    kept_hi = {i for i, (idx, _) in enumerate(best_labels_batched(s, l, hi)) if idx is not None}
    kept_lo = {i for i, (idx, _) in enumerate(best_labels_batched(s, l, lo)) if idx is not None}
    assert kept_hi <= kept_lo


@settings(max_examples=50, deadline=None)
@given(unit_rows, unit_rows, st.floats(0.1, 100))
def test_scale_invariance(sents, labels, scale):
    class Scaled:
        def __init__(self, rows, factor):
            self.rows, self.factor = rows, factor

        def embed_numpy(self, texts):
            return self.rows[[int(t) for t in texts]] * self.factor

    cat = LabelCatalog.from_entries({"name": f"L{i}", "refined_text": str(i)} for i in range(len(labels)))
    texts = [str(i) for i in range(len(sents))]
    lab_plain = embed_catalog(Scaled(labels, 1.0), cat)
    lab_scaled = embed_catalog(Scaled(labels, scale), cat)
    a = match_batch(texts, Scaled(sents, 1.0), lab_plain)
    b = match_batch(texts, Scaled(sents, scale), lab_scaled)
    assert [x[0] for x in a] == [x[0] for x in b]


def test_benchmark_small():
    out = benchmark(50, 20, 16, seed=1)
    assert out["outputs_agree"]
    assert out["sentences"] == 50 and out["speedup"] > 0
