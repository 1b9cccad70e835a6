import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagamc.catalog import LabelCatalog
from lagamc.evalkit import (
    PredictionSet,
    compute_f1,
    evaluate,
    label_count_table,
    length_buckets,
    load_predictions,
    rare_label_slice,
    rare_labels,
    zero_shot_split,
)

from conftest import make_split


def catalog_of(names):
    return LabelCatalog.from_entries({"name": n, "refined_text": f"{n} words here."} for n in names)


@pytest.fixture
def abc():
    return catalog_of("ABC")


@pytest.fixture
def four_docs():
    return PredictionSet.from_pairs([
        ("d1", ["A"], ["A"]),
        ("d2", ["A", "B"], ["A", "B"]),
        ("d3", ["C"], ["B", "C"]),
        ("d4", ["C"], []),
    ])


def test_hand_computed_scores(abc, four_docs):
    # A: tp2 -> 1; B: tp1 fp1 -> 2/3; C: tp1 fn1 -> 2/3; pooled tp4 fp1 fn1
    rep = compute_f1(four_docs, abc)
    assert rep.micro_f1 == pytest.approx(0.8, abs=1e-9)
    assert rep.macro_f1 == pytest.approx(7 / 9, abs=1e-9)
    assert (rep.per_label["B"].tp, rep.per_label["B"].fp, rep.per_label["B"].fn) == (1, 1, 0)


def test_perfect_and_empty(abc):
    perfect = PredictionSet.from_pairs([("1", ["A"], ["A"]), ("2", ["B", "C"], ["B", "C"])])
    assert compute_f1(perfect, abc).micro_f1 == 1.0
    assert compute_f1(perfect, abc).macro_f1 == 1.0
    nothing = PredictionSet.from_pairs([("1", ["A"], []), ("2", ["B"], [])])
    assert compute_f1(nothing, abc).micro_f1 == 0.0


def test_absent_label_counts_as_zero(abc):
    preds = PredictionSet.from_pairs([("1", ["A"], ["A"])])
    assert compute_f1(preds, abc).macro_f1 == pytest.approx(1 / 3)


def test_unknown_predicted_label(abc):
    with pytest.raises(ValueError, match="Z"):
        compute_f1(PredictionSet.from_pairs([("1", ["A"], ["Z"])]), abc)


def test_id_mismatch_rejected():
    with pytest.raises(ValueError):
        PredictionSet({"1": frozenset()}, {"2": frozenset()})


label_sets = st.lists(st.sampled_from("ABCD"), unique=True, max_size=4)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(label_sets, label_sets), min_size=1, max_size=12))
def test_matches_brute_force(rows):
    catalog = catalog_of("ABCD")
    preds = PredictionSet.from_pairs((str(i), g, p) for i, (g, p) in enumerate(rows))
    rep = compute_f1(preds, catalog)
    # brute force from binary indicator vectors
    f1s, TP, FP, FN = [], 0, 0, 0
    for lab in "ABCD":
        tp = sum(lab in g and lab in p for g, p in rows)
        fp = sum(lab not in g and lab in p for g, p in rows)
        fn = sum(lab in g and lab not in p for g, p in rows)
        TP, FP, FN = TP + tp, FP + fp, FN + fn
        f1s.append(2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0)
    micro = 2 * TP / (2 * TP + FP + FN) if TP + FP + FN else 0.0
    assert rep.micro_f1 == pytest.approx(micro, abs=1e-12)
    assert rep.macro_f1 == pytest.approx(sum(f1s) / 4, abs=1e-12)
    assert 0.0 <= rep.micro_f1 <= 1.0 and 0.0 <= rep.macro_f1 <= 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(label_sets, label_sets), min_size=1, max_size=8), st.randoms())
def test_document_order_irrelevant(rows, rnd):
    catalog = catalog_of("ABCD")
    pairs = [(str(i), g, p) for i, (g, p) in enumerate(rows)]
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = compute_f1(PredictionSet.from_pairs(pairs), catalog)
    b = compute_f1(PredictionSet.from_pairs(shuffled), catalog)
    assert (a.micro_f1, a.macro_f1) == (b.micro_f1, b.macro_f1)


def ten_label_train():
    # label Li appears i+1 times, so L0 and L1 are the rarest
    names = [f"L{i}" for i in range(10)]
    rows, n = [], 0
    for i, name in enumerate(names):
        for _ in range(i + 1):
            rows.append((f"t{n}", "x", [name]))
            n += 1
    return catalog_of(names), make_split("train", rows)


def test_rare_labels_ceil():
    catalog, train = ten_label_train()
    assert rare_labels(train, catalog, 0.15) == ["L0", "L1"]  # ceil(1.5) = 2


def test_rare_ties_by_catalog_index():
    catalog = catalog_of("ABCD")
    train = make_split("train", [("1", "x", ["D"]), ("2", "x", ["B"]), ("3", "x", ["A", "C"]),
                                 ("4", "x", ["A"])])
    assert rare_labels(train, catalog, 0.5) == ["B", "C"]


def test_rare_fraction_bounds():
    catalog, train = ten_label_train()
    with pytest.raises(ValueError):
        rare_labels(train, catalog, 0.0)
    assert len(rare_labels(train, catalog, 1.0)) == 10


def test_rare_slice_restricts_documents():
    catalog, train = ten_label_train()
    preds = PredictionSet.from_pairs([
        ("a", ["L0"], ["L0"]),
        ("b", ["L1", "L5"], ["L5"]),
        ("c", ["L7"], ["L7"]),
    ])
    out = rare_label_slice(train, preds, catalog, 0.15)
    assert out["n_documents"] == 2
    assert out["macro_f1"] == pytest.approx(0.5)


def test_rare_slice_empty():
    catalog, train = ten_label_train()
    out = rare_label_slice(train, PredictionSet.from_pairs([("c", ["L7"], ["L7"])]), catalog)
    assert out["empty"] and out["macro_f1"] is None


def test_zero_shot_split():
    catalog = catalog_of("ABCDE")
    train = make_split("train", [("1", "x", ["A"]), ("2", "x", ["B", "C"]), ("3", "x", ["D"]),
                                 ("4", "x", ["E", "A"]), ("5", "x", ["B"])])
    test = make_split("test", [("t1", "x", ["A"]), ("t2", "x", ["C"]), ("t3", "x", ["E"])])
    new_train, new_test, unseen = zero_shot_split(train, test, catalog, 2, seed=3)
    assert len(unseen) == 2 and set(unseen) <= {"A", "C", "E"}
    assert all(not (d.label_set & set(unseen)) for d in new_train)
    assert new_test == test
    # every dropped document carried an unseen label
    dropped = set(train.ids) - set(new_train.ids)
    assert all(set(train.documents[int(i) - 1].gold_labels) & set(unseen) for i in dropped)
    assert zero_shot_split(train, test, catalog, 2, seed=3) == (new_train, new_test, unseen)


def test_zero_shot_edge_cases():
    catalog = catalog_of("AB")
    train = make_split("train", [("1", "x", ["A", "B"])])
    test = make_split("test", [("t", "x", ["A"])])
    assert zero_shot_split(train, test, catalog, 0) == (train, test, [])
    with pytest.raises(ValueError):
        zero_shot_split(train, test, catalog, 2)
    with pytest.raises(ValueError, match="every training document"):
        zero_shot_split(train, test, catalog, 1)


def test_zero_shot_needs_test_labels():
    catalog = catalog_of("ABC")
    train = make_split("train", [("1", "x", ["A"]), ("2", "x", ["B"])])
    test = make_split("test", [("t", "x", ["A"])])
    with pytest.raises(ValueError, match="occur in test"):
        zero_shot_split(train, test, catalog, 2)


def bucket_setup(n):
    catalog = catalog_of("AB")
    test = make_split("test", [(f"d{i:02d}", "x", ["A"] if i % 2 else ["A", "B"]) for i in range(n)])
    preds = PredictionSet.from_split(test, {d.id: ["A"] for d in test})
    return catalog, test, preds


@pytest.mark.parametrize("n,sizes", [(10, [5, 5]), (11, [6, 5]), (3, [1, 1, 1, 0])])
def test_bucket_sizes(n, sizes):
    catalog, test, preds = bucket_setup(n)
    buckets = length_buckets(test, preds, catalog, len(sizes))
    assert [b["n_documents"] for b in buckets] == sizes


def test_buckets_ordered_by_length():
    catalog, test, preds = bucket_setup(10)
    short, long = length_buckets(test, preds, catalog, 2)
    assert short["mean_length"] < long["mean_length"]
    assert short["micro_f1"] == 1.0 and long["micro_f1"] == pytest.approx(2 / 3)


def test_label_count_table():
    preds = PredictionSet.from_pairs([
        ("1", ["A"], ["A"]),
        ("2", ["A", "B"], []),
        ("3", [], ["A", "B", "C"]),
        ("4", ["A", "B", "C"], ["A", "B"]),
    ])
    table = label_count_table(preds, max_k=2)
    assert table["rows"] == [{"k": 1, "n_actual": 1, "n_predicted": 1},
                             {"k": 2, "n_actual": 1, "n_predicted": 1}]
    assert (table["empty_gold"], table["empty_predictions"]) == (1, 1)
    assert (table["gold_above_max"], table["predicted_above_max"]) == (1, 1)


def test_reuters_sized_table_accounts_for_everything():
    # 2,592 test documents, one row per label-count value
    names = [f"r{i}" for i in range(90)]
    catalog = catalog_of(names)
    pairs = [(str(i), names[: 1 + i % 7], names[: i % 4]) for i in range(2592)]
    preds = PredictionSet.from_pairs(pairs)
    table = label_count_table(preds, max_k=5)
    assert sum(r["n_actual"] for r in table["rows"]) + table["gold_above_max"] + table["empty_gold"] == 2592
    assert sum(r["n_predicted"] for r in table["rows"]) + table["predicted_above_max"] \
        + table["empty_predictions"] == 2592
    assert compute_f1(preds, catalog).n_documents == 2592


def test_evaluate_report_json(tmp_path, abc):
    test = make_split("test", [("1", "x", ["A"]), ("2", "x", ["B", "C"])])
    train = make_split("train", [("t", "x", ["A", "B", "C"])])
    path = tmp_path / "pred.jsonl"
    path.write_text("\n".join(json.dumps({"id": i, "labels": l}) for i, l in [("1", ["A"]), ("2", ["B"])]))
    report = evaluate(test, load_predictions(path), abc, train=train, n_buckets=2, max_k=3)
    js = json.loads(json.dumps(report.to_json()))
    assert js["micro_f1"] == pytest.approx(0.8)
    assert {"rare", "length_buckets", "label_count_tallies"} <= set(js["slices"])
    assert len(js["label_count_table"]) == 3


def test_missing_prediction_counts_as_empty(abc):
    test = make_split("test", [("1", "x", ["A"]), ("2", "x", ["B"])])
    report = evaluate(test, {"1": ["A"]}, abc)
    assert report.per_label["B"].fn == 1


def test_rare_set_size_twenty_labels():
    names = [f"L{i:02d}" for i in range(20)]
    train = make_split("train", [(str(i), "x", [names[i % 20]]) for i in range(40)])
    assert len(rare_labels(train, catalog_of(names), 0.15)) == 3


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(label_sets, label_sets), min_size=1, max_size=10))
def test_rare_slice_at_full_fraction_is_full_macro(rows):
    catalog = catalog_of("ABCD")
    train = make_split("train", [("t", "x", list("ABCD"))])
    preds = PredictionSet.from_pairs((str(i), g, p) for i, (g, p) in enumerate(rows))
    with_gold = [i for i, g in preds.gold.items() if g]
    out = rare_label_slice(train, preds, catalog, 1.0)
    if not with_gold:
        assert out["empty"]
        return
    assert out["macro_f1"] == pytest.approx(compute_f1(preds.restrict(with_gold), catalog).macro_f1, abs=1e-12)
