import json
import threading
import time

import pytest

from lagamc.catalog import LabelCatalog
from lagamc.descgen import (
    GenerationError,
    RefineStats,
    RefinementRequest,
    RetryPolicy,
    StubClient,
    build_refinement_prompt,
    pick_examples,
    refine_catalog,
)

from conftest import make_split

ANGER_PROMPT = """Label: Anger
Initial Description: Anger, emotion that involves annoyance and rage.
Dataset: Contains tweets and corresponding emotion annotations.
Examples from the dataset:
Tweet 1: "Tears and eyes can dry but I won't, I'm burning like the wire in a lightbulb."
Prediction: Anger
Tweet 2: "We're going to get City in the next round for a revenge."
Prediction: Anger
Task: Generate a suitable label description for `Anger` that fits the context of this dataset."""


@pytest.fixture
def train():
    return make_split("train", [
        ("t1", "I am so angry", ["Anger"]),
        ("t2", "happy days", ["Joy"]),
        ("t3", "furious and sad", ["Anger", "Sadness"]),
        ("t4", "rage everywhere", ["Anger"]),
        ("t5", "only joy", ["Joy"]),
        ("t6", "tears", ["Sadness"]),
    ])


@pytest.fixture
def seed_catalog():
    return LabelCatalog.from_entries(
        {"name": n, "initial_text": f"{n}, an emotion."} for n in ("Anger", "Joy", "Sadness"))


def test_anger_prompt_layout():
    req = RefinementRequest(
        "Anger",
        "Anger, emotion that involves annoyance and rage.",
        "Contains tweets and corresponding emotion annotations.",
        [("Tears and eyes can dry but I won't, I'm burning like the wire in a lightbulb.", ["Anger"]),
         ("We're going to get City in the next round for a revenge.", ["Anger"])],
        item_name="Tweet",
    )
    assert build_refinement_prompt(req) == ANGER_PROMPT


def test_prompt_single_example_empty_blurb():
    req = RefinementRequest("Joy", "Joy.", "", [("yay", ["Joy"])])
    prompt = build_refinement_prompt(req)
    lines = prompt.splitlines()
    assert "Dataset: " in lines
    assert sum(l.startswith("Prediction:") for l in lines) == 1
    assert lines[-1].startswith("Task:")
    assert prompt == build_refinement_prompt(req)


def test_prompt_section_order():
    req = RefinementRequest("Joy", "Joy.", "blurb", [("a", ["Joy"]), ("b", ["Joy", "Love"])])
    prompt = build_refinement_prompt(req)
    keys = ["Label:", "Initial Description:", "Dataset:", "Text 1:", "Text 2:", "Task:"]
    positions = [prompt.index(k) for k in keys]
    assert positions == sorted(positions)


def test_request_validates_examples():
    with pytest.raises(ValueError):
        RefinementRequest("Joy", "Joy.", "", [("sad", ["Sadness"])])
    with pytest.raises(ValueError):
        RefinementRequest("Joy", "Joy.", "", [])


def test_prompt_distinguishes_requests():
    base = dict(label_name="Joy", initial_description="Joy.", dataset_blurb="", examples=[("a", ["Joy"])])
    a = build_refinement_prompt(RefinementRequest(**base))
    b = build_refinement_prompt(RefinementRequest(**{**base, "initial_description": "Glee."}))
    c = build_refinement_prompt(RefinementRequest(**{**base, "examples": [("b", ["Joy"])]}))
    assert len({a, b, c}) == 3


def test_pick_examples_exhaustion(train):
    picked = pick_examples(train, "Sadness", k=5, seed=0)
    assert [d.id for d in picked] == ["t3", "t6"]


def test_pick_examples_single(train):
    train = make_split("train", [("x", "t", ["Rare"]), ("y", "u", ["Other"])])
    assert [d.id for d in pick_examples(train, "Rare", k=2)] == ["x"]


def test_pick_examples_deterministic(train):
    assert pick_examples(train, "Anger", 2, seed=3) == pick_examples(train, "Anger", 2, seed=3)


def test_pick_examples_predicate(train):
    picked = pick_examples(train, "Anger", k=2, seed=1)
    expected_pool = {d.id for d in train if "Anger" in d.label_set}
    assert len(picked) == 2
    assert all(d.id in expected_pool for d in picked)


def test_pick_examples_missing_label(train):
    with pytest.raises(ValueError, match="Love"):
        pick_examples(train, "Love")


def test_refine_with_echo_stub(seed_catalog, train):
    client = StubClient(default=lambda p: "REFINED:" + p.splitlines()[0].removeprefix("Label: "))
    out = refine_catalog(seed_catalog, train, client)
    assert [d.refined_text for d in out.descriptions] == ["REFINED:" + n for n in seed_catalog.names]
    assert all(d.source == "refined" for d in out.descriptions)
    assert out.names == seed_catalog.names
    # original untouched
    assert all(d.refined_text == "" for d in seed_catalog.descriptions)


def test_refine_retries_then_succeeds(seed_catalog, train):
    calls = {"n": 0}

    class Flaky:
        def complete(self, prompt, max_tokens=128, temperature=0.7):
            calls["n"] += 1
            if calls["n"] == 1:
                raise ConnectionError("boom")
            return "  fine description  "

    sleeps = []
    stats = RefineStats()
    one = seed_catalog.subset(["Anger"])
    out = refine_catalog(one, train, Flaky(), policy=RetryPolicy(max_attempts=3), sleep=sleeps.append,
                         stats=stats)
    assert out.descriptions[0].refined_text == "fine description"
    assert stats.retries == 1
    assert sleeps == [1.0]


def test_backoff_schedule():
    assert list(RetryPolicy(max_attempts=4, initial_backoff=1.0).delays()) == [1.0, 2.0, 4.0]


def test_refine_falls_back_per_label(seed_catalog, train):
    def respond(prompt):
        if prompt.startswith("Label: Joy"):
            raise GenerationError("down")
        return "ok"

    stats = RefineStats()
    out = refine_catalog(seed_catalog, train, StubClient(default=respond), sleep=lambda s: None, stats=stats)
    joy = out.description("Joy")
    assert joy.source == "seed" and joy.refined_text == "Joy, an emotion."
    assert stats.fallbacks == ["Joy"]
    assert all(d.refined_text for d in out.descriptions)


def test_refine_all_fail(seed_catalog, train):
    client = StubClient(default=lambda p: (_ for _ in ()).throw(GenerationError("down")))
    with pytest.raises(GenerationError):
        refine_catalog(seed_catalog, train, client, sleep=lambda s: None)


def test_refine_passes_through_existing(train):
    # a catalog that already ships final descriptions is left alone
    catalog = LabelCatalog.from_entries(
        {"name": n, "initial_text": "", "refined_text": f"{n} given.", "source": "manual"}
        for n in ("Anger", "Joy"))
    client = StubClient()
    assert refine_catalog(catalog, train, client) == catalog
    assert client.calls == []


def test_results_merge_by_label_not_completion(seed_catalog, train):
    lock = threading.Lock()
    order = []

    def respond(prompt):
        name = prompt.splitlines()[0].removeprefix("Label: ")
        time.sleep({"Anger": 0.05, "Joy": 0.0, "Sadness": 0.02}[name])
        with lock:
            order.append(name)
        return f"{name} text"

    out = refine_catalog(seed_catalog, train, StubClient(default=respond), max_concurrency=3)
    assert [d.refined_text for d in out.descriptions] == ["Anger text", "Joy text", "Sadness text"]


def test_stub_from_file(tmp_path, seed_catalog, train):
    path = tmp_path / "stub.json"
    path.write_text(json.dumps({"by_label": {n: f"{n} from file." for n in seed_catalog.names}}))
    out = refine_catalog(seed_catalog, train, StubClient.from_file(path))
    assert out.description("Sadness").refined_text == "Sadness from file."
