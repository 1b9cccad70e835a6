"""Synthetic multi-label corpora for smoke tests and the bundled toy run."""
from __future__ import annotations

import random

from .catalog import DatasetSplit, Document, LabelCatalog

TOPICS = {
    "Weather": (
        "Weather, which covers rain, storm, snow, heat and wind, describes the forecast and the "
        "daily conditions of the sky and the air.",
        ["the rain kept falling", "a storm hit the coast", "the heat was unbearable",
         "strong wind blew all night", "the forecast promised snow"],
    ),
    "Sports": (
        "Sports, which includes tennis, running and football, covers a team or a striker in a "
        "match, a runner chasing a record and the fans in the stadium.",
        ["the striker scored twice", "our team won the final", "the tennis match went long",
         "the runner broke a record", "fans filled the stadium"],
    ),
    "Finance": (
        "Finance, which involves stock prices, the bank and interest rates, concerns investors, "
        "shares, inflation and the market.",
        ["stock prices dropped sharply", "the bank raised interest rates", "investors sold their shares",
         "inflation hit a new high", "the market rallied at noon"],
    ),
    "Health": (
        "Health, which spans flu, surgery and recovery, concerns the doctor, the clinic, vaccines"
        " and patients waiting for treatment.",
        ["the doctor prescribed rest", "a flu outbreak closed schools", "she recovered from surgery",
         "the clinic offered vaccines", "patients waited for treatment"],
    ),
    "Music": (
        "Music, which ranges from a concert to an album or a song in the charts, is the work of a"
        " band, a singer or an orchestra on tour.",
        ["the band released an album", "the concert sold out", "a new song topped the charts",
         "the orchestra played live", "the singer went on tour"],
    ),
    "Travel": (
        "Travel, which involves a flight, a hotel, a train or a cruise, describes tourists on "
        "journeys abroad for leisure or work.",
        ["our flight was delayed", "the hotel overlooked the sea", "tourists crowded the museum",
         "we booked a train abroad", "the cruise left the harbour"],
    ),
    "Food": (
        "Food, which covers bread, pasta, curry, soup and pancakes, concerns the chef, the "
        "restaurant, the cafe and every recipe people cook.",
        ["the chef baked fresh bread", "the restaurant served pasta", "we tried a spicy curry",
         "grandma shared her soup recipe", "the cafe made great pancakes"],
    ),
    "Science": (
        "Science, which spans research, experiments and discovery, covers researchers and "
        "scientists working with a telescope, a lab, a genome or a probe.",
        ["researchers published new findings", "the telescope spotted a comet", "the lab ran an experiment",
         "scientists mapped the genome", "the probe landed on the moon"],
    ),
}

_OPENERS = ["Today", "Yesterday", "This morning", "Last night", "Apparently", "Once again"]


def toy_catalog(n_labels: int = 4) -> LabelCatalog:
    names = list(TOPICS)[:n_labels]
    return LabelCatalog.from_entries(
        {"name": n, "initial_text": TOPICS[n][0], "refined_text": TOPICS[n][0], "source": "manual"}
        for n in names
    )


def toy_split(name: str, n_docs: int, n_labels: int = 4, seed: int = 0,
              max_labels: int = 2, prefix: str | None = None) -> DatasetSplit:
    rng = random.Random(f"{seed}:{name}")
    names = list(TOPICS)[:n_labels]
    docs = []
    for i in range(n_docs):
        k = 1 if rng.random() < 0.5 else rng.randint(1, max_labels)
        labels = rng.sample(names, k)
        phrases = [rng.choice(TOPICS[lab][1]) for lab in labels]
        text = f"{rng.choice(_OPENERS)} {' and '.join(phrases)}."
        docs.append(Document(f"{prefix or name}-{i:03d}", text, tuple(labels)))
    return DatasetSplit(name if name in ("train", "dev", "test") else "other", tuple(docs))
