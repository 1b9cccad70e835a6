"""Word-level vocabulary shared by the reference generator and encoder."""
from __future__ import annotations

import json
import re
from collections import Counter
from pathlib import Path
from typing import Iterable

_TOKEN = re.compile(r"\w+(?:'\w+)*|[^\w\s]")
_NO_SPACE_BEFORE = set(".,;:!?)]}%")
_NO_SPACE_AFTER = set("([{")

PAD, BOS, EOS, UNK, EMPTY = "<pad>", "<s>", "</s>", "<unk>", "<empty>"
SPECIALS = (PAD, BOS, EOS, UNK, EMPTY)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text)


def detokenize(tokens: Iterable[str]) -> str:
    out: list[str] = []
    for tok in tokens:
        if out and tok not in _NO_SPACE_BEFORE and out[-1] not in _NO_SPACE_AFTER:
            out.append(" ")
        out.append(tok)
    return "".join(out)


class Vocabulary:
    def __init__(self, tokens: Iterable[str]):
        words = [t for t in tokens if t not in SPECIALS]
        self.itos = list(SPECIALS) + words
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    pad_id = 0
    bos_id = 1
    eos_id = 2
    unk_id = 3
    empty_id = 4

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocabulary":
        counts = Counter(tok for text in texts for tok in tokenize(text))
        # sort by token so the vocabulary is independent of text order
        return cls(sorted(counts))

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, text: str) -> list[int]:
        return [self.stoi.get(tok, self.unk_id) for tok in tokenize(text)]

    def decode(self, ids: Iterable[int]) -> str:
        toks = []
        for i in ids:
            if i == self.eos_id:
                break
            if i < len(SPECIALS) and i != self.unk_id:
                continue
            toks.append(self.itos[i])
        return detokenize(toks)

    def content_mask(self) -> list[bool]:
        """True for tokens that carry meaning (words and unknowns, not punctuation)."""
        return [
            i == self.unk_id or (i >= len(SPECIALS) and bool(re.match(r"\w", t)))
            for i, t in enumerate(self.itos)
        ]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.itos[len(SPECIALS):]), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))
