"""Refining seed label descriptions with an external text generator."""
from __future__ import annotations

import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

from .catalog import DatasetSplit, Document, Label, LabelCatalog, LabelDescription

log = logging.getLogger(__name__)

API_KEY_ENV = "LAGAMC_API_KEY"


class GenerationError(RuntimeError):
    pass


class GenerationClient(Protocol):
    def complete(self, prompt: str, max_tokens: int = 128, temperature: float = 0.7) -> str: ...


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    initial_backoff: float = 1.0
    multiplier: float = 2.0

    def delays(self):
        delay = self.initial_backoff
        for _ in range(self.max_attempts - 1):
            yield delay
            delay *= self.multiplier


@dataclass
class StubClient:
    """Deterministic offline client.

    Looks ``prompt`` up in ``responses``; when missing, falls back to
    ``default(prompt)`` if given, else raises.
    """

    responses: Mapping[str, str] = field(default_factory=dict)
    default: Callable[[str], str] | None = None
    calls: list[str] = field(default_factory=list)

    def complete(self, prompt: str, max_tokens: int = 128, temperature: float = 0.7) -> str:
        self.calls.append(prompt)
        if prompt in self.responses:
            return self.responses[prompt]
        if self.default is not None:
            return self.default(prompt)
        raise GenerationError("stub has no response for prompt")

    @classmethod
    def from_file(cls, path: str | Path) -> "StubClient":
        """Load a stub from JSON: either ``{prompt: response}`` or ``{"by_label": {name: text}}``."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if "by_label" in data:
            by_label = data["by_label"]

            def lookup(prompt: str) -> str:
                name = _label_from_prompt(prompt)
                if name not in by_label:
                    raise GenerationError(f"stub has no description for {name!r}")
                return by_label[name]

            return cls(default=lookup)
        return cls(responses=data)


def _label_from_prompt(prompt: str) -> str:
    first = prompt.splitlines()[0]
    return first.removeprefix("Label:").strip()


class ChatCompletionsClient:
    """Client for an OpenAI-style ``/chat/completions`` endpoint.

    The API key is read from the environment only.
    """

    def __init__(self, endpoint: str, model: str, api_key_env: str = API_KEY_ENV, timeout: float = 60.0):
        key = os.environ.get(api_key_env)
        if not key:
            raise GenerationError(f"environment variable {api_key_env} is not set")
        import httpx

        self.endpoint = endpoint
        self.model = model
        self._http = httpx.Client(timeout=timeout, headers={"Authorization": f"Bearer {key}"})

    def complete(self, prompt: str, max_tokens: int = 128, temperature: float = 0.7) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": max_tokens,
            "temperature": temperature,
        }
        resp = self._http.post(self.endpoint, json=body)
        if resp.status_code != 200:
            raise GenerationError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise GenerationError(f"unexpected response body ({exc})") from None
        if not content or not content.strip():
            raise GenerationError("empty completion")
        return content


@dataclass(frozen=True)
class RefinementRequest:
    label_name: str
    initial_description: str
    dataset_blurb: str
    examples: Sequence[tuple[str, Sequence[str]]]
    item_name: str = "Text"

    def __post_init__(self):
        if not self.examples:
            raise ValueError("a refinement request needs at least one example")
        for text, preds in self.examples:
            if self.label_name not in preds:
                raise ValueError(f"example {text[:40]!r} does not carry label {self.label_name!r}")


def pick_examples(train: DatasetSplit, label: Label | str, k: int = 2, seed: int = 0) -> list[Document]:
    name = label.name if isinstance(label, Label) else label
    pool = [d for d in train if name in d.label_set]
    if not pool:
        raise ValueError(f"label {name!r} never appears in the training split")
    rng = random.Random(f"{seed}:{name}")
    picked = rng.sample(range(len(pool)), min(k, len(pool)))
    return [pool[i] for i in sorted(picked)]


def build_refinement_prompt(req: RefinementRequest) -> str:
    lines = [
        f"Label: {req.label_name}",
        f"Initial Description: {req.initial_description}",
        f"Dataset: {req.dataset_blurb}",
        "Examples from the dataset:",
    ]
    for i, (text, preds) in enumerate(req.examples, 1):
        lines.append(f'{req.item_name} {i}: "{text}"')
        lines.append("Prediction: " + ", ".join(preds))
    lines.append(
        f"Task: Generate a suitable label description for `{req.label_name}` "
        "that fits the context of this dataset."
    )
    return "\n".join(lines)


@dataclass
class RefineStats:
    retries: int = 0
    fallbacks: list[str] = field(default_factory=list)
    passed_through: list[str] = field(default_factory=list)


def _call_with_retry(client, prompt, policy, max_tokens, temperature, sleep, stats, name):
    delays = policy.delays()
    for attempt in range(1, policy.max_attempts + 1):
        try:
            out = client.complete(prompt, max_tokens=max_tokens, temperature=temperature)
            if not out or not out.strip():
                raise GenerationError("empty completion")
            return out.strip()
        except Exception as exc:  # any client failure counts as an attempt
            if attempt == policy.max_attempts:
                log.warning("giving up on %s after %d attempts: %s", name, attempt, exc)
                return None
            stats.retries += 1
            log.info("attempt %d for %s failed (%s); retrying", attempt, name, exc)
            sleep(next(delays))
    return None


def refine_catalog(
    catalog: LabelCatalog,
    train: DatasetSplit,
    client: GenerationClient,
    k: int = 2,
    seed: int = 0,
    dataset_blurb: str = "",
    item_name: str = "Text",
    policy: RetryPolicy = RetryPolicy(),
    max_tokens: int = 128,
    temperature: float = 0.7,
    max_concurrency: int = 4,
    force: bool = False,
    sleep: Callable[[float], None] = time.sleep,
    stats: RefineStats | None = None,
) -> LabelCatalog:
    """Return a new catalog whose descriptions were refined by ``client``.

    Labels that already carry a refined or manual description are passed
    through unless ``force``. A label whose calls all fail keeps its seed
    text; if every attempted label fails, the whole refinement fails.
    """
    stats = stats if stats is not None else RefineStats()
    todo = []
    for desc in catalog.descriptions:
        if not force and desc.source in ("refined", "manual") and desc.refined_text.strip():
            stats.passed_through.append(desc.label.name)
            continue
        if not desc.initial_text.strip():
            raise ValueError(f"label {desc.label.name!r} has no initial description")
        examples = pick_examples(train, desc.label, k, seed)
        req = RefinementRequest(
            desc.label.name,
            desc.initial_text,
            dataset_blurb,
            [(d.text, sorted(d.label_set, key=_catalog_order(catalog))) for d in examples],
            item_name,
        )
        todo.append((desc, build_refinement_prompt(req)))

    def run(item):
        desc, prompt = item
        return _call_with_retry(
            client, prompt, policy, max_tokens, temperature, sleep, stats, desc.label.name
        )

    with ThreadPoolExecutor(max_workers=max(1, max_concurrency)) as pool:
        outputs = list(pool.map(run, todo))  # map keeps submission order

    if todo and all(o is None for o in outputs):
        raise GenerationError("description refinement failed for every label")

    refined = {desc.label.index: out for (desc, _), out in zip(todo, outputs)}
    new = []
    for desc in catalog.descriptions:
        if desc.label.index not in refined:
            new.append(desc)
        elif refined[desc.label.index] is None:
            stats.fallbacks.append(desc.label.name)
            new.append(LabelDescription(desc.label, desc.initial_text, desc.initial_text.strip(), "seed"))
        else:
            new.append(LabelDescription(desc.label, desc.initial_text, refined[desc.label.index], "refined"))
    return catalog.with_descriptions(new)


def _catalog_order(catalog: LabelCatalog):
    return lambda name: catalog.index_of(name) if name in catalog else len(catalog)
