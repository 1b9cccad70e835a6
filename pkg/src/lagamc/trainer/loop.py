"""Hybrid-loss training of a generator with adapters and a sentence encoder."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Protocol, Sequence

import torch

from ..promptkit import PromptRecord
from .losses import MixingWeight, hybrid_loss, semantic_loss
from .vocab import tokenize

log = logging.getLogger(__name__)

SEMANTIC_MODES = ("soft_embedding", "decoded_text")


class TrainingDiverged(RuntimeError):
    pass


class GeneratorHandle(Protocol):
    def forward(self, prompts: Sequence[str], targets: Sequence[str]): ...
    def generate(self, prompts: Sequence[str], max_new_tokens: int | None = None) -> list[str]: ...
    def trainable_parameters(self) -> list[torch.nn.Parameter]: ...
    def parameter_counts(self) -> tuple[int, int]: ...


class EncoderHandle(Protocol):
    def embed(self, texts: Sequence[str]) -> torch.Tensor: ...
    def embed_distributions(self, probs: torch.Tensor, mask: torch.Tensor) -> torch.Tensor: ...
    def trainable_parameters(self) -> list[torch.nn.Parameter]: ...


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    learning_rate: float = 2e-4
    lora_rank: int = 2
    lora_alpha: float = 16.0
    lora_targets: tuple[str, ...] = ("q", "v")
    max_input_tokens: int | None = None
    max_output_tokens: int | None = None
    lambda_init: float = 0.5
    semantic_mode: str = "soft_embedding"
    seed: int = 0
    # reference model only
    encoder_dim: int = 64
    pretrain_steps: int = 300
    pretrain_lr: float = 3e-3

    def __post_init__(self):
        self.lora_targets = tuple(self.lora_targets)
        if not 0.0 < self.lambda_init < 1.0:
            raise ValueError("lambda_init must lie strictly between 0 and 1")
        if self.semantic_mode not in SEMANTIC_MODES:
            raise ValueError(f"semantic_mode must be one of {SEMANTIC_MODES}")
        for name in ("batch_size", "lora_rank", "encoder_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0 and learning_rate > 0")
        for name in ("max_input_tokens", "max_output_tokens"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        out = asdict(self)
        out["lora_targets"] = list(self.lora_targets)
        return out


def _round_up8(x: float) -> int:
    return max(8, int(math.ceil(x / 8.0)) * 8)


def token_budgets(records: Sequence[PromptRecord]) -> tuple[int, int]:
    """Mean prompt and target lengths in model tokens, rounded up to a multiple of 8."""
    ins = [len(tokenize(r.prompt)) for r in records]
    outs = [len(tokenize(r.target or "")) for r in records]
    return _round_up8(sum(ins) / len(ins)), _round_up8(sum(outs) / len(outs))


@dataclass
class EpochLog:
    epoch: int
    ce: float
    semantic: float
    hybrid: float
    # value of the mixing weight at the end of the epoch
    lam: float

    def to_json(self) -> dict:
        return {"epoch": self.epoch, "ce": self.ce, "semantic": self.semantic,
                "hybrid": self.hybrid, "lambda": self.lam}


@dataclass
class TrainedArtifacts:
    adapters: dict[str, torch.Tensor]
    encoder: dict[str, torch.Tensor]
    lambda_raw: float
    lambda_value: float
    log: list[EpochLog] = field(default_factory=list)
    empty_decodes: int = 0


def generated_embedding(gen, enc, prompts: Sequence[str], targets: Sequence[str] | None,
                        mode: str, output=None) -> tuple[torch.Tensor, list[bool]]:
    """Embedding of what the generator produces for ``prompts``.

    ``soft_embedding`` embeds the expected-token mixture of the teacher-forced
    distributions (gradients reach both networks); ``decoded_text`` embeds the
    greedy decode (gradients reach the encoder only). Returns the embeddings
    and a per-row flag marking empty decodes.
    """
    if mode == "soft_embedding":
        if output is None:
            output = gen.forward(prompts, targets)
        return enc.embed_distributions(output.probs, output.mask), [False] * output.mask.shape[0]
    if mode == "decoded_text":
        texts = gen.generate(prompts)
        flags = [not t.strip() for t in texts]
        return enc.embed(texts), flags
    raise ValueError(f"unknown semantic mode {mode!r}")


def train(config: TrainConfig, prompts: Sequence[PromptRecord], gen, enc) -> TrainedArtifacts:
    """Optimise adapters, encoder and mixing weight jointly under the hybrid loss."""
    if any(r.target is None for r in prompts):
        raise ValueError("every training prompt needs a target")
    if config.epochs and not prompts:
        raise ValueError("no training prompts")
    torch.manual_seed(config.seed)
    order_rng = torch.Generator().manual_seed(config.seed)
    mix = MixingWeight(config.lambda_init)
    params = list(gen.trainable_parameters()) + list(enc.trainable_parameters()) + [mix.raw]
    opt = torch.optim.Adam(params, lr=config.learning_rate)
    history: list[EpochLog] = []
    empty_total = 0
    n = len(prompts)
    for epoch in range(config.epochs):
        perm = torch.randperm(n, generator=order_rng).tolist()
        sums = {"ce": 0.0, "semantic": 0.0, "hybrid": 0.0}
        batches = 0
        for start in range(0, n, config.batch_size):
            batch_id = f"epoch {epoch} batch {start // config.batch_size}"
            batch = [prompts[i] for i in perm[start:start + config.batch_size]]
            src = [r.prompt for r in batch]
            tgt = [r.target for r in batch]
            out = gen.forward(src, tgt)
            v_gen, flags = generated_embedding(gen, enc, src, tgt, config.semantic_mode, out)
            empty_total += sum(flags)
            v_tgt = enc.embed(tgt)
            sem = semantic_loss(v_gen, v_tgt).mean()
            if not (torch.isfinite(out.ce) and torch.isfinite(sem)):
                raise TrainingDiverged(f"non-finite loss at {batch_id}")
            loss = hybrid_loss(out.ce, sem, mix)
            opt.zero_grad()
            loss.backward()
            opt.step()
            sums["ce"] += out.ce.item()
            sums["semantic"] += sem.item()
            sums["hybrid"] += loss.item()
            batches += 1
        entry = EpochLog(epoch, *(sums[k] / batches for k in ("ce", "semantic", "hybrid")), mix.value())
        history.append(entry)
        log.info("epoch %d ce=%.4f sem=%.4f hybrid=%.4f lambda=%.4f",
                 epoch, entry.ce, entry.semantic, entry.hybrid, entry.lam)
    if empty_total:
        log.warning("%d empty decodes embedded as the sentinel vector", empty_total)
    return TrainedArtifacts(
        adapters=gen.adapter_state_dict() if hasattr(gen, "adapter_state_dict") else {},
        encoder={k: v.detach().clone() for k, v in enc.state_dict().items()} if hasattr(enc, "state_dict") else {},
        lambda_raw=mix.raw.item(),
        lambda_value=mix.value(),
        log=history,
        empty_decodes=empty_total,
    )


def save_log(history: Sequence[EpochLog], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for entry in history:
            fh.write(json.dumps(entry.to_json()) + "\n")
