"""Building, saving and reloading the reference handles and training outputs."""
from __future__ import annotations

import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import torch

from ..catalog import LabelCatalog
from ..promptkit import PromptRecord
from .loop import TrainConfig, TrainedArtifacts, save_log, token_budgets, train
from .reference import (
    BagOfEmbeddingsEncoder,
    ModelConfig,
    ReferenceGenerator,
    pretrain,
    pretraining_pairs,
)
from .vocab import Vocabulary

log = logging.getLogger(__name__)

def resolve_budgets(config: TrainConfig, records: Sequence[PromptRecord]) -> TrainConfig:
    if config.max_input_tokens and config.max_output_tokens:
        return config
    mean_in, mean_out = token_budgets(records)
    return replace(
        config,
        max_input_tokens=config.max_input_tokens or mean_in,
        max_output_tokens=config.max_output_tokens or mean_out,
    )


def build_reference_handles(config: TrainConfig, records: Sequence[PromptRecord],
                            catalog: LabelCatalog | None = None):
    """Vocabulary, pretrained base generator with adapters, and a fresh encoder."""
    descriptions = {}
    if catalog is not None:
        descriptions = {d.label.name: d.text for d in catalog.descriptions}
    texts = [r.prompt for r in records] + [r.target for r in records if r.target]
    vocab = Vocabulary.build(texts + list(descriptions.values()) + ["Define:"] + list(descriptions))
    cfg = ModelConfig(max_positions=max(256, (config.max_input_tokens or 0) + 8,
                                        (config.max_output_tokens or 0) + 8))
    gen = ReferenceGenerator(vocab, cfg, seed=config.seed)
    if config.pretrain_steps:
        # the vocabulary covers the whole catalog, but the base only ever sees
        # descriptions that occur in training targets (held-out labels stay unseen)
        targets = [r.target for r in records if r.target]
        seen = {n: t for n, t in descriptions.items()
                if any(t.strip().rstrip(".") in tgt for tgt in targets)}
        pairs = pretraining_pairs([r.prompt for r in records] + targets, seen, seed=config.seed)
        losses = pretrain(gen, pairs, config.pretrain_steps, config.pretrain_lr, seed=config.seed)
        log.info("base pretraining: loss %.3f -> %.3f", losses[0], losses[-1])
    base_state = {k: v.clone() for k, v in gen.base_state_dict().items()}
    gen.add_adapters(config.lora_rank, config.lora_alpha, config.lora_targets, seed=config.seed)
    if config.max_input_tokens:
        gen.max_input_tokens = config.max_input_tokens
    if config.max_output_tokens:
        gen.max_output_tokens = config.max_output_tokens
    enc = BagOfEmbeddingsEncoder(vocab, config.encoder_dim, seed=config.seed)
    return gen, enc, base_state


def train_reference(config: TrainConfig, records: Sequence[PromptRecord], out_dir: str | Path,
                    catalog: LabelCatalog | None = None) -> TrainedArtifacts:
    """Train the reference handles on ``records`` and write the artifacts directory."""
    config = resolve_budgets(config, records)
    gen, enc, _ = build_reference_handles(config, records, catalog)
    trainable, total = gen.parameter_counts()
    log.info("trainable generator parameters: %d / %d (%.4f%%)", trainable, total, 100 * trainable / total)
    arts = train(config, records, gen, enc)
    save_artifacts(out_dir, config, gen, enc, arts)
    return arts


def save_artifacts(out_dir: str | Path, config: TrainConfig, gen: ReferenceGenerator,
                   enc: BagOfEmbeddingsEncoder, arts: TrainedArtifacts) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gen.save_base(out / "base")
    (out / "adapters").mkdir(exist_ok=True)
    torch.save(arts.adapters, out / "adapters" / "adapters.pt")
    (out / "adapters" / "adapter_config.json").write_text(json.dumps(
        {"rank": config.lora_rank, "alpha": config.lora_alpha, "targets": list(config.lora_targets)}) + "\n")
    enc.load_state_dict(arts.encoder)
    enc.save(out / "encoder")
    (out / "lambda.json").write_text(json.dumps({"raw": arts.lambda_raw, "value": arts.lambda_value}) + "\n")
    save_log(arts.log, out / "log.jsonl")
    trainable, total = gen.parameter_counts()
    (out / "params.json").write_text(json.dumps(
        {"trainable": trainable, "total": total, "fraction": trainable / total}) + "\n")
    (out / "train_config.json").write_text(json.dumps(config.to_json(), indent=2) + "\n")


def load_artifacts(out_dir: str | Path) -> tuple[ReferenceGenerator, BagOfEmbeddingsEncoder, TrainConfig]:
    out = Path(out_dir)
    if not (out / "base").is_dir():
        raise FileNotFoundError(f"no trained artifacts in {out}")
    config = TrainConfig.load(out / "train_config.json")
    gen = ReferenceGenerator.load_base(out / "base")
    acfg = json.loads((out / "adapters" / "adapter_config.json").read_text())
    gen.add_adapters(acfg["rank"], acfg["alpha"], tuple(acfg["targets"]))
    gen.load_adapters(torch.load(out / "adapters" / "adapters.pt"))
    if config.max_input_tokens:
        gen.max_input_tokens = config.max_input_tokens
    if config.max_output_tokens:
        gen.max_output_tokens = config.max_output_tokens
    enc = BagOfEmbeddingsEncoder.load(out / "encoder")
    return gen, enc, config
