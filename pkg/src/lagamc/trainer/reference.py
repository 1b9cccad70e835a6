"""Small reference generator and encoder that run on CPU without downloads.

``ReferenceGenerator`` is a pre-LN transformer encoder-decoder over a word
vocabulary; ``BagOfEmbeddingsEncoder`` embeds text as the normalised sum of
its content-token vectors. Both share one ``Vocabulary``, which is what lets
the encoder consume the generator's output distributions directly.
"""
from __future__ import annotations

import json
import logging
import random
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .lora import LoRALinear, apply_lora, count_parameters, lora_state_dict
from .vocab import Vocabulary

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 256
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    max_positions: int = 256


class Attention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.o = nn.Linear(d_model, d_model)

    def _heads(self, x):
        b, t, d = x.shape
        return x.view(b, t, self.n_heads, d // self.n_heads).transpose(1, 2)

    def forward(self, x, memory, mask):
        q, k, v = self._heads(self.q(x)), self._heads(self.k(memory)), self._heads(self.v(memory))
        out = F.scaled_dot_product_attention(q, k, v, attn_mask=mask)
        b, h, t, dh = out.shape
        return self.o(out.transpose(1, 2).reshape(b, t, h * dh))


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int):
        super().__init__()
        self.up = nn.Linear(d_model, d_ff)
        self.down = nn.Linear(d_ff, d_model)

    def forward(self, x):
        return self.down(F.gelu(self.up(x)))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.attn = Attention(cfg.d_model, cfg.n_heads)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff)

    def forward(self, x, mask):
        h = self.norm1(x)
        x = x + self.attn(h, h, mask)
        return x + self.ff(self.norm2(x))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = Attention(cfg.d_model, cfg.n_heads)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = Attention(cfg.d_model, cfg.n_heads)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff)

    def forward(self, x, memory, self_mask, cross_mask):
        h = self.norm1(x)
        x = x + self.self_attn(h, h, self_mask)
        x = x + self.cross_attn(self.norm2(x), memory, cross_mask)
        return x + self.ff(self.norm3(x))


class Seq2SeqTransformer(nn.Module):
    def __init__(self, vocab_size: int, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(vocab_size, cfg.d_model)
        self.pos = nn.Embedding(cfg.max_positions, cfg.d_model)
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_encoder_layers))
        self.enc_norm = nn.LayerNorm(cfg.d_model)
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.n_decoder_layers))
        self.dec_norm = nn.LayerNorm(cfg.d_model)
        self.lm_head = nn.Linear(cfg.d_model, vocab_size, bias=False)
        nn.init.normal_(self.embed.weight, std=0.02 * cfg.d_model**0.5)
        nn.init.normal_(self.pos.weight, std=0.02)

    def _embed(self, ids):
        positions = torch.arange(ids.shape[1], device=ids.device)
        return self.embed(ids) + self.pos(positions)[None]

    def encode(self, src, src_mask):
        mask = src_mask[:, None, None, :]
        x = self._embed(src)
        for layer in self.encoder:
            x = layer(x, mask)
        return self.enc_norm(x)

    def decode(self, tgt_in, memory, src_mask):
        t = tgt_in.shape[1]
        causal = torch.ones(t, t, dtype=torch.bool, device=tgt_in.device).tril()
        cross = src_mask[:, None, None, :]
        x = self._embed(tgt_in)
        for layer in self.decoder:
            x = layer(x, memory, causal[None, None], cross)
        return self.lm_head(self.dec_norm(x))

    def forward(self, src, src_mask, tgt_in):
        return self.decode(tgt_in, self.encode(src, src_mask), src_mask)


@dataclass
class GeneratorOutput:
    ce: torch.Tensor  # mean token-level cross-entropy
    probs: torch.Tensor  # (batch, positions, vocab) teacher-forced output distributions
    mask: torch.Tensor  # (batch, positions) True on real target positions


def _pad(seqs: Sequence[list[int]], pad: int) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(1, max(len(s) for s in seqs))
    ids = torch.full((len(seqs), width), pad, dtype=torch.long)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = torch.tensor(s, dtype=torch.long)
    return ids, ids != pad


class ReferenceGenerator:
    """Generator handle around ``Seq2SeqTransformer``."""

    def __init__(self, vocab: Vocabulary, cfg: ModelConfig = ModelConfig(), seed: int = 0):
        self.vocab = vocab
        self.cfg = cfg
        torch.manual_seed(seed)
        self.model = Seq2SeqTransformer(len(vocab), cfg)
        self.max_input_tokens = cfg.max_positions
        self.max_output_tokens = cfg.max_positions - 1
        self.truncations = 0

    # tokenisation -------------------------------------------------------
    def _src(self, prompts: Sequence[str]):
        seqs = []
        for p in prompts:
            ids = self.vocab.encode(p)
            if len(ids) > self.max_input_tokens:
                self.truncations += 1
                ids = ids[: self.max_input_tokens]
            seqs.append(ids or [self.vocab.unk_id])
        return _pad(seqs, self.vocab.pad_id)

    def _tgt(self, targets: Sequence[str]):
        seqs = []
        for t in targets:
            ids = self.vocab.encode(t)
            if len(ids) > self.max_output_tokens:
                self.truncations += 1
                log.warning("target truncated from %d to %d tokens", len(ids), self.max_output_tokens)
                ids = ids[: self.max_output_tokens]
            seqs.append(ids + [self.vocab.eos_id])
        out, mask = _pad(seqs, self.vocab.pad_id)
        bos = torch.full((len(seqs), 1), self.vocab.bos_id, dtype=torch.long)
        return torch.cat([bos, out[:, :-1]], dim=1), out, mask

    # handle interface ---------------------------------------------------
    def forward(self, prompts: Sequence[str], targets: Sequence[str]) -> GeneratorOutput:
        src, src_mask = self._src(prompts)
        tgt_in, tgt_out, tgt_mask = self._tgt(targets)
        logits = self.model(src, src_mask, tgt_in)
        ce = F.cross_entropy(logits[tgt_mask], tgt_out[tgt_mask])
        return GeneratorOutput(ce, logits.softmax(-1), tgt_mask)

    @torch.no_grad()
    def generate(self, prompts: Sequence[str], max_new_tokens: int | None = None) -> list[str]:
        max_new = min(max_new_tokens or self.max_output_tokens, self.cfg.max_positions - 1)
        was_training = self.model.training
        self.model.eval()
        src, src_mask = self._src(prompts)
        memory = self.model.encode(src, src_mask)
        seq = torch.full((len(prompts), 1), self.vocab.bos_id, dtype=torch.long)
        done = torch.zeros(len(prompts), dtype=torch.bool)
        for _ in range(max_new):
            nxt = self.model.decode(seq, memory, src_mask)[:, -1].argmax(-1)
            nxt = torch.where(done, torch.full_like(nxt, self.vocab.pad_id), nxt)
            seq = torch.cat([seq, nxt[:, None]], dim=1)
            done |= nxt == self.vocab.eos_id
            if bool(done.all()):
                break
        self.model.train(was_training)
        return [self.vocab.decode(row[1:].tolist()) for row in seq]

    def add_adapters(self, rank: int, alpha: float, targets=("q", "v"), seed: int = 0) -> list[str]:
        torch.manual_seed(seed)
        return apply_lora(self.model, rank, alpha, targets)

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.model.parameters() if p.requires_grad]

    def parameter_counts(self) -> tuple[int, int]:
        return count_parameters(self.model)

    def trainable_fraction(self) -> float:
        trainable, total = self.parameter_counts()
        return trainable / total

    # persistence --------------------------------------------------------
    def base_state_dict(self) -> dict[str, torch.Tensor]:
        out = {}
        for k, v in self.model.state_dict().items():
            if ".lora_" not in k:
                out[k.replace(".base.", ".")] = v
        return out

    def adapter_state_dict(self) -> dict[str, torch.Tensor]:
        return lora_state_dict(self.model)

    def save_base(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        torch.save(self.base_state_dict(), d / "model.pt")
        self.vocab.save(d / "vocab.json")
        (d / "config.json").write_text(json.dumps(asdict(self.cfg), indent=2) + "\n")

    @classmethod
    def load_base(cls, directory: str | Path) -> "ReferenceGenerator":
        d = Path(directory)
        vocab = Vocabulary.load(d / "vocab.json")
        cfg = ModelConfig(**json.loads((d / "config.json").read_text()))
        gen = cls(vocab, cfg)
        gen.model.load_state_dict(torch.load(d / "model.pt"))
        return gen

    def load_adapters(self, state: dict[str, torch.Tensor]) -> None:
        missing = [k for k in state if k not in self.model.state_dict()]
        if missing:
            raise KeyError(f"adapter keys do not match the model: {missing[:3]}")
        self.model.load_state_dict(state, strict=False)

    def has_adapters(self) -> bool:
        return any(isinstance(m, LoRALinear) for m in self.model.modules())


class BagOfEmbeddingsEncoder(nn.Module):
    """Sentence encoder: normalised sum of content-token embeddings.

    Text without any content token maps to a fixed sentinel unit vector.
    """

    def __init__(self, vocab: Vocabulary, dim: int = 64, seed: int = 0):
        super().__init__()
        self.vocab = vocab
        self.dim = dim
        g = torch.Generator().manual_seed(seed)
        self.embedding = nn.Parameter(torch.randn(len(vocab), dim, generator=g))
        self.register_buffer("content", torch.tensor(vocab.content_mask(), dtype=torch.float32))
        sentinel = torch.randn(dim, generator=g)
        self.register_buffer("sentinel", sentinel / sentinel.norm())
        self.trainable = True

    def _table(self) -> torch.Tensor:
        return self.embedding * self.content[:, None].to(self.embedding.dtype)

    def _normalise(self, summed: torch.Tensor) -> torch.Tensor:
        norms = summed.norm(dim=-1, keepdim=True)
        empty = norms.squeeze(-1) == 0
        safe = torch.where(norms == 0, torch.ones_like(norms), norms)
        out = summed / safe
        if bool(empty.any()):
            out = torch.where(empty[:, None], self.sentinel.to(out.dtype)[None], out)
        return out

    def counts(self, texts: Sequence[str]) -> torch.Tensor:
        c = torch.zeros(len(texts), len(self.vocab), dtype=self.embedding.dtype)
        for i, text in enumerate(texts):
            for tok in self.vocab.encode(text):
                c[i, tok] += 1
        return c

    def embed(self, texts: Sequence[str]) -> torch.Tensor:
        return self._normalise(self.counts(texts) @ self._table())

    def embed_distributions(self, probs: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Embed expected-token mixtures: ``probs`` is (batch, positions, vocab)."""
        mixture = (probs * mask[..., None].to(probs.dtype)).sum(1)
        return self._normalise(mixture @ self._table().to(probs.dtype))

    @torch.no_grad()
    def embed_numpy(self, texts: Sequence[str]):
        return self.embed(list(texts)).double().numpy()

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [self.embedding] if self.trainable else []

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        torch.save(self.state_dict(), d / "encoder.pt")
        self.vocab.save(d / "vocab.json")
        (d / "config.json").write_text(json.dumps({"dim": self.dim}) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "BagOfEmbeddingsEncoder":
        d = Path(directory)
        vocab = Vocabulary.load(d / "vocab.json")
        enc = cls(vocab, json.loads((d / "config.json").read_text())["dim"])
        enc.load_state_dict(torch.load(d / "encoder.pt"))
        return enc


def pretraining_pairs(texts: Iterable[str], descriptions: dict[str, str], seed: int = 0,
                      n_combinations: int = 256) -> list[tuple[str, str]]:
    """Source/target pairs standing in for the general pretraining of a real checkpoint.

    Tasks: copying sentences, writing out definitions for named labels, and
    writing out the definitions whose label name or vocabulary occurs
    somewhere inside a longer text (a small reverse dictionary). Definitions
    always follow the order of ``descriptions``.
    """
    rng = random.Random(seed)
    texts = list(texts)
    names = list(descriptions)
    pairs = [(t, t) for t in texts]
    pairs += [(d, d) for d in descriptions.values()]
    if not names:
        return pairs
    pairs += [(f"Define: {n}", _stop(descriptions[n])) for n in names]
    vocab = _distinctive_words(descriptions)
    for _ in range(n_combinations):
        chosen = sorted(rng.sample(range(len(names)), rng.randint(1, min(3, len(names)))))
        target = " ".join(_stop(descriptions[names[i]]) for i in chosen)
        pairs.append(("Define: " + ", ".join(names[i] for i in chosen), target))
        if not texts:
            continue
        for cue in ("name", "words"):
            words = rng.choice(texts).split()
            for i in chosen:
                pool = vocab[names[i]]
                inserted = [names[i]] if cue == "name" or not pool else rng.sample(pool, min(2, len(pool)))
                for w in inserted:
                    words.insert(rng.randint(0, len(words)), w)
            pairs.append((" ".join(words), target))
    return pairs


def _distinctive_words(descriptions: dict[str, str]) -> dict[str, list[str]]:
    """Per label, the words of its description that no other description uses."""
    bags = {n: {w.strip(".,;:!?()").lower() for w in d.split()} - {n.lower()} for n, d in descriptions.items()}
    counts = Counter(w for bag in bags.values() for w in bag)
    return {n: sorted(w for w in bag if counts[w] == 1 and len(w) > 2) for n, bag in bags.items()}


def _stop(text: str) -> str:
    return text.strip().rstrip(".") + "."


def pretrain(gen: ReferenceGenerator, pairs: Sequence[tuple[str, str]], steps: int = 300,
             lr: float = 3e-3, batch_size: int = 16, seed: int = 0) -> list[float]:
    """Full-parameter training of the base model before adapters are attached."""
    if gen.has_adapters():
        raise RuntimeError("pretraining must happen before adapters are added")
    torch.manual_seed(seed)
    rng = random.Random(seed)
    opt = torch.optim.AdamW(gen.model.parameters(), lr=lr, weight_decay=0.0)
    gen.model.train()
    losses = []
    for _ in range(steps):
        batch = rng.sample(list(pairs), min(batch_size, len(pairs)))
        out = gen.forward([s for s, _ in batch], [t for _, t in batch])
        opt.zero_grad()
        out.ce.backward()
        opt.step()
        losses.append(out.ce.item())
    return losses
