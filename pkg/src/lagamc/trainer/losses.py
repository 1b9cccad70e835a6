"""Semantic and hybrid losses and the learnable mixing weight."""
from __future__ import annotations

import math

import torch
from torch import nn


class MixingWeight(nn.Module):
    """Weight in (0, 1) parameterised as ``sigmoid(raw)``."""

    def __init__(self, init: float = 0.5, dtype: torch.dtype = torch.float32):
        super().__init__()
        if not 0.0 < init < 1.0:
            raise ValueError("initial mixing weight must lie strictly between 0 and 1")
        self.raw = nn.Parameter(torch.tensor(math.log(init / (1.0 - init)), dtype=dtype))

    @classmethod
    def from_raw(cls, raw: float, dtype: torch.dtype = torch.float64) -> "MixingWeight":
        mw = cls(0.5, dtype)
        with torch.no_grad():
            mw.raw.fill_(raw)
        return mw

    def tensor(self) -> torch.Tensor:
        return torch.sigmoid(self.raw)

    def value(self) -> float:
        return float(self.tensor().detach())


def semantic_loss(v_gen, v_target) -> torch.Tensor:
    """``1 - cos(v_gen, v_target)`` along the last axis.

    Inputs are expected to be unit vectors; they are renormalised anyway so
    the result is a cosine even if they drift slightly.
    """
    v_gen = torch.as_tensor(v_gen)
    v_target = torch.as_tensor(v_target, dtype=v_gen.dtype)
    if v_gen.shape[-1] != v_target.shape[-1]:
        raise ValueError(f"dimension mismatch: {v_gen.shape[-1]} vs {v_target.shape[-1]}")
    n_gen = v_gen.norm(dim=-1)
    n_tgt = v_target.norm(dim=-1)
    if bool((n_gen == 0).any()) or bool((n_tgt == 0).any()):
        raise ValueError("semantic loss is undefined for zero vectors")
    cos = (v_gen * v_target).sum(-1) / (n_gen * n_tgt)
    return 1.0 - cos


def hybrid_loss(ce, sem, lam: MixingWeight) -> torch.Tensor:
    ce = torch.as_tensor(ce, dtype=lam.raw.dtype)
    sem = torch.as_tensor(sem, dtype=lam.raw.dtype)
    if not (torch.isfinite(ce).all() and torch.isfinite(sem).all()):
        raise ValueError("hybrid loss inputs must be finite")
    w = lam.tensor()
    return w * ce + (1.0 - w) * sem
