"""
Compact BERT-style encoder.

Post-layer-norm transformer blocks over learned token and absolute position
embeddings. The relation representation of a marked sentence is the
concatenation of the hidden states at its [E1] and [E2] markers.
"""
from __future__ import annotations

import math
from typing import List, Tuple, Union

import torch
import torch.nn.functional as F
from torch import nn

from exception.custom_exception import EncodingError
from model.models import EncodedInput, EncoderConfig
from src.encoder.batching import TensorBatch, to_tensors
from utils.seeding import torch_generator

INIT_STD = 0.02


def dtype_of(cfg: EncoderConfig) -> torch.dtype:
    return torch.float64 if cfg.precision == "float64" else torch.float32


class SelfAttention(nn.Module):
    def __init__(self, hidden_dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = hidden_dim // heads
        self.query = nn.Linear(hidden_dim, hidden_dim)
        self.key = nn.Linear(hidden_dim, hidden_dim)
        self.value = nn.Linear(hidden_dim, hidden_dim)
        self.output = nn.Linear(hidden_dim, hidden_dim)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        return x.view(b, n, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, x: torch.Tensor, attention_mask: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        b, n, h = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        # padded keys get -inf so they carry zero attention weight
        scores = scores.masked_fill(~attention_mask[:, None, None, :], float("-inf"))
        probs = torch.softmax(scores, dim=-1)
        context = (self.dropout(probs) @ v).transpose(1, 2).reshape(b, n, h)
        return self.output(context), probs


class TransformerLayer(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.attention = SelfAttention(cfg.hidden_dim, cfg.heads, cfg.dropout)
        self.attention_norm = nn.LayerNorm(cfg.hidden_dim, eps=cfg.layer_norm_eps)
        self.ffn_in = nn.Linear(cfg.hidden_dim, cfg.ffn_dim)
        self.ffn_out = nn.Linear(cfg.ffn_dim, cfg.hidden_dim)
        self.ffn_norm = nn.LayerNorm(cfg.hidden_dim, eps=cfg.layer_norm_eps)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, attention_mask: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        attended, probs = self.attention(x, attention_mask)
        x = self.attention_norm(x + self.dropout(attended))
        x = self.ffn_norm(x + self.dropout(self.ffn_out(F.gelu(self.ffn_in(x)))))
        return x, probs


class TransformerEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.hidden_dim)
        self.position_embedding = nn.Embedding(cfg.max_len, cfg.hidden_dim)
        self.embedding_norm = nn.LayerNorm(cfg.hidden_dim, eps=cfg.layer_norm_eps)
        self.layers = nn.ModuleList([TransformerLayer(cfg) for _ in range(cfg.layers)])
        # output bias of the MLM head; the output matrix is tied to token_embedding
        self.mlm_bias = nn.Parameter(torch.zeros(cfg.vocab_size))
        self.dropout = nn.Dropout(cfg.dropout)

    @property
    def repr_dim(self) -> int:
        return 2 * self.cfg.hidden_dim

    def _check_input(self, ids: torch.Tensor, attention_mask: torch.Tensor) -> None:
        if ids.dim() != 2 or ids.shape != attention_mask.shape:
            raise EncodingError(f"ids {tuple(ids.shape)} and mask {tuple(attention_mask.shape)} must be matching (B, L)")
        if ids.shape[1] > self.cfg.max_len:
            raise EncodingError(f"input length {ids.shape[1]} exceeds encoder max_len {self.cfg.max_len}")
        if ids.numel() and (ids.min() < 0 or ids.max() >= self.cfg.vocab_size):
            raise EncodingError(f"token id outside vocabulary of size {self.cfg.vocab_size}")
        if not attention_mask.any(dim=1).all():
            raise EncodingError("every row needs at least one unmasked position")

    def forward(
        self, ids: torch.Tensor, attention_mask: torch.Tensor, return_attention: bool = False
    ) -> Union[torch.Tensor, Tuple[torch.Tensor, List[torch.Tensor]]]:
        """Hidden states (B, L, H); with ``return_attention`` also each layer's (B, heads, L, L) weights."""
        attention_mask = attention_mask.bool()
        self._check_input(ids, attention_mask)
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.token_embedding(ids) + self.position_embedding(positions)[None, :, :]
        x = self.dropout(self.embedding_norm(x))
        attentions = []
        for layer in self.layers:
            x, probs = layer(x, attention_mask)
            attentions.append(probs)
        return (x, attentions) if return_attention else x

    def mlm_logits(self, hidden: torch.Tensor) -> torch.Tensor:
        return hidden @ self.token_embedding.weight.T + self.mlm_bias

    def represent(self, batch: TensorBatch) -> torch.Tensor:
        hidden = self(batch.ids, batch.attention_mask)
        return entity_pair_repr(hidden, batch.e1_pos, batch.e2_pos, batch.attention_mask)


@torch.no_grad()
def init_weights(model: nn.Module, seed: int) -> None:
    gen = torch_generator(seed, "init")
    for module in model.modules():
        if isinstance(module, nn.LayerNorm):
            module.weight.fill_(1.0)
            module.bias.zero_()
        elif isinstance(module, (nn.Linear, nn.Embedding, nn.Conv1d)):
            # drawn at float64 so float32 models share the same values up to rounding
            sample = torch.empty(module.weight.shape, dtype=torch.float64).normal_(0.0, INIT_STD, generator=gen)
            module.weight.copy_(sample)
            if getattr(module, "bias", None) is not None:
                module.bias.zero_()
    for param in model.parameters(recurse=False):
        param.zero_()


def init_params(cfg: EncoderConfig, seed: int) -> TransformerEncoder:
    """Seeded N(0, 0.02) weights and embeddings, unit layer-norm scales, zero biases."""
    model = TransformerEncoder(cfg).to(dtype_of(cfg))
    init_weights(model, seed)
    return model.eval()


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def forward(model: TransformerEncoder, enc_input: EncodedInput) -> torch.Tensor:
    """Per-position hidden states (L, H) of a single encoded input."""
    batch = to_tensors([enc_input])
    return model(batch.ids, batch.attention_mask)[0]


def entity_pair_repr(
    hidden: torch.Tensor,
    e1_pos: Union[int, torch.Tensor],
    e2_pos: Union[int, torch.Tensor],
    attention_mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """
    Gather the [E1] and [E2] rows and concatenate them.

    Accepts a single (L, H) matrix with integer positions or a (B, L, H) batch
    with (B,) position tensors; returns (2H,) or (B, 2H).
    """
    single = hidden.dim() == 2
    if single:
        hidden = hidden[None]
        e1_pos = torch.as_tensor([int(e1_pos)])
        e2_pos = torch.as_tensor([int(e2_pos)])
        if attention_mask is not None:
            attention_mask = attention_mask.reshape(1, -1)
    b, n, _ = hidden.shape
    for name, pos in (("e1_pos", e1_pos), ("e2_pos", e2_pos)):
        if pos.min() < 0 or pos.max() >= n:
            raise EncodingError(f"{name} outside the sequence of length {n}")
        if attention_mask is not None and not attention_mask.bool()[torch.arange(b), pos].all():
            raise EncodingError(f"{name} points at a padded slot")
    rows = torch.arange(b)
    out = torch.cat([hidden[rows, e1_pos], hidden[rows, e2_pos]], dim=-1)
    return out[0] if single else out
