from __future__ import annotations

import torch
from torch import nn

from exception.custom_exception import EncodingError
from model.models import EncoderConfig
from src.encoder.batching import TensorBatch
from src.encoder.transformer import init_weights, dtype_of


class CNNEncoder(nn.Module):
    """
    Sentence CNN baseline.

    Each token is its word embedding concatenated with two embeddings of its
    clipped offsets to the head and tail markers. One same-padded convolution,
    max-pooling over unpadded positions and tanh give a ``filters``-dim vector.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.hidden_dim)
        self.head_position = nn.Embedding(2 * cfg.clip + 1, cfg.pos_dim)
        self.tail_position = nn.Embedding(2 * cfg.clip + 1, cfg.pos_dim)
        self.conv = nn.Conv1d(cfg.hidden_dim + 2 * cfg.pos_dim, cfg.filters, cfg.window, padding="same")

    @property
    def repr_dim(self) -> int:
        return self.cfg.filters

    def forward(self, ids: torch.Tensor, positions: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        attention_mask = attention_mask.bool()
        if positions.shape != (*ids.shape, 2):
            raise EncodingError(f"position features {tuple(positions.shape)} do not match ids {tuple(ids.shape)}")
        if positions.min() < 0 or positions.max() > 2 * self.cfg.clip:
            raise EncodingError(f"position features must be clipped to [0, {2 * self.cfg.clip}]")
        x = torch.cat(
            [self.token_embedding(ids), self.head_position(positions[..., 0]), self.tail_position(positions[..., 1])],
            dim=-1,
        )
        # zeroed padding keeps padded slots out of every window
        x = x * attention_mask[..., None].to(x.dtype)
        conv = self.conv(x.transpose(1, 2))
        conv = conv.masked_fill(~attention_mask[:, None, :], float("-inf"))
        return torch.tanh(conv.max(dim=-1).values)

    def represent(self, batch: TensorBatch) -> torch.Tensor:
        positions = batch.positions
        if positions is None:
            offsets = torch.arange(batch.ids.shape[1])[None, :]
            clip = self.cfg.clip
            positions = torch.stack(
                [
                    (offsets - batch.e1_pos[:, None]).clamp(-clip, clip) + clip,
                    (offsets - batch.e2_pos[:, None]).clamp(-clip, clip) + clip,
                ],
                dim=-1,
            )
        return self(batch.ids, positions, batch.attention_mask)


def init_cnn_params(cfg: EncoderConfig, seed: int) -> CNNEncoder:
    model = CNNEncoder(cfg).to(dtype_of(cfg))
    init_weights(model, seed)
    return model.eval()


def cnn_forward(model: CNNEncoder, ids: torch.Tensor, positions: torch.Tensor, attention_mask: torch.Tensor | None = None) -> torch.Tensor:
    """Sentence vector(s) for one (L,) or a batch (B, L) of token ids."""
    single = ids.dim() == 1
    if single:
        ids, positions = ids[None], positions[None]
        attention_mask = None if attention_mask is None else attention_mask[None]
    if attention_mask is None:
        attention_mask = torch.ones_like(ids, dtype=torch.bool)
    out = model(ids, positions, attention_mask)
    return out[0] if single else out
