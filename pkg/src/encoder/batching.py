from __future__ import annotations

from typing import NamedTuple, Optional, Sequence

import torch

from exception.custom_exception import EncodingError
from model.models import ContrastiveBatch, EncodedInput
from src.textproc.encoding import relative_positions


class TensorBatch(NamedTuple):
    ids: torch.Tensor             # (B, L) long
    attention_mask: torch.Tensor  # (B, L) bool
    e1_pos: torch.Tensor          # (B,) long
    e2_pos: torch.Tensor          # (B,) long
    mlm_labels: torch.Tensor      # (B, L) long, -100 where not predicted
    positions: Optional[torch.Tensor] = None  # (B, L, 2) long, CNN only

    def __len__(self) -> int:
        return int(self.ids.shape[0])


def to_tensors(inputs: Sequence[EncodedInput], clip: Optional[int] = None) -> TensorBatch:
    """
    Stack encoded inputs of one padded length.

    With ``clip`` set, each row also carries the clipped relative positions to
    its [E1] and [E2] markers, shifted into ``[0, 2*clip]``.
    """
    if not inputs:
        raise EncodingError("cannot build a tensor batch from zero inputs")
    lengths = {len(enc.ids) for enc in inputs}
    if len(lengths) != 1:
        raise EncodingError(f"inputs padded to different lengths: {sorted(lengths)}")
    (width,) = lengths

    positions = None
    if clip is not None:
        positions = torch.tensor(
            [relative_positions(width, enc.e1_pos, enc.e2_pos, clip) for enc in inputs], dtype=torch.long
        )
    return TensorBatch(
        ids=torch.tensor([enc.ids for enc in inputs], dtype=torch.long),
        attention_mask=torch.tensor([enc.attention_mask for enc in inputs], dtype=torch.bool),
        e1_pos=torch.tensor([enc.e1_pos for enc in inputs], dtype=torch.long),
        e2_pos=torch.tensor([enc.e2_pos for enc in inputs], dtype=torch.long),
        mlm_labels=torch.tensor([enc.mlm_labels for enc in inputs], dtype=torch.long),
        positions=positions,
    )


def stack_pairs(batch: ContrastiveBatch, clip: Optional[int] = None) -> TensorBatch:
    """All A members, then all B members, so rows i and N+i form pair i."""
    return to_tensors([a for a, _ in batch.pairs] + [b for _, b in batch.pairs], clip)
