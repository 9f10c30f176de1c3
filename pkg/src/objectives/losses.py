"""
Pre-training losses.

CP is an InfoNCE over dot products: each A-member must pick its own B-member
out of the B-members of the batch. MLM predicts original ids through the
tied token embedding. MTB is a logistic loss on the dot product of two
sentence representations.
"""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple, Union

import torch
import torch.nn.functional as F

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import ConfigError, EncodingError, NumericalError
from model.models import IGNORE_INDEX, ContrastiveBatch, EncodedInput, LossBreakdown, Objective
from src.encoder.batching import stack_pairs, to_tensors
from src.encoder.transformer import TransformerEncoder, entity_pair_repr

MTBExample = Tuple[EncodedInput, EncodedInput, int]


def _require_finite(*tensors: torch.Tensor) -> None:
    for t in tensors:
        if not torch.isfinite(t).all():
            raise NumericalError("non-finite value in loss input")


def cp_loss(
    x_a: torch.Tensor,
    x_b: torch.Tensor,
    negatives: Union[torch.Tensor, Sequence[torch.Tensor]],
    temperature: float = 1.0,
) -> torch.Tensor:
    """-log softmax of the positive dot product against the negatives, via logsumexp."""
    if not isinstance(negatives, torch.Tensor):
        negatives = torch.stack(list(negatives)) if len(negatives) else x_a.new_zeros((0, x_a.shape[-1]))
    if x_a.dim() != 1 or x_b.shape != x_a.shape or negatives.dim() != 2 or negatives.shape[1] != x_a.shape[0]:
        raise EncodingError(
            f"dimension mismatch: x_a {tuple(x_a.shape)}, x_b {tuple(x_b.shape)}, negatives {tuple(negatives.shape)}"
        )
    _require_finite(x_a, x_b, negatives)
    logits = torch.cat([(x_a @ x_b)[None], negatives @ x_a]) / temperature
    return torch.logsumexp(logits, dim=0) - logits[0]


def in_batch_cp_loss(reps_a: torch.Tensor, reps_b: torch.Tensor, temperature: float = 1.0) -> torch.Tensor:
    """Mean CP loss where pair i's negatives are the B-members of every other pair."""
    if reps_a.shape != reps_b.shape or reps_a.dim() != 2:
        raise EncodingError(f"dimension mismatch: {tuple(reps_a.shape)} vs {tuple(reps_b.shape)}")
    _require_finite(reps_a, reps_b)
    n = reps_a.shape[0]
    if n == 1:
        log.warning("CP loss on a single pair has no negatives; contributing 0")
        return (reps_a * 0.0).sum()
    logits = reps_a @ reps_b.T / temperature
    return F.cross_entropy(logits, torch.arange(n))


def batch_cp_loss(batch: ContrastiveBatch, model: torch.nn.Module, temperature: float = 1.0) -> torch.Tensor:
    reps = model.represent(stack_pairs(batch))
    n = len(batch)
    return in_batch_cp_loss(reps[:n], reps[n:], temperature)


def mlm_loss(
    hidden: torch.Tensor,
    mlm_labels: torch.Tensor,
    embedding: torch.Tensor,
    bias: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Mean cross-entropy over labelled positions of ``hidden @ embedding.T + bias``.

    Positions labelled -100 are ignored; with none labelled the result is a
    zero that still belongs to the graph.
    """
    vocab_size = embedding.shape[0]
    labels = mlm_labels.reshape(-1)
    selected = labels != IGNORE_INDEX
    if selected.any() and (labels[selected].min() < 0 or labels[selected].max() >= vocab_size):
        raise EncodingError(f"MLM label outside vocabulary of size {vocab_size}")
    if not selected.any():
        return (hidden * 0.0).sum()
    rows = hidden.reshape(-1, hidden.shape[-1])[selected]
    logits = rows @ embedding.T
    if bias is not None:
        logits = logits + bias
    return F.cross_entropy(logits, labels[selected])


def mtb_loss(rep_1: torch.Tensor, rep_2: torch.Tensor, label: Union[int, torch.Tensor]) -> torch.Tensor:
    """Binary cross-entropy of sigmoid(rep_1 . rep_2); averaged when given a batch."""
    if rep_1.shape != rep_2.shape:
        raise EncodingError(f"dimension mismatch: {tuple(rep_1.shape)} vs {tuple(rep_2.shape)}")
    logits = (rep_1 * rep_2).sum(-1)
    target = torch.as_tensor(label, dtype=logits.dtype).expand_as(logits)
    return F.binary_cross_entropy_with_logits(logits, target)


def _split_reps(model: torch.nn.Module, inputs: List[EncodedInput]):
    batch = to_tensors(inputs)
    if isinstance(model, TransformerEncoder):
        hidden = model(batch.ids, batch.attention_mask)
        return entity_pair_repr(hidden, batch.e1_pos, batch.e2_pos, batch.attention_mask), hidden, batch
    return model.represent(batch), None, batch


def _with_mlm(
    relational: torch.Tensor, hidden: Optional[torch.Tensor], batch, model, with_mlm: bool, objective: Objective, step: int, n_pairs: int
) -> Tuple[torch.Tensor, LossBreakdown]:
    if with_mlm:
        if hidden is None:
            raise ConfigError("the MLM term needs a transformer encoder")
        l_mlm = mlm_loss(hidden, batch.mlm_labels, model.token_embedding.weight, model.mlm_bias)
    else:
        l_mlm = relational.new_zeros(())
    n_masked = int((batch.mlm_labels != IGNORE_INDEX).sum()) if with_mlm else 0
    l_rel, l_m = relational.item(), l_mlm.item()
    breakdown = LossBreakdown(
        step=step, objective=objective, l_cp=l_rel, l_mlm=l_m, l_total=l_rel + l_m,
        n_pairs=n_pairs, n_masked=n_masked,
    )
    return relational + l_mlm, breakdown


def joint_loss(
    batch: ContrastiveBatch,
    model: torch.nn.Module,
    temperature: float = 1.0,
    with_mlm: bool = True,
    step: int = 0,
) -> Tuple[torch.Tensor, LossBreakdown]:
    """CP + MLM from one forward pass over both members of every pair."""
    n = len(batch)
    reps, hidden, tensors = _split_reps(model, [a for a, _ in batch.pairs] + [b for _, b in batch.pairs])
    l_cp = in_batch_cp_loss(reps[:n], reps[n:], temperature)
    return _with_mlm(l_cp, hidden, tensors, model, with_mlm, Objective.CP, step, n)


def batch_mtb_loss(
    examples: Sequence[MTBExample],
    model: torch.nn.Module,
    with_mlm: bool = False,
    step: int = 0,
) -> Tuple[torch.Tensor, LossBreakdown]:
    """Mean MTB loss over a batch; the relational term lands in the ``l_cp`` column."""
    n = len(examples)
    reps, hidden, tensors = _split_reps(model, [a for a, _, _ in examples] + [b for _, b, _ in examples])
    labels = torch.tensor([label for _, _, label in examples], dtype=reps.dtype)
    l_mtb = mtb_loss(reps[:n], reps[n:], labels)
    return _with_mlm(l_mtb, hidden, tensors, model, with_mlm, Objective.MTB, step, n)
