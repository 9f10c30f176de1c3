"""
N-way K-shot evaluation with dot-product prototypes.

A class prototype is the mean relation representation of its supports; a
query goes to the prototype with the largest dot product.
"""
from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import SamplingError
from model.models import EncodedInput, Episode, EvalReport, FewShotHyper, InputSetting, LinkedSentence, OptimizerConfig
from src.corpus.labeling import group_by_relation, require_relations
from src.encoder.batching import to_tensors
from src.objectives.optimizer import build_optimizer
from src.tasks.finetune import check_setting, encode_inputs
from src.textproc.vocab import Vocab
from utils.seeding import derive_rng, derive_seed


def sample_episode(
    sentences: Sequence[LinkedSentence],
    by_relation: Dict[str, List[int]],
    n_way: int,
    k_shot: int,
    q_queries: int,
    rng: np.random.Generator,
) -> Episode:
    """
    Draw order: the n_way classes (uniform, without replacement, over relations
    with at least k_shot + 1 sentences), the class of every query, then per
    class its supports and queries jointly without replacement.
    """
    eligible = require_relations(by_relation, k_shot + 1, n_way, f"{n_way}-way {k_shot}-shot episode")
    classes = [eligible[int(i)] for i in rng.choice(len(eligible), size=n_way, replace=False)]
    query_classes = [int(c) for c in rng.integers(n_way, size=q_queries)]

    support: List[List[int]] = []
    queries_by_class: Dict[int, List[int]] = {}
    for c, relation in enumerate(classes):
        bag = by_relation[relation]
        need = k_shot + query_classes.count(c)
        if need > len(bag):
            raise SamplingError(f"relation {relation!r} has {len(bag)} sentences, episode needs {need}")
        drawn = [bag[int(i)] for i in rng.choice(len(bag), size=need, replace=False)]
        support.append(drawn[:k_shot])
        queries_by_class[c] = drawn[k_shot:]

    query_indices: List[int] = []
    cursor = {c: 0 for c in range(n_way)}
    for c in query_classes:
        query_indices.append(queries_by_class[c][cursor[c]])
        cursor[c] += 1

    return Episode(
        n_way=n_way,
        k_shot=k_shot,
        relation_ids=classes,
        support=[[sentences[i] for i in row] for row in support],
        queries=[(sentences[i], c) for i, c in zip(query_indices, query_classes)],
        support_indices=support,
        query_indices=query_indices,
    )


def prototype_scores(support_reps: torch.Tensor, query_reps: torch.Tensor) -> torch.Tensor:
    """(N, K, D) supports and (Q, D) queries -> (Q, N) dot products with the class means."""
    return query_reps @ support_reps.mean(dim=1).T


def prototype_predict(support_reps: torch.Tensor, query_reps: torch.Tensor) -> List[int]:
    # argmax returns the first maximal index, so ties go to the lowest class
    return [int(i) for i in prototype_scores(support_reps, query_reps).argmax(dim=-1)]


@torch.no_grad()
def represent_all(model: nn.Module, inputs: Sequence[EncodedInput], batch_size: int = 64) -> torch.Tensor:
    model.eval()
    chunks = [model.represent(to_tensors(inputs[i:i + batch_size])) for i in range(0, len(inputs), batch_size)]
    return torch.cat(chunks)


def proto_classify(
    episode: Episode, model: nn.Module, setting: InputSetting, vocab: Vocab, max_len: int
) -> List[int]:
    support_inputs = encode_inputs([s for row in episode.support for s in row], setting, vocab, max_len)
    query_inputs = encode_inputs([q for q, _ in episode.queries], setting, vocab, max_len)
    support_reps = represent_all(model, support_inputs).view(episode.n_way, episode.k_shot, -1)
    return prototype_predict(support_reps, represent_all(model, query_inputs))


def evaluate_fewshot(
    model: nn.Module,
    sentences: Sequence[LinkedSentence],
    n_way: int,
    k_shot: int,
    episodes: int,
    seed: int,
    vocab: Vocab,
    setting: InputSetting = InputSetting.CM,
    q_queries: int = 1,
    max_len: int = 64,
) -> EvalReport:
    """
    Accuracy over ``episodes`` episodes; episode i draws from the ``("episode", i)`` stream.

    Every sentence is encoded once up front, so the result does not depend on
    the order in which episodes are scored.
    """
    check_setting(sentences, setting)
    by_relation = group_by_relation(sentences)
    reps = represent_all(model, encode_inputs(sentences, setting, vocab, max_len))

    correct = total = 0
    for i in range(episodes):
        episode = sample_episode(sentences, by_relation, n_way, k_shot, q_queries, derive_rng(seed, "episode", i))
        support_reps = reps[torch.tensor(episode.support_indices)]
        preds = prototype_predict(support_reps, reps[torch.tensor(episode.query_indices)])
        correct += sum(p == gold for p, (_, gold) in zip(preds, episode.queries))
        total += len(preds)

    acc = correct / total
    log.info("Few-shot evaluation", n_way=n_way, k_shot=k_shot, episodes=episodes, accuracy=acc, seed=seed)
    return EvalReport(metric="accuracy", per_seed=[acc], median=acc, seeds=[seed], episodes=episodes)


def train_fewshot(
    model: nn.Module,
    sentences: Sequence[LinkedSentence],
    n_way: int,
    k_shot: int,
    q_queries: int,
    hyper: FewShotHyper,
    vocab: Vocab,
    seed: int,
    setting: InputSetting = InputSetting.CM,
) -> List[float]:
    """
    Episodic fine-tuning: cross-entropy of the query against prototype dot
    products, averaged over ``episodes_per_step`` episodes per update.
    Episodes come from the ``("fewshot-train", step, j)`` streams. Returns the
    loss per step; ``model`` is updated in place.
    """
    check_setting(sentences, setting)
    by_relation = group_by_relation(sentences)
    inputs = encode_inputs(sentences, setting, vocab, hyper.max_len)
    optimizer = build_optimizer(model, OptimizerConfig(lr=hyper.lr))
    torch.manual_seed(derive_seed(seed, "dropout"))

    losses: List[float] = []
    for step in range(hyper.steps):
        model.train()
        step_loss: Optional[torch.Tensor] = None
        for j in range(hyper.episodes_per_step):
            episode = sample_episode(sentences, by_relation, n_way, k_shot, q_queries,
                                     derive_rng(seed, "fewshot-train", step, j))
            rows = [i for row in episode.support_indices for i in row] + episode.query_indices
            reps = model.represent(to_tensors([inputs[i] for i in rows]))
            n_support = n_way * k_shot
            scores = prototype_scores(reps[:n_support].view(n_way, k_shot, -1), reps[n_support:])
            gold = torch.tensor([c for _, c in episode.queries], dtype=torch.long)
            loss = F.cross_entropy(scores, gold) / hyper.episodes_per_step
            step_loss = loss if step_loss is None else step_loss + loss
        optimizer.zero_grad()
        step_loss.backward()
        optimizer.step()
        losses.append(step_loss.item())
    model.eval()
    if losses:
        log.info("Episodic training finished", steps=len(losses), first_loss=losses[0], last_loss=losses[-1])
    return losses
