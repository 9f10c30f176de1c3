"""
Pair sampling for pre-training.

Each batch owns a random stream derived from ``(seed, kind, batch_index)``.
Draw order inside a CP batch: relations, then the two sentence indices of
every pair, then per pair the A sentence ([BLANK] head, [BLANK] tail, MLM
draws left to right) followed by the B sentence in the same order.
"""
from __future__ import annotations

from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import SamplingError
from model.models import (
    BlankPolicy,
    ContrastiveBatch,
    EncodedInput,
    InputSetting,
    LinkedSentence,
    Objective,
    PairIndex,
    RelationBag,
    SamplerConfig,
)
from src.textproc.encoding import prepare_input
from src.textproc.vocab import Vocab
from utils.seeding import derive_rng

MTBExample = Tuple[EncodedInput, EncodedInput, int]


def sample_relation(bags: RelationBag, rng: np.random.Generator, relations: Optional[Sequence[str]] = None) -> str:
    """Draw a relation with probability proportional to its bag size."""
    candidates = sorted(relations if relations is not None else bags.bags)
    sizes = np.array([len(bags.bags.get(r, ())) for r in candidates], dtype=np.float64)
    if not candidates or sizes.sum() == 0:
        raise SamplingError("cannot sample a relation from empty bags")
    return candidates[int(rng.choice(len(candidates), p=sizes / sizes.sum()))]


def sample_positive_pair(bags: RelationBag, relation_id: str, rng: np.random.Generator) -> Tuple[int, int]:
    bag = bags.bags.get(relation_id, [])
    if len(bag) < 2:
        raise SamplingError(f"degenerate bag for relation {relation_id!r}: {len(bag)} sentence(s)")
    a, b = rng.choice(len(bag), size=2, replace=False)
    return bag[int(a)], bag[int(b)]


def _batch_relations(bags: RelationBag, cfg: SamplerConfig, rng: np.random.Generator) -> List[str]:
    eligible = bags.eligible(2)
    if cfg.distinct_relations_in_batch:
        if len(eligible) < cfg.batch_pairs:
            raise SamplingError(
                f"batch of {cfg.batch_pairs} distinct relations requested but only {len(eligible)} relations "
                f"have >= 2 sentences (short by {cfg.batch_pairs - len(eligible)})"
            )
        chosen: List[str] = []
        remaining = list(eligible)
        for _ in range(cfg.batch_pairs):
            r = sample_relation(bags, rng, remaining)
            chosen.append(r)
            remaining.remove(r)
        return chosen
    if not eligible:
        raise SamplingError("no relation has >= 2 sentences; cannot form positive pairs")
    return [sample_relation(bags, rng, eligible) for _ in range(cfg.batch_pairs)]


def build_cp_batch(
    corpus: Sequence[LinkedSentence],
    bags: RelationBag,
    cfg: SamplerConfig,
    vocab: Vocab,
    batch_index: int = 0,
) -> ContrastiveBatch:
    rng = derive_rng(cfg.seed, Objective.CP.value, batch_index)
    relations = _batch_relations(bags, cfg, rng)
    index_pairs = [sample_positive_pair(bags, r, rng) for r in relations]

    blank = BlankPolicy(p_blank=cfg.p_blank, seed=cfg.seed)
    pairs = []
    for a, b in index_pairs:
        enc_a = prepare_input(corpus[a], InputSetting.CM, vocab, cfg.max_len, blank, cfg.mlm_rate, rng)
        enc_b = prepare_input(corpus[b], InputSetting.CM, vocab, cfg.max_len, blank, cfg.mlm_rate, rng)
        pairs.append((enc_a, enc_b))

    if len(pairs) == 1:
        log.warning("CP batch has a single pair and therefore no negatives", batch_index=batch_index)
    return ContrastiveBatch(
        pairs=pairs,
        relation_ids=relations,
        sentence_indices=index_pairs,
        batch_index=batch_index,
        distinct_relations=cfg.distinct_relations_in_batch,
    )


def _shared_entity_candidates(corpus: Sequence[LinkedSentence], pair_index: PairIndex, anchor: int) -> List[int]:
    a_pair = corpus[anchor].entity_pair
    a_ents = set(a_pair)
    seen = set()
    for ent in a_ents:
        seen.update(pair_index.entities.get(ent, ()))
    out = []
    for j in sorted(seen):
        pair = corpus[j].entity_pair
        if pair != a_pair and len(a_ents & set(pair)) == 1:
            out.append(j)
    return out


def _sample_negative(
    corpus: Sequence[LinkedSentence], pair_index: PairIndex, indexed: List[int], rng: np.random.Generator
) -> Tuple[int, int]:
    anchor = indexed[int(rng.integers(len(indexed)))]
    hard = _shared_entity_candidates(corpus, pair_index, anchor)
    if hard:
        return anchor, hard[int(rng.integers(len(hard)))]
    others = [j for j in indexed if corpus[j].entity_pair != corpus[anchor].entity_pair]
    if not others:
        raise SamplingError("every sentence mentions the same entity pair; no MTB negative exists")
    return anchor, others[int(rng.integers(len(others)))]


def build_mtb_batch(
    corpus: Sequence[LinkedSentence],
    pair_index: PairIndex,
    cfg: SamplerConfig,
    vocab: Vocab,
    batch_index: int = 0,
    mlm_rate: float = 0.0,
) -> List[MTBExample]:
    """
    Half positives (two sentences of one ordered entity pair), half negatives.

    Negatives prefer a sentence sharing exactly one entity with the anchor and
    fall back to any sentence with a different pair.
    """
    multi = pair_index.multi_sentence_pairs()
    if not multi:
        raise SamplingError("no entity pair has two or more sentences; MTB positives impossible")
    rng = derive_rng(cfg.seed, Objective.MTB.value, batch_index)
    indexed = sorted(i for idx in pair_index.pairs.values() for i in idx)

    n_pos = cfg.batch_pairs // 2
    n_neg = cfg.batch_pairs - n_pos
    plan: List[Tuple[int, int, int]] = []
    for _ in range(n_pos):
        sentences = pair_index.pairs[multi[int(rng.integers(len(multi)))]]
        a, b = rng.choice(len(sentences), size=2, replace=False)
        plan.append((sentences[int(a)], sentences[int(b)], 1))
    for _ in range(n_neg):
        a, b = _sample_negative(corpus, pair_index, indexed, rng)
        plan.append((a, b, 0))

    blank = BlankPolicy(p_blank=cfg.p_blank, seed=cfg.seed)
    examples: List[MTBExample] = []
    for a, b, label in plan:
        enc_a = prepare_input(corpus[a], InputSetting.CM, vocab, cfg.max_len, blank, mlm_rate, rng)
        enc_b = prepare_input(corpus[b], InputSetting.CM, vocab, cfg.max_len, blank, mlm_rate, rng)
        examples.append((enc_a, enc_b, label))
    return examples


def iterate_batches(
    kind: Objective,
    corpus: Sequence[LinkedSentence],
    cfg: SamplerConfig,
    vocab: Vocab,
    start: int = 0,
    count: int = 1,
    bags: Optional[RelationBag] = None,
    pair_index: Optional[PairIndex] = None,
) -> Iterator[Tuple[int, object]]:
    for batch_index in range(start, start + count):
        if kind == Objective.CP:
            yield batch_index, build_cp_batch(corpus, bags, cfg, vocab, batch_index)
        else:
            yield batch_index, build_mtb_batch(corpus, pair_index, cfg, vocab, batch_index)
