"""Distant-supervision labelling, bag construction and corpus bookkeeping."""
from __future__ import annotations

import math
from collections import Counter
from typing import Dict, Iterable, List, Sequence, Set, Tuple

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import CorpusFormatError, SamplingError
from model.models import (
    CorpusStats,
    LabelingReport,
    LinkedSentence,
    PairIndex,
    RelationBag,
    TripleStore,
)
from utils.seeding import derive_rng


def assign_relations(
    sentences: Sequence[LinkedSentence], kg: TripleStore
) -> Tuple[List[LinkedSentence], LabelingReport]:
    """
    Label each sentence with every relation the KG holds for its ordered entity pair.

    A pair matching k relations yields k labelled copies (sorted by relation id);
    unmatched sentences are dropped and sentences lacking a kg_id are skipped.
    """
    report = LabelingReport(input_sentences=len(sentences))
    labeled: List[LinkedSentence] = []
    for s in sentences:
        head_id, tail_id = s.entity_pair
        if head_id is None or tail_id is None:
            report.skipped_missing_id += 1
            continue
        relations = kg.relations_for(head_id, tail_id)
        if not relations:
            report.dropped_unmatched += 1
            continue
        if len(relations) > 1:
            report.duplicated += len(relations) - 1
        labeled.extend(s.with_relation(r) for r in relations)
    report.labeled = len(labeled)
    if report.skipped_missing_id:
        log.warning("Sentences without kg ids skipped", count=report.skipped_missing_id)
    log.info("Relations assigned", **report.model_dump())
    return labeled, report


def build_bags(sentences: Sequence[LinkedSentence]) -> RelationBag:
    bags: Dict[str, List[int]] = {}
    for i, s in enumerate(sentences):
        if s.relation_id is None:
            raise CorpusFormatError(f"sentence {i} has no relation label; bags need labelled sentences")
        bags.setdefault(s.relation_id, []).append(i)
    return RelationBag(bags=dict(sorted(bags.items())))


def filter_leakage(
    sentences: Sequence[LinkedSentence],
    test_pairs: Set[Tuple[str, str]],
    symmetric: bool = False,
) -> List[LinkedSentence]:
    """Drop sentences whose ordered (head, tail) pair is a test pair; order is preserved."""
    excluded = set(test_pairs)
    if symmetric:
        excluded |= {(t, h) for h, t in test_pairs}
    kept = [s for s in sentences if s.entity_pair not in excluded]
    if len(kept) != len(sentences):
        log.info("Leaking sentences removed", removed=len(sentences) - len(kept), symmetric=symmetric)
    return kept


def build_pair_index(sentences: Sequence[LinkedSentence]) -> PairIndex:
    pairs: Dict[Tuple[str, str], List[int]] = {}
    entities: Dict[str, List[int]] = {}
    for i, s in enumerate(sentences):
        head_id, tail_id = s.entity_pair
        if head_id is None or tail_id is None:
            continue
        pairs.setdefault((head_id, tail_id), []).append(i)
        entities.setdefault(head_id, []).append(i)
        if tail_id != head_id:
            entities.setdefault(tail_id, []).append(i)
    return PairIndex(pairs=pairs, entities=entities)


def corpus_stats(sentences: Sequence[LinkedSentence]) -> CorpusStats:
    bag_sizes = Counter(s.relation_id for s in sentences if s.relation_id is not None)
    histogram = Counter(bag_sizes.values())
    pairs = {s.entity_pair for s in sentences if None not in s.entity_pair}
    return CorpusStats(
        num_sentences=len(sentences),
        num_relations=len(bag_sizes),
        bag_size_histogram=dict(sorted(histogram.items())),
        distinct_entity_pairs=len(pairs),
    )


def group_by_relation(sentences: Sequence[LinkedSentence]) -> Dict[str, List[int]]:
    return build_bags(sentences).bags


def split_by_relation(
    sentences: Sequence[LinkedSentence], relations: Iterable[str]
) -> Tuple[List[LinkedSentence], List[LinkedSentence]]:
    """Partition into (sentences labelled with one of ``relations``, the rest)."""
    wanted = set(relations)
    selected = [s for s in sentences if s.relation_id in wanted]
    rest = [s for s in sentences if s.relation_id not in wanted]
    return selected, rest


def split_corpus(
    sentences: Sequence[LinkedSentence],
    ratios: Tuple[float, float, float],
    seed: int,
) -> Tuple[List[LinkedSentence], List[LinkedSentence], List[LinkedSentence]]:
    """Stratified train/dev/test split; every relation keeps at least one training sentence."""
    rng = derive_rng(seed, "split")
    parts: Tuple[List[int], List[int], List[int]] = ([], [], [])
    for relation, indices in group_by_relation(sentences).items():
        order = [int(i) for i in rng.permutation(indices)]
        n = len(order)
        n_dev = math.floor(n * ratios[1])
        n_test = math.floor(n * ratios[2])
        if n - n_dev - n_test < 1:
            n_test = max(0, n - n_dev - 1)
            n_dev = min(n_dev, n - 1 - n_test)
        parts[1].extend(order[:n_dev])
        parts[2].extend(order[n_dev:n_dev + n_test])
        parts[0].extend(order[n_dev + n_test:])
    train, dev, test = ([sentences[i] for i in sorted(p)] for p in parts)
    log.info("Corpus split", train=len(train), dev=len(dev), test=len(test))
    return train, dev, test


def require_relations(by_relation: Dict[str, List[int]], minimum: int, needed: int, what: str) -> List[str]:
    """Relations with at least ``minimum`` sentences; raises when fewer than ``needed`` exist."""
    eligible = sorted(r for r, idx in by_relation.items() if len(idx) >= minimum)
    if len(eligible) < needed:
        raise SamplingError(
            f"{what} needs {needed} relations with >= {minimum} sentences, only {len(eligible)} available"
        )
    return eligible

