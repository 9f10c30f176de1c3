from __future__ import annotations

import statistics
from typing import Hashable, Optional, Sequence, Tuple

from exception.custom_exception import RelationCPException


def _check_lengths(gold: Sequence, pred: Sequence) -> None:
    if len(gold) != len(pred):
        raise RelationCPException(f"gold and predicted labels differ in length ({len(gold)} vs {len(pred)})")


def precision_recall_f1(
    gold: Sequence[Hashable], pred: Sequence[Hashable], na_label: Optional[Hashable] = None
) -> Tuple[float, float, float]:
    """
    Micro precision/recall/F1 that ignores ``na_label`` on both sides.

    Zero denominators give 0. Without ``na_label`` every instance counts as
    guessed and gold, so all three equal accuracy.
    """
    _check_lengths(gold, pred)
    correct = guessed = relevant = 0
    for g, p in zip(gold, pred):
        if p != na_label:
            guessed += 1
        if g != na_label:
            relevant += 1
        if g == p and g != na_label:
            correct += 1
    precision = correct / guessed if guessed else 0.0
    recall = correct / relevant if relevant else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def micro_f1(gold: Sequence[Hashable], pred: Sequence[Hashable], na_label: Optional[Hashable] = None) -> float:
    return precision_recall_f1(gold, pred, na_label)[2]


def accuracy(gold: Sequence[Hashable], pred: Sequence[Hashable]) -> float:
    _check_lengths(gold, pred)
    if not gold:
        return 0.0
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)


def median(values: Sequence[float]) -> float:
    if not values:
        raise RelationCPException("median of an empty sequence")
    return statistics.median(values)

