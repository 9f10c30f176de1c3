"""
Input formats for the encoder.

Each format turns a LinkedSentence into a marked token list
``[CLS] ... [E1] head [/E1] ... [E2] tail [/E2] ... [SEP]``; the five settings
differ in what is kept inside and around the markers.
"""
from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from exception.custom_exception import EncodingError
from model.models import (
    BLANK, CLS, E1, E1_END, E2, E2_END, OBJ, SEP, SUBJ,
    BlankPolicy, EntitySpan, InputSetting, LinkedSentence,
)
from src.textproc.vocab import type_token


def _mark(s: LinkedSentence, head_interior: List[str], tail_interior: List[str]) -> List[str]:
    out = [CLS]
    slots = sorted(
        [(s.head, E1, E1_END, head_interior), (s.tail, E2, E2_END, tail_interior)],
        key=lambda slot: slot[0].start,
    )
    cursor = 0
    for span, open_tok, close_tok, interior in slots:
        out.extend(s.tokens[cursor:span.start])
        out.append(open_tok)
        out.extend(interior)
        out.append(close_tok)
        cursor = span.end
    out.extend(s.tokens[cursor:])
    out.append(SEP)
    return out


def _mention(s: LinkedSentence, span: EntitySpan) -> List[str]:
    return s.tokens[span.start:span.end]


def _type_of(span: EntitySpan, role: str) -> str:
    if not span.entity_type:
        raise EncodingError(f"{role} entity has no type; the setting needs entity types")
    return type_token(span.entity_type)


def format_cm(s: LinkedSentence) -> List[str]:
    """Context + mentions."""
    return _mark(s, _mention(s, s.head), _mention(s, s.tail))


def format_ct(s: LinkedSentence) -> List[str]:
    """Context + one type token per mention."""
    return _mark(s, [_type_of(s.head, "head")], [_type_of(s.tail, "tail")])


def format_onlyc(s: LinkedSentence) -> List[str]:
    return _mark(s, [SUBJ], [OBJ])


def format_onlym(s: LinkedSentence) -> List[str]:
    return [CLS, E1, *_mention(s, s.head), E1_END, E2, *_mention(s, s.tail), E2_END, SEP]


def format_onlyt(s: LinkedSentence) -> List[str]:
    return [CLS, E1, _type_of(s.head, "head"), E1_END, E2, _type_of(s.tail, "tail"), E2_END, SEP]


# Central dictionary to register input formats
FORMAT_REGISTRY: Dict[InputSetting, Callable[[LinkedSentence], List[str]]] = {
    InputSetting.CM: format_cm,
    InputSetting.CT: format_ct,
    InputSetting.ONLYC: format_onlyc,
    InputSetting.ONLYM: format_onlym,
    InputSetting.ONLYT: format_onlyt,
}


def format_sentence(s: LinkedSentence, setting: InputSetting | str) -> List[str]:
    return FORMAT_REGISTRY[InputSetting(setting)](s)


def context_tokens(s: LinkedSentence) -> List[str]:
    """Tokens of the sentence outside both entity spans."""
    inside = set(range(s.head.start, s.head.end)) | set(range(s.tail.start, s.tail.end))
    return [tok for i, tok in enumerate(s.tokens) if i not in inside]


def marker_regions(tokens: Sequence[str]) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """Positions of ([E1], [/E1]) and ([E2], [/E2]); raises on malformed nesting."""
    positions = {}
    for marker in (E1, E1_END, E2, E2_END):
        found = [i for i, tok in enumerate(tokens) if tok == marker]
        if len(found) != 1:
            raise EncodingError(f"malformed marker nesting: expected one {marker}, found {len(found)}")
        positions[marker] = found[0]
    head = (positions[E1], positions[E1_END])
    tail = (positions[E2], positions[E2_END])
    if head[0] > head[1] or tail[0] > tail[1]:
        raise EncodingError("malformed marker nesting: closing marker before opening marker")
    if head[0] < tail[1] and tail[0] < head[1]:
        raise EncodingError("malformed marker nesting: entity regions overlap")
    return head, tail


def apply_blank_mask(
    tokens: Sequence[str],
    policy: BlankPolicy,
    rng: Optional[np.random.Generator] = None,
) -> List[str]:
    """
    Replace each entity interior by a single [BLANK] with probability ``policy.p_blank``.

    Two draws are consumed per call, head first, then tail. Without an explicit
    ``rng`` the draws come from a generator seeded with ``policy.seed``.
    """
    head, tail = marker_regions(tokens)
    if rng is None:
        rng = np.random.default_rng(policy.seed)
    blank_head = rng.random() < policy.p_blank
    blank_tail = rng.random() < policy.p_blank

    out = list(tokens)
    # rightmost region first so the left region's indices stay valid
    for (open_pos, close_pos), blank in sorted([(head, blank_head), (tail, blank_tail)], reverse=True):
        if blank:
            out[open_pos + 1:close_pos] = [BLANK]
    return out
