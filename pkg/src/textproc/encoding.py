from __future__ import annotations

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from exception.custom_exception import EncodingError
from model.models import (
    CLS, E1, E2, IGNORE_INDEX, MASK_ID, PAD_ID, RESERVED_TOKENS, SEP, STRUCTURAL_TOKENS,
    BlankPolicy, EncodedInput, InputSetting, LinkedSentence,
)
from src.textproc.formats import apply_blank_mask, format_sentence, marker_regions
from src.textproc.vocab import Vocab

# six structural tokens plus one content token
MIN_MAX_LEN = len(STRUCTURAL_TOKENS) + 1
NUM_RESERVED = len(RESERVED_TOKENS)


def _truncate(tokens: List[str], max_len: int) -> List[str]:
    """Elide non-structural tokens right-to-left: context first, then entity interiors."""
    excess = len(tokens) - max_len
    if excess <= 0:
        return tokens
    (h_open, h_close), (t_open, t_close) = marker_regions(tokens)

    def interior(i: int) -> bool:
        return h_open < i < h_close or t_open < i < t_close

    structural = {i for i, tok in enumerate(tokens) if tok in STRUCTURAL_TOKENS}
    context = [i for i in range(len(tokens)) if i not in structural and not interior(i)]
    inner = [i for i in range(len(tokens)) if interior(i)]
    content_left = len(context) + len(inner)

    dropped = set()
    for i in [*reversed(context), *reversed(inner)]:
        if excess == 0 or content_left == 1:
            break
        dropped.add(i)
        excess -= 1
        content_left -= 1
    if excess > 0:
        raise EncodingError(f"cannot fit {len(tokens)} tokens into max_len {max_len}")
    return [tok for i, tok in enumerate(tokens) if i not in dropped]


def encode(tokens: Sequence[str], vocab: Vocab, max_len: int) -> EncodedInput:
    """Map a marked token list to ids, truncating without losing [CLS]/[SEP] or any marker."""
    if max_len < MIN_MAX_LEN:
        raise EncodingError(f"max_len {max_len} cannot hold the six structural tokens plus one content token")
    tokens = list(tokens)
    if not tokens or tokens[0] != CLS:
        raise EncodingError("marked input must begin with [CLS]")
    if tokens[-1] != SEP or tokens.count(SEP) != 1:
        raise EncodingError("marked input must end with its only [SEP]")
    tokens = _truncate(tokens, max_len)

    ids = vocab.encode_tokens(tokens)
    n = len(ids)
    pad = max_len - n
    return EncodedInput(
        ids=ids + [PAD_ID] * pad,
        attention_mask=[1] * n + [0] * pad,
        e1_pos=tokens.index(E1),
        e2_pos=tokens.index(E2),
        mlm_labels=[IGNORE_INDEX] * max_len,
    )


def decode(enc: EncodedInput, vocab: Vocab) -> List[str]:
    return vocab.decode_ids(enc.ids[:enc.length])


def mlm_mask(
    enc: EncodedInput,
    rate: float = 0.15,
    rng: Union[np.random.Generator, int, None] = None,
    vocab_size: Optional[int] = None,
) -> EncodedInput:
    """
    BERT-style masking of content tokens.

    Candidates are unpadded positions holding a non-reserved id. Each draws once
    for selection; a selected position draws again for the 80/10/10 replacement
    (a random replacement draws a third time, uniformly over non-reserved ids).
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(0 if rng is None else rng)
    vocab_size = vocab_size if vocab_size is not None else max(enc.ids) + 1

    ids = list(enc.ids)
    labels = [IGNORE_INDEX] * len(ids)
    for i in range(enc.length):
        if ids[i] < NUM_RESERVED:
            continue
        if rng.random() >= rate:
            continue
        labels[i] = ids[i]
        roll = rng.random()
        if roll < 0.8:
            ids[i] = MASK_ID
        elif roll < 0.9 and vocab_size > NUM_RESERVED:
            ids[i] = int(rng.integers(NUM_RESERVED, vocab_size))
    return enc.model_copy(update={"ids": ids, "mlm_labels": labels})


def relative_positions(length: int, head_start: int, tail_start: int, clip: int) -> List[Tuple[int, int]]:
    """Clipped offsets to head/tail, shifted into [0, 2*clip]."""
    def shift(offset: int) -> int:
        return max(-clip, min(clip, offset)) + clip

    return [(shift(i - head_start), shift(i - tail_start)) for i in range(length)]


def position_features(s: LinkedSentence, clip: int) -> List[Tuple[int, int]]:
    return relative_positions(len(s.tokens), s.head.start, s.tail.start, clip)


def prepare_input(
    s: LinkedSentence,
    setting: InputSetting | str,
    vocab: Vocab,
    max_len: int,
    blank: Optional[BlankPolicy] = None,
    mlm_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> EncodedInput:
    """format -> optional [BLANK] masking -> encode -> optional MLM masking, drawing from ``rng`` in that order."""
    tokens = format_sentence(s, setting)
    if blank is not None and blank.p_blank > 0:
        tokens = apply_blank_mask(tokens, blank, rng)
    enc = encode(tokens, vocab, max_len)
    if mlm_rate > 0:
        enc = mlm_mask(enc, mlm_rate, rng, len(vocab))
    return enc
