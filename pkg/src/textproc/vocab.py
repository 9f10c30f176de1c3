from __future__ import annotations

import hashlib
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import CorpusFormatError
from model.models import RESERVED_TOKENS, UNK_ID, LinkedSentence
from utils.file_io import require_file


def type_token(entity_type: str) -> str:
    return f"[{entity_type}]"


class Vocab:
    """Dense token <-> id map; ids 0-11 are the reserved tokens in their fixed order."""

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise CorpusFormatError("vocabulary must start with the reserved tokens in order")
        self.itos: List[str] = list(tokens)
        self.stoi: Dict[str, int] = {}
        for i, tok in enumerate(self.itos):
            if tok in self.stoi:
                raise CorpusFormatError(f"duplicate vocabulary entry {tok!r}", i + 1)
            self.stoi[tok] = i

    @classmethod
    def build(cls, sentences: Iterable[LinkedSentence], min_freq: int = 1) -> "Vocab":
        counts: Counter = Counter()
        types = set()
        for s in sentences:
            counts.update(s.tokens)
            for span in (s.head, s.tail):
                if span.entity_type:
                    types.add(type_token(span.entity_type))
        reserved = set(RESERVED_TOKENS)
        type_tokens = sorted(types - reserved)
        taken = reserved | set(type_tokens)
        words = sorted(
            (tok for tok, c in counts.items() if c >= min_freq and tok not in taken),
            key=lambda tok: (-counts[tok], tok),
        )
        vocab = cls(list(RESERVED_TOKENS) + type_tokens + words)
        log.info("Vocabulary built", size=len(vocab), type_tokens=len(type_tokens))
        return vocab

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        p = require_file(path, "vocabulary file")
        tokens = p.read_text(encoding="utf-8").split("\n")
        if tokens and tokens[-1] == "":
            tokens.pop()
        for i, reserved in enumerate(RESERVED_TOKENS):
            if i >= len(tokens) or tokens[i] != reserved:
                raise CorpusFormatError(f"reserved token {reserved} must be on line {i + 1} of {p}", i + 1)
        return cls(tokens)

    def save(self, path: str | Path) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("".join(tok + "\n" for tok in self.itos), encoding="utf-8")
        return out

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self.itos[idx]

    def encode_tokens(self, tokens: Iterable[str]) -> List[int]:
        return [self.lookup(t) for t in tokens]

    def decode_ids(self, ids: Iterable[int]) -> List[str]:
        return [self.itos[i] for i in ids]

    def fingerprint(self) -> str:
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi
