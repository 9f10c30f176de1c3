from __future__ import annotations
from pathlib import Path
from typing import Any, Dict, Iterable, List, Set, Tuple

from pydantic import ValidationError

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import CorpusFormatError
from model.models import EntitySpan, LinkedSentence, TripleStore
from utils.file_io import iter_jsonl, iter_tsv, require_file, write_jsonl

# Pre-linked corpus: one JSON object per line with tokens, h{start,end,id,type}, t{...}, optional relation.
LINKED_JSONL_SCHEMA = "linked-jsonl-v1"
SUPPORTED_SCHEMAS = {LINKED_JSONL_SCHEMA}


def _span_from_record(raw: Any, role: str) -> EntitySpan:
    if not isinstance(raw, dict) or "start" not in raw or "end" not in raw:
        raise ValueError(f"{role} must be an object with start and end")
    return EntitySpan(
        start=raw["start"],
        end=raw["end"],
        kg_id=raw.get("id"),
        entity_type=raw.get("type"),
    )


def sentence_from_record(record: Dict[str, Any]) -> LinkedSentence:
    if not isinstance(record, dict):
        raise ValueError("record must be a JSON object")
    tokens = record.get("tokens")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise ValueError("tokens must be a list of strings")
    return LinkedSentence(
        tokens=tokens,
        head=_span_from_record(record.get("h"), "h"),
        tail=_span_from_record(record.get("t"), "t"),
        relation_id=record.get("relation"),
        sentence_id=record.get("id"),
    )


def _span_to_record(span: EntitySpan) -> Dict[str, Any]:
    out: Dict[str, Any] = {"start": span.start, "end": span.end}
    if span.kg_id is not None:
        out["id"] = span.kg_id
    if span.entity_type is not None:
        out["type"] = span.entity_type
    return out


def sentence_to_record(sentence: LinkedSentence) -> Dict[str, Any]:
    record: Dict[str, Any] = {
        "tokens": list(sentence.tokens),
        "h": _span_to_record(sentence.head),
        "t": _span_to_record(sentence.tail),
    }
    if sentence.relation_id is not None:
        record["relation"] = sentence.relation_id
    if sentence.sentence_id is not None:
        record["id"] = sentence.sentence_id
    return record


def load_corpus(path: str | Path, schema: str = LINKED_JSONL_SCHEMA) -> List[LinkedSentence]:
    """Read a pre-linked corpus in file order; any invalid record aborts with its line number."""
    if schema not in SUPPORTED_SCHEMAS:
        raise CorpusFormatError(f"unsupported corpus schema {schema!r}")
    p = require_file(path, "corpus")
    sentences: List[LinkedSentence] = []
    for line_number, record in iter_jsonl(p):
        try:
            sentences.append(sentence_from_record(record))
        except (ValidationError, ValueError) as e:
            label = record.get("id", f"#{line_number}") if isinstance(record, dict) else f"#{line_number}"
            log.error("Invalid corpus record", path=str(p), line=line_number, record=label, error=str(e))
            raise CorpusFormatError(f"invalid record {label}: {e}", line_number, e) from e
    log.info("Corpus loaded", path=str(p), sentences=len(sentences))
    return sentences


def save_corpus(sentences: Iterable[LinkedSentence], path: str | Path) -> int:
    return write_jsonl(path, (sentence_to_record(s) for s in sentences))


def load_triples(path: str | Path) -> TripleStore:
    """TSV ``head_id<TAB>relation_id<TAB>tail_id``; duplicate lines collapse."""
    p = require_file(path, "triples file")
    triples = {(h, r, t) for _, (h, r, t) in iter_tsv(p, 3)}
    kg = TripleStore(triples=triples)
    log.info("Triples loaded", path=str(p), triples=len(kg), relations=len(kg.relation_counts))
    return kg


def save_triples(kg: TripleStore, path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(t) for t in sorted(kg.triples)]
    out.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return out


def load_test_pairs(path: str | Path) -> Set[Tuple[str, str]]:
    """TSV ``head_id<TAB>tail_id`` of ordered entity pairs to keep out of pre-training."""
    p = require_file(path, "test-pair list")
    pairs = {(h, t) for _, (h, t) in iter_tsv(p, 2)}
    log.info("Test pairs loaded", path=str(p), pairs=len(pairs))
    return pairs
