"""
Desk-scale synthetic corpus.

A small world of typed entities and relation templates stands in for the
Wikipedia/Wikidata pre-training corpus. Every generated sentence is fully
linked (kg ids, types, relation) and its triple is recorded in the returned KG.
"""
from __future__ import annotations

import itertools
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from logger import GLOBAL_LOGGER as log
from model.models import EntitySpan, LinkedSentence, SyntheticRelation, SyntheticSpec, TripleStore
from utils.config_loader import load_yaml
from utils.seeding import derive_rng

HEAD_SLOT = "HEAD"
TAIL_SLOT = "TAIL"

_NAME_PARTS: Dict[str, Tuple[Sequence[str], Sequence[str], str]] = {
    "person": (
        ("Alice", "Bruno", "Chen", "Dara", "Elif", "Farid", "Greta", "Hiro"),
        ("Abara", "Berg", "Costa", "Dubois", "Eriksen"),
        " ",
    ),
    "organization": (
        ("Acme", "Borealis", "Cobalt", "Delta", "Everest", "Falcon", "Granite", "Helix"),
        ("Corp", "Labs", "Group", "Systems", "Institute"),
        " ",
    ),
    "city": (
        ("North", "South", "East", "West", "Lake", "River", "Stone", "Oak"),
        ("field", "port", "burg", "ton", "vale"),
        "",
    ),
    "country": (
        ("Ar", "Bel", "Cor", "Dal", "Esk", "Fen", "Gal", "Hal"),
        ("ania", "ovia", "istan", "land", "mark"),
        "",
    ),
}

# Relations come in pairs sharing a (head type, tail type) signature, so mentions
# alone narrow a sentence down to two relations and the context has to decide.
# The first four cover four distinct signatures.
_RELATIONS: List[Tuple[str, str, str, List[str]]] = [
    ("employer", "person", "organization", [
        "HEAD works for TAIL .",
        "HEAD is employed by TAIL .",
        "TAIL hired HEAD last year .",
        "HEAD joined TAIL as an engineer .",
        "HEAD , an employee of TAIL , spoke today .",
        "TAIL pays HEAD a generous salary .",
        "HEAD has a job at TAIL .",
        "HEAD took a position with TAIL .",
    ]),
    ("born_in", "person", "city", [
        "HEAD was born in TAIL .",
        "TAIL is the birthplace of HEAD .",
        "HEAD , a native of TAIL , moved abroad .",
        "born in TAIL , HEAD later became famous .",
        "the birth of HEAD took place in TAIL .",
        "HEAD came into the world in TAIL .",
        "records show HEAD was born at TAIL .",
        "TAIL remembers HEAD as its most famous child .",
    ]),
    ("capital_of", "city", "country", [
        "HEAD is the capital of TAIL .",
        "TAIL has its capital in HEAD .",
        "the government of TAIL sits in HEAD .",
        "HEAD serves as the capital of TAIL .",
        "TAIL moved its capital to HEAD .",
        "HEAD , capital of TAIL , hosts the parliament .",
        "the capital of TAIL is HEAD .",
        "as the seat of TAIL , HEAD is busy .",
    ]),
    ("headquartered_in", "organization", "city", [
        "HEAD is headquartered in TAIL .",
        "HEAD has its head office in TAIL .",
        "TAIL is home to the headquarters of HEAD .",
        "HEAD is run from its base in TAIL .",
        "the main office of HEAD is in TAIL .",
        "HEAD moved its headquarters to TAIL .",
        "HEAD , based in TAIL , expanded .",
        "TAIL hosts the central office of HEAD .",
    ]),
    ("founder_of", "person", "organization", [
        "HEAD founded TAIL .",
        "TAIL was founded by HEAD .",
        "the company TAIL , started by HEAD , grew quickly .",
        "TAIL traces its origins to its founder HEAD .",
        "HEAD is the founder of TAIL .",
        "after leaving school , HEAD established TAIL .",
        "TAIL owes its creation to HEAD .",
        "it was HEAD who set up TAIL .",
    ]),
    ("lives_in", "person", "city", [
        "HEAD lives in TAIL .",
        "HEAD has a house in TAIL .",
        "HEAD , a resident of TAIL , walks to work .",
        "these days HEAD calls TAIL home .",
        "HEAD rents a flat in TAIL .",
        "neighbours in TAIL often greet HEAD .",
        "HEAD settled down in TAIL .",
        "HEAD resides in TAIL with family .",
    ]),
    ("located_in", "city", "country", [
        "HEAD is a city in TAIL .",
        "HEAD lies in the north of TAIL .",
        "TAIL contains the town of HEAD .",
        "HEAD is located in TAIL .",
        "visitors to TAIL often stop in HEAD .",
        "HEAD , a town in TAIL , is quiet .",
        "the town of HEAD belongs to TAIL .",
        "HEAD sits within the borders of TAIL .",
    ]),
    ("branch_in", "organization", "city", [
        "HEAD opened a branch in TAIL .",
        "HEAD runs a factory in TAIL .",
        "TAIL has a local store of HEAD .",
        "HEAD operates a depot near TAIL .",
        "shoppers in TAIL can visit a HEAD outlet .",
        "HEAD expanded into TAIL last spring .",
        "a small HEAD warehouse stands in TAIL .",
        "HEAD sells its goods through a shop in TAIL .",
    ]),
]

_TEMPLATE_PREFIXES = ("reportedly ,", "in short ,", "as expected ,", "according to sources ,")


def _fillers(entity_type: str, n: int) -> List[str]:
    firsts, seconds, joiner = _NAME_PARTS[entity_type]
    names = [f"{a}{joiner}{b}" for b, a in itertools.product(seconds, firsts)]
    out = names[:n]
    k = 2
    while len(out) < n:
        out.extend(f"{name} {k}" for name in names[: n - len(out)])
        k += 1
    return out


def _templates(base: List[str], n: int) -> List[str]:
    out = base[:n]
    for prefix in _TEMPLATE_PREFIXES:
        if len(out) >= n:
            break
        out.extend(f"{prefix} {t}" for t in base[: n - len(out)])
    return out


def default_synthetic_spec(
    num_relations: int = 8,
    templates_per_relation: int = 8,
    fillers_per_type: int = 40,
    count: int = 4000,
) -> SyntheticSpec:
    """Built-in toy world; relations past the eight hand-written ones get generic cue words."""
    relations: List[SyntheticRelation] = []
    for i in range(num_relations):
        if i < len(_RELATIONS):
            rid, head_type, tail_type, base = _RELATIONS[i]
        else:
            rid, head_type, tail_type = f"relation_{i}", "organization", "person"
            cue = f"cue{i}"
            base = [f"HEAD {cue} TAIL .", f"TAIL is {cue} of HEAD .", f"the {cue} link joins HEAD and TAIL ."]
        relations.append(SyntheticRelation(
            relation_id=rid, head_type=head_type, tail_type=tail_type,
            templates=_templates(base, templates_per_relation),
        ))
    used_types = sorted({r.head_type for r in relations} | {r.tail_type for r in relations})
    entities = {etype: _fillers(etype, fillers_per_type) for etype in used_types}
    return SyntheticSpec(relations=relations, entities=entities, count=count)


def load_synthetic_spec(path: str | Path) -> SyntheticSpec:
    return SyntheticSpec.model_validate(load_yaml(path))


def _fill(template: str, head: str, tail: str) -> Tuple[List[str], Tuple[int, int], Tuple[int, int]]:
    tokens: List[str] = []
    head_span = tail_span = (0, 0)
    for word in template.split():
        if word == HEAD_SLOT:
            start = len(tokens)
            tokens.extend(head.split())
            head_span = (start, len(tokens))
        elif word == TAIL_SLOT:
            start = len(tokens)
            tokens.extend(tail.split())
            tail_span = (start, len(tokens))
        else:
            tokens.append(word)
    return tokens, head_span, tail_span


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Tuple[List[LinkedSentence], TripleStore]:
    """
    Sample ``spec.count`` linked sentences.

    The first min(count, |relations|) sentences cycle through the relations so each
    receives at least one; the rest draw relation, template and fillers uniformly.
    """
    if isinstance(spec, dict):
        spec = SyntheticSpec.model_validate(spec)
    rng = derive_rng(seed, "synthetic")
    n_rel = len(spec.relations)
    sentences: List[LinkedSentence] = []
    triples = set()
    for i in range(spec.count):
        rel = spec.relations[i] if i < n_rel else spec.relations[int(rng.integers(n_rel))]
        template = rel.templates[int(rng.integers(len(rel.templates)))]
        heads = spec.entities[rel.head_type]
        tails = spec.entities[rel.tail_type]
        h = int(rng.integers(len(heads)))
        t = int(rng.integers(len(tails)))
        while rel.head_type == rel.tail_type and t == h:
            t = int(rng.integers(len(tails)))
        head_id, tail_id = f"{rel.head_type}:{h}", f"{rel.tail_type}:{t}"

        tokens, (hs, he), (ts, te) = _fill(template, heads[h], tails[t])
        sentences.append(LinkedSentence(
            tokens=tokens,
            head=EntitySpan(start=hs, end=he, kg_id=head_id, entity_type=rel.head_type),
            tail=EntitySpan(start=ts, end=te, kg_id=tail_id, entity_type=rel.tail_type),
            relation_id=rel.relation_id,
            sentence_id=f"syn-{i:06d}",
        ))
        triples.add((head_id, rel.relation_id, tail_id))
    kg = TripleStore(triples=triples)
    log.info("Synthetic corpus generated", sentences=len(sentences), relations=n_rel, triples=len(kg), seed=seed)
    return sentences, kg
