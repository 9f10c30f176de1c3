import statistics
from enum import Enum
from typing import Dict, List, Literal, Optional, Set, Tuple

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

# Reserved vocabulary entries, in the order they occupy ids 0-11.
RESERVED_TOKENS: Tuple[str, ...] = (
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[BLANK]",
    "[E1]", "[/E1]", "[E2]", "[/E2]", "[SUBJ]", "[OBJ]",
)
PAD, UNK, CLS, SEP, MASK, BLANK, E1, E1_END, E2, E2_END, SUBJ, OBJ = RESERVED_TOKENS
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID, BLANK_ID, E1_ID, E1_END_ID, E2_ID, E2_END_ID, SUBJ_ID, OBJ_ID = range(12)
MARKER_TOKENS = (E1, E1_END, E2, E2_END)
STRUCTURAL_TOKENS = frozenset((CLS, SEP) + MARKER_TOKENS)

# mlm_labels value for positions that are not predicted
IGNORE_INDEX = -100


class InputSetting(str, Enum):
    CM = "C+M"
    CT = "C+T"
    ONLYC = "OnlyC"
    ONLYM = "OnlyM"
    ONLYT = "OnlyT"

    @property
    def requires_types(self) -> bool:
        return self in (InputSetting.CT, InputSetting.ONLYT)


class Objective(str, Enum):
    CP = "cp"
    MTB = "mtb"


class EncoderKind(str, Enum):
    TRANSFORMER = "transformer"
    CNN = "cnn"


class OptimizerAlgorithm(str, Enum):
    ADAMW = "adamw"
    SGD = "sgd"


class Initialization(str, Enum):
    RANDOM = "random"
    CP = "cp"
    MTB = "mtb"
    CNN = "cnn"


# ---------- corpus ----------

class EntitySpan(BaseModel):
    start: int
    end: int
    kg_id: Optional[str] = None
    entity_type: Optional[str] = None
    surface: str = ""

    @model_validator(mode="after")
    def _check_bounds(self) -> "EntitySpan":
        if self.start < 0:
            raise ValueError(f"span start {self.start} is negative")
        if self.end <= self.start:
            raise ValueError(f"empty span [{self.start}, {self.end})")
        return self

    @property
    def length(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "EntitySpan") -> bool:
        return self.start < other.end and other.start < self.end


class LinkedSentence(BaseModel):
    tokens: List[str]
    head: EntitySpan
    tail: EntitySpan
    relation_id: Optional[str] = None
    sentence_id: Optional[str] = None

    @model_validator(mode="after")
    def _check_spans(self) -> "LinkedSentence":
        if not self.tokens:
            raise ValueError("sentence has no tokens")
        for role, span in (("head", self.head), ("tail", self.tail)):
            if span.end > len(self.tokens):
                raise ValueError(f"{role} span [{span.start}, {span.end}) out of bounds for {len(self.tokens)} tokens")
            surface = " ".join(self.tokens[span.start:span.end])
            if span.surface and span.surface != surface:
                raise ValueError(f"{role} surface {span.surface!r} does not match tokens {surface!r}")
            span.surface = surface
        if self.head.overlaps(self.tail):
            raise ValueError("overlapping spans")
        return self

    @property
    def entity_pair(self) -> Tuple[Optional[str], Optional[str]]:
        return self.head.kg_id, self.tail.kg_id

    def with_relation(self, relation_id: Optional[str]) -> "LinkedSentence":
        return self.model_copy(update={"relation_id": relation_id}, deep=True)


class TripleStore(BaseModel):
    triples: Set[Tuple[str, str, str]] = Field(default_factory=set)
    relation_counts: Dict[str, int] = Field(default_factory=dict)

    _by_pair: Dict[Tuple[str, str], List[str]] = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def _index(self) -> "TripleStore":
        counts: Dict[str, int] = {}
        by_pair: Dict[Tuple[str, str], List[str]] = {}
        for h, r, t in self.triples:
            counts[r] = counts.get(r, 0) + 1
            by_pair.setdefault((h, t), []).append(r)
        if self.relation_counts and self.relation_counts != counts:
            raise ValueError("relation_counts inconsistent with triples")
        self.relation_counts = dict(sorted(counts.items()))
        self._by_pair = {pair: sorted(rels) for pair, rels in by_pair.items()}
        return self

    @classmethod
    def from_triples(cls, triples) -> "TripleStore":
        return cls(triples={tuple(t) for t in triples})

    def relations_for(self, head_id: str, tail_id: str) -> List[str]:
        return self._by_pair.get((head_id, tail_id), [])

    def proportions(self) -> Dict[str, float]:
        total = sum(self.relation_counts.values())
        return {r: c / total for r, c in self.relation_counts.items()} if total else {}

    def __len__(self) -> int:
        return len(self.triples)


class RelationBag(BaseModel):
    bags: Dict[str, List[int]] = Field(default_factory=dict)

    def sizes(self) -> Dict[str, int]:
        return {r: len(idx) for r, idx in self.bags.items()}

    def total(self) -> int:
        return sum(len(idx) for idx in self.bags.values())

    def eligible(self, minimum: int = 2) -> List[str]:
        """Relations whose bag can provide a positive pair, in sorted order."""
        return sorted(r for r, idx in self.bags.items() if len(idx) >= minimum)


class PairIndex(BaseModel):
    pairs: Dict[Tuple[str, str], List[int]] = Field(default_factory=dict)
    entities: Dict[str, List[int]] = Field(default_factory=dict)

    def multi_sentence_pairs(self) -> List[Tuple[str, str]]:
        return sorted(p for p, idx in self.pairs.items() if len(idx) >= 2)


class LabelingReport(BaseModel):
    input_sentences: int = 0
    labeled: int = 0
    duplicated: int = 0
    dropped_unmatched: int = 0
    skipped_missing_id: int = 0


class CorpusStats(BaseModel):
    num_sentences: int = 0
    num_relations: int = 0
    bag_size_histogram: Dict[int, int] = Field(default_factory=dict)
    distinct_entity_pairs: int = 0


class SyntheticRelation(BaseModel):
    relation_id: str
    head_type: str
    tail_type: str
    templates: List[str]

    @field_validator("templates")
    @classmethod
    def _placeholders(cls, templates: List[str]) -> List[str]:
        if not templates:
            raise ValueError("relation needs at least one template")
        for template in templates:
            words = template.split()
            if "HEAD" not in words or "TAIL" not in words:
                raise ValueError(f"template missing a HEAD/TAIL placeholder: {template!r}")
        return templates


class SyntheticSpec(BaseModel):
    relations: List[SyntheticRelation]
    entities: Dict[str, List[str]]
    count: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_types(self) -> "SyntheticSpec":
        if not self.relations:
            raise ValueError("synthetic spec needs at least one relation")
        for rel in self.relations:
            for etype in (rel.head_type, rel.tail_type):
                if not self.entities.get(etype):
                    raise ValueError(f"relation {rel.relation_id} uses entity type {etype!r} with no entities")
            if rel.head_type == rel.tail_type and len(self.entities[rel.head_type]) < 2:
                raise ValueError(f"relation {rel.relation_id} needs two distinct {rel.head_type} entities")
        return self


# ---------- textproc ----------

class BlankPolicy(BaseModel):
    p_blank: float = Field(default=0.7, ge=0.0, le=1.0)
    seed: int = 0


class EncodedInput(BaseModel):
    ids: List[int]
    attention_mask: List[int]
    e1_pos: int
    e2_pos: int
    mlm_labels: List[int]

    @model_validator(mode="after")
    def _check_structure(self) -> "EncodedInput":
        n = len(self.ids)
        if len(self.attention_mask) != n or len(self.mlm_labels) != n:
            raise ValueError("ids, attention_mask and mlm_labels must have equal length")
        if n == 0 or self.ids[0] != CLS_ID:
            raise ValueError("encoded input must start with [CLS]")
        content = sum(self.attention_mask)
        if any(self.attention_mask[content:]) or not all(self.attention_mask[:content]):
            raise ValueError("attention_mask must be a prefix of ones")
        if any(i != PAD_ID for i in self.ids[content:]):
            raise ValueError("masked positions must hold [PAD]")
        if self.ids[:content].count(SEP_ID) != 1 or self.ids[content - 1] != SEP_ID:
            raise ValueError("content must be closed by exactly one [SEP]")
        if self.e1_pos == self.e2_pos:
            raise ValueError("e1_pos and e2_pos must differ")
        if not (0 <= self.e1_pos < content and self.ids[self.e1_pos] == E1_ID):
            raise ValueError(f"e1_pos {self.e1_pos} does not point at [E1]")
        if not (0 <= self.e2_pos < content and self.ids[self.e2_pos] == E2_ID):
            raise ValueError(f"e2_pos {self.e2_pos} does not point at [E2]")
        return self

    @property
    def length(self) -> int:
        return sum(self.attention_mask)


# ---------- sampler ----------

class SamplerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    batch_pairs: int = Field(default=16, ge=1)
    p_blank: float = Field(default=0.7, ge=0.0, le=1.0)
    max_len: int = Field(default=64, ge=8)
    seed: int = 42
    distinct_relations_in_batch: bool = True
    mlm_rate: float = Field(default=0.15, ge=0.0, le=1.0)


class ContrastiveBatch(BaseModel):
    pairs: List[Tuple[EncodedInput, EncodedInput]]
    relation_ids: List[str]
    sentence_indices: List[Tuple[int, int]]
    batch_index: int = 0
    distinct_relations: bool = True

    @model_validator(mode="after")
    def _check_pairs(self) -> "ContrastiveBatch":
        if not (len(self.pairs) == len(self.relation_ids) == len(self.sentence_indices)):
            raise ValueError("pairs, relation_ids and sentence_indices must align")
        if self.distinct_relations and len(set(self.relation_ids)) != len(self.relation_ids):
            raise ValueError("relation ids must be unique within a distinct-relation batch")
        return self

    def negatives_for(self, i: int) -> List[int]:
        """In-batch negatives of pair i: the B-members of every other pair."""
        return [j for j in range(len(self.pairs)) if j != i]

    def __len__(self) -> int:
        return len(self.pairs)


# ---------- encoder ----------

class EncoderConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    vocab_size: int = Field(default=1000, ge=1)
    hidden_dim: int = Field(default=64, ge=1)
    layers: int = Field(default=2, ge=1)
    heads: int = Field(default=4, ge=1)
    ffn_dim: int = Field(default=128, ge=1)
    max_len: int = Field(default=64, ge=8)
    dropout: float = Field(default=0.0, ge=0.0, lt=1.0)
    kind: EncoderKind = EncoderKind.TRANSFORMER
    window: int = Field(default=3, ge=1)
    filters: int = Field(default=230, ge=1)
    pos_dim: int = Field(default=5, ge=1)
    clip: int = Field(default=40, ge=1)
    precision: Literal["float64", "float32"] = "float64"
    layer_norm_eps: float = 1e-12

    @model_validator(mode="after")
    def _check_heads(self) -> "EncoderConfig":
        if self.hidden_dim % self.heads != 0:
            raise ValueError(f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}")
        return self


class GradcheckReport(BaseModel):
    max_relative_error: float
    offending_parameter: Optional[str] = None
    coordinates_checked: int
    tolerance: float
    passed: bool


# ---------- objectives ----------

class OptimizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    algorithm: OptimizerAlgorithm = OptimizerAlgorithm.ADAMW
    lr: float = Field(default=1e-3, gt=0.0)
    weight_decay: float = Field(default=0.01, ge=0.0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    clip_norm: Optional[float] = 1.0


class LossBreakdown(BaseModel):
    step: int = 0
    objective: Objective = Objective.CP
    l_cp: float = Field(ge=0.0)
    l_mlm: float = Field(ge=0.0)
    l_total: float
    n_pairs: int = 0
    n_masked: int = 0

    @model_validator(mode="after")
    def _check_total(self) -> "LossBreakdown":
        if self.l_total != self.l_cp + self.l_mlm:
            raise ValueError("l_total must equal l_cp + l_mlm")
        return self


# ---------- tasks ----------

class FinetuneHyper(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=1e-3, gt=0.0)
    batch_size: int = Field(default=16, ge=1)
    epochs: int = Field(default=6, ge=1)
    max_len: int = Field(default=64, ge=8)
    weight_decay: float = Field(default=0.01, ge=0.0)
    clip_norm: Optional[float] = 1.0
    # SGD learning rate used when the encoder is the CNN baseline
    cnn_lr: float = Field(default=0.5, gt=0.0)


class FewShotHyper(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=2e-4, gt=0.0)
    episodes_per_step: int = Field(default=4, ge=1)
    steps: int = Field(default=0, ge=0)
    max_len: int = Field(default=64, ge=8)


class Episode(BaseModel):
    n_way: int = Field(ge=1)
    k_shot: int = Field(ge=1)
    relation_ids: List[str]
    support: List[List[LinkedSentence]]
    queries: List[Tuple[LinkedSentence, int]]
    support_indices: List[List[int]]
    query_indices: List[int]

    @model_validator(mode="after")
    def _check_episode(self) -> "Episode":
        if len(self.relation_ids) != self.n_way or len(set(self.relation_ids)) != self.n_way:
            raise ValueError("episode classes must be n_way distinct relations")
        if len(self.support) != self.n_way or any(len(s) != self.k_shot for s in self.support):
            raise ValueError("support must be n_way x k_shot")
        if any(not 0 <= gold < self.n_way for _, gold in self.queries):
            raise ValueError("query gold index out of range")
        used = {i for row in self.support_indices for i in row}
        if used.intersection(self.query_indices):
            raise ValueError("support sentences reused as queries")
        return self


class EvalReport(BaseModel):
    metric: Literal["micro-F1", "accuracy"]
    per_seed: List[float]
    median: float
    seeds: List[int]
    episodes: Optional[int] = None

    @model_validator(mode="after")
    def _check_median(self) -> "EvalReport":
        if len(self.per_seed) != len(self.seeds):
            raise ValueError("one value per seed expected")
        if self.per_seed and self.median != statistics.median(self.per_seed):
            raise ValueError("median does not match per-seed values")
        return self
