from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from model.models import (
    EncoderConfig,
    FewShotHyper,
    FinetuneHyper,
    Initialization,
    InputSetting,
    Objective,
    OptimizerConfig,
    SamplerConfig,
)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticSection(StrictModel):
    num_relations: int = Field(default=8, ge=1)
    templates_per_relation: int = Field(default=8, ge=1)
    fillers_per_type: int = Field(default=40, ge=2)
    count: int = Field(default=4000, ge=1)
    # YAML file holding a full synthetic spec; overrides the preset sizes above
    spec_path: Optional[str] = None


class CorpusSection(StrictModel):
    path: Optional[str] = None
    triples: Optional[str] = None
    test_pairs: Optional[str] = None
    symmetric_leak_filter: bool = False
    synthetic: Optional[SyntheticSection] = None


class DataSection(StrictModel):
    dataset: Optional[str] = None
    vocab: Optional[str] = None
    train: Optional[str] = None
    dev: Optional[str] = None
    test: Optional[str] = None
    split: Tuple[float, float, float] = (0.6, 0.2, 0.2)

    @field_validator("split")
    @classmethod
    def _split_sums_to_one(cls, split: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(p < 0 for p in split) or abs(sum(split) - 1.0) > 1e-9:
            raise ValueError("split ratios must be non-negative and sum to 1")
        return split


class PretrainSection(StrictModel):
    objective: Objective = Objective.CP
    steps: int = Field(default=2000, ge=0)
    temperature: float = Field(default=1.0, gt=0.0)
    # None means: MLM on for cp, off for mtb
    with_mlm: Optional[bool] = None
    exclude_relations: List[str] = Field(default_factory=list)
    log_every: int = Field(default=50, ge=1)


class FinetuneSection(StrictModel):
    setting: InputSetting = InputSetting.CM
    init: Initialization = Initialization.RANDOM
    checkpoint: Optional[str] = None
    fraction: float = Field(default=1.0, gt=0.0, le=1.0)
    seeds: List[int] = Field(default_factory=lambda: [42, 43, 44, 45, 46])
    na_label: Optional[str] = None
    hyper: FinetuneHyper = Field(default_factory=FinetuneHyper)


class FewShotSection(StrictModel):
    n_way: int = Field(default=4, ge=1)
    k_shot: int = Field(default=1, ge=1)
    q_queries: int = Field(default=1, ge=1)
    episodes: int = Field(default=10000, ge=1)
    setting: InputSetting = InputSetting.CM
    checkpoint: Optional[str] = None
    relations: List[str] = Field(default_factory=list)
    hyper: FewShotHyper = Field(default_factory=FewShotHyper)


class AblateSection(StrictModel):
    settings: List[InputSetting] = Field(default_factory=lambda: list(InputSetting))
    inits: List[Initialization] = Field(default_factory=lambda: [Initialization.RANDOM, Initialization.CP])
    checkpoints: Dict[Initialization, str] = Field(default_factory=dict)


class ReportSection(StrictModel):
    baseline: Optional[str] = None


class RunConfig(StrictModel):
    seed: int = 42
    output_dir: str = "runs/default"
    log_level: str = "INFO"
    corpus: CorpusSection = Field(default_factory=CorpusSection)
    data: DataSection = Field(default_factory=DataSection)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    pretrain: PretrainSection = Field(default_factory=PretrainSection)
    finetune: FinetuneSection = Field(default_factory=FinetuneSection)
    fewshot: FewShotSection = Field(default_factory=FewShotSection)
    ablate: AblateSection = Field(default_factory=AblateSection)
    report: ReportSection = Field(default_factory=ReportSection)

    @model_validator(mode="after")
    def _single_seed(self) -> "RunConfig":
        # the global seed drives every stream
        self.sampler.seed = self.seed
        return self
