from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
import torch
from pydantic import BaseModel

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import ConfigError, RelationCPException
from model.models import LinkedSentence, LossBreakdown, Objective
from model.run_config import RunConfig
from src.corpus.labeling import build_bags, build_pair_index
from src.objectives.losses import batch_mtb_loss, joint_loss
from src.objectives.optimizer import build_optimizer
from src.sampler.sampling import build_cp_batch, build_mtb_batch
from src.textproc.vocab import Vocab
from utils.file_io import ensure_dir
from utils.model_loader import ModelLoader
from utils.seeding import derive_seed

LOSS_CSV = "loss.csv"
CHECKPOINT_FILE = "encoder.ckpt"
LOSS_COLUMNS = ["step", "l_cp", "l_mlm", "l_total"]


class PretrainResult(BaseModel):
    checkpoint: str
    loss_csv: str
    objective: Objective
    steps: int
    history: List[LossBreakdown]


def write_loss_csv(history: Sequence[LossBreakdown], path: str | Path) -> Path:
    frame = pd.DataFrame([b.model_dump(include=set(LOSS_COLUMNS)) for b in history], columns=LOSS_COLUMNS)
    frame.to_csv(path, index=False, float_format="%.12g")
    return Path(path)


class Pretrainer:
    """batch -> loss -> step for ``pretrain.steps`` steps, then a checkpoint and the loss CSV."""

    def __init__(self, corpus: Sequence[LinkedSentence], vocab: Vocab, config: RunConfig,
                 output_dir: Optional[str | Path] = None):
        self.config = config
        self.vocab = vocab
        self.output_dir = ensure_dir(output_dir or config.output_dir)
        excluded = set(config.pretrain.exclude_relations)
        self.corpus = [s for s in corpus if s.relation_id not in excluded]
        if excluded:
            log.info("Relations held out of pre-training", relations=sorted(excluded),
                     remaining=len(self.corpus))
        if config.sampler.max_len > config.encoder.max_len:
            raise ConfigError(
                f"sampler.max_len {config.sampler.max_len} exceeds encoder.max_len {config.encoder.max_len}"
            )
        self.objective = config.pretrain.objective
        self.with_mlm = (
            config.pretrain.with_mlm if config.pretrain.with_mlm is not None else self.objective == Objective.CP
        )
        self.loader = ModelLoader()

    def run(self) -> PretrainResult:
        cfg = self.config
        sampler = cfg.sampler if self.with_mlm else cfg.sampler.model_copy(update={"mlm_rate": 0.0})
        encoder_cfg = cfg.encoder.model_copy(update={"vocab_size": len(self.vocab)})
        model = self.loader.build_encoder(encoder_cfg, cfg.seed)
        torch.manual_seed(derive_seed(cfg.seed, "dropout"))
        optimizer = build_optimizer(model, cfg.optimizer)
        bags = build_bags(self.corpus) if self.objective == Objective.CP else None
        pair_index = build_pair_index(self.corpus) if self.objective == Objective.MTB else None

        history: List[LossBreakdown] = []
        model.train()
        try:
            for step in range(cfg.pretrain.steps):
                if self.objective == Objective.CP:
                    batch = build_cp_batch(self.corpus, bags, sampler, self.vocab, step)
                    loss, breakdown = joint_loss(batch, model, cfg.pretrain.temperature, self.with_mlm, step)
                else:
                    examples = build_mtb_batch(self.corpus, pair_index, sampler, self.vocab, step, sampler.mlm_rate)
                    loss, breakdown = batch_mtb_loss(examples, model, self.with_mlm, step)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                history.append(breakdown)
                if step % cfg.pretrain.log_every == 0 or step == cfg.pretrain.steps - 1:
                    log.info("Pretrain step", **breakdown.model_dump(mode="json"))
        except RelationCPException:
            raise
        except Exception as e:
            log.error("Pre-training failed", step=len(history), error=str(e))
            raise RelationCPException("Pre-training failed", e) from e
        model.eval()

        loss_csv = write_loss_csv(history, self.output_dir / LOSS_CSV)
        checkpoint = self.loader.save(
            self.output_dir / CHECKPOINT_FILE, model, encoder_cfg, self.vocab.fingerprint(),
            meta={"objective": self.objective.value, "steps": cfg.pretrain.steps, "seed": cfg.seed,
                  "with_mlm": self.with_mlm, "exclude_relations": sorted(cfg.pretrain.exclude_relations)},
        )
        log.info("Pre-training finished", steps=len(history), objective=self.objective.value,
                 final_total=history[-1].l_total if history else None)
        return PretrainResult(checkpoint=str(checkpoint), loss_csv=str(loss_csv), objective=self.objective,
                              steps=len(history), history=history)


def pretrain(corpus: Sequence[LinkedSentence], vocab: Vocab, config: RunConfig,
             output_dir: Optional[str | Path] = None) -> PretrainResult:
    return Pretrainer(corpus, vocab, config, output_dir).run()
