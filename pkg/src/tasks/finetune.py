"""
Supervised relation classification on top of a (pre-trained) encoder.

A linear softmax head reads the encoder's relation representation; the whole
stack is trained with cross-entropy and the epoch with the best dev metric
is kept.
"""
from __future__ import annotations

import copy
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from pydantic import BaseModel
from torch import nn

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import ConfigError, EncodingError, SamplingError
from model.models import (
    EncodedInput, EncoderKind, EvalReport, FinetuneHyper, InputSetting, LinkedSentence,
    OptimizerAlgorithm, OptimizerConfig,
)
from src.corpus.labeling import group_by_relation
from src.encoder.batching import TensorBatch, to_tensors
from src.objectives.optimizer import build_optimizer
from src.tasks.metrics import accuracy, median, micro_f1
from src.textproc.encoding import prepare_input
from src.textproc.formats import format_onlym
from src.textproc.vocab import Vocab
from utils.model_loader import ModelLoader
from utils.seeding import derive_rng, derive_seed, torch_generator

ENCODER_PREFIX = "encoder."


class RelationClassifier(nn.Module):
    def __init__(self, encoder: nn.Module, labels: Sequence[str], seed: int = 0):
        super().__init__()
        self.encoder = encoder
        self.labels = list(labels)
        dtype = next(encoder.parameters()).dtype
        self.head = nn.Linear(encoder.repr_dim, len(self.labels)).to(dtype)
        with torch.no_grad():
            gen = torch_generator(seed, "head")
            self.head.weight.copy_(torch.empty(self.head.weight.shape, dtype=torch.float64).normal_(0.0, 0.02, generator=gen))
            self.head.bias.zero_()

    def forward(self, batch: TensorBatch) -> torch.Tensor:
        return self.head(self.encoder.represent(batch))


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    dev_metric: float


class FinetuneOutcome:
    def __init__(self, classifier: RelationClassifier, history: List[EpochRecord], best_epoch: int):
        self.classifier = classifier
        self.history = history
        self.best_epoch = best_epoch


def subsample_per_relation(train: Sequence[LinkedSentence], fraction: float, seed: int) -> List[LinkedSentence]:
    """Keep max(1, round-half-up(fraction * n_r)) sentences of every relation, in corpus order."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    rng = derive_rng(seed, "subsample")
    keep: List[int] = []
    for relation, indices in group_by_relation(train).items():
        k = max(1, math.floor(fraction * len(indices) + 0.5))
        keep.extend(int(i) for i in rng.choice(indices, size=k, replace=False))
    subset = [train[i] for i in sorted(keep)]
    log.info("Training data subsampled", fraction=fraction, kept=len(subset), total=len(train))
    return subset


def check_setting(sentences: Sequence[LinkedSentence], setting: InputSetting) -> None:
    setting = InputSetting(setting)
    if setting.requires_types:
        for s in sentences:
            if not (s.head.entity_type and s.tail.entity_type):
                raise EncodingError(
                    f"setting {setting.value} needs entity types but sentence {s.sentence_id or '?'} has none"
                )
    if setting == InputSetting.ONLYM:
        for s in sentences:
            # mentions plus [CLS] [E1] [/E1] [E2] [/E2] [SEP]
            if len(format_onlym(s)) != s.head.length + s.tail.length + 6:
                raise EncodingError(f"OnlyM input of sentence {s.sentence_id or '?'} carries context tokens")


def encode_inputs(sentences: Sequence[LinkedSentence], setting: InputSetting, vocab: Vocab, max_len: int) -> List[EncodedInput]:
    return [prepare_input(s, setting, vocab, max_len) for s in sentences]


def task_metric(gold: Sequence[str], pred: Sequence[str], na_label: Optional[str]) -> float:
    return micro_f1(gold, pred, na_label) if na_label is not None else accuracy(gold, pred)


@torch.no_grad()
def _predict_inputs(classifier: RelationClassifier, inputs: Sequence[EncodedInput], batch_size: int) -> List[str]:
    classifier.eval()
    out: List[str] = []
    for start in range(0, len(inputs), batch_size):
        logits = classifier(to_tensors(inputs[start:start + batch_size]))
        out.extend(classifier.labels[int(i)] for i in logits.argmax(dim=-1))
    return out


def predict(
    classifier: RelationClassifier,
    sentences: Sequence[LinkedSentence],
    setting: InputSetting,
    vocab: Vocab,
    max_len: int,
    batch_size: int = 64,
) -> List[str]:
    if not sentences:
        return []
    return _predict_inputs(classifier, encode_inputs(sentences, setting, vocab, max_len), batch_size)


def prediction_records(sentences: Sequence[LinkedSentence], predictions: Sequence[str]) -> List[Dict[str, str]]:
    return [
        {"id": s.sentence_id if s.sentence_id is not None else str(i), "gold": s.relation_id, "pred": p}
        for i, (s, p) in enumerate(zip(sentences, predictions))
    ]


def finetune(
    encoder: nn.Module,
    train: Sequence[LinkedSentence],
    dev: Sequence[LinkedSentence],
    setting: InputSetting,
    hyper: FinetuneHyper,
    vocab: Vocab,
    seed: int,
    na_label: Optional[str] = None,
    labels: Optional[Sequence[str]] = None,
) -> FinetuneOutcome:
    """
    Train a copy of ``encoder`` plus a fresh head; the input encoder is untouched.

    Epoch order comes from the ``("finetune", epoch)`` stream. The state of the
    first epoch reaching the best dev metric is restored at the end; with no dev
    data the training metric is used instead.
    """
    setting = InputSetting(setting)
    if not train:
        raise SamplingError("fine-tuning needs at least one training sentence")
    if hyper.max_len > encoder.cfg.max_len:
        raise ConfigError(f"finetune max_len {hyper.max_len} exceeds encoder max_len {encoder.cfg.max_len}")
    check_setting([*train, *dev], setting)

    labels = list(labels) if labels is not None else sorted({s.relation_id for s in train})
    index = {label: i for i, label in enumerate(labels)}
    classifier = RelationClassifier(copy.deepcopy(encoder), labels, seed)
    torch.manual_seed(derive_seed(seed, "dropout"))
    is_cnn = encoder.cfg.kind == EncoderKind.CNN
    optimizer = build_optimizer(classifier, OptimizerConfig(
        algorithm=OptimizerAlgorithm.SGD if is_cnn else OptimizerAlgorithm.ADAMW,
        lr=hyper.cnn_lr if is_cnn else hyper.lr,
        weight_decay=hyper.weight_decay,
        clip_norm=hyper.clip_norm,
    ))

    train_inputs = encode_inputs(train, setting, vocab, hyper.max_len)
    targets = torch.tensor([index[s.relation_id] for s in train], dtype=torch.long)
    eval_sentences = dev if dev else train
    eval_inputs = encode_inputs(eval_sentences, setting, vocab, hyper.max_len) if dev else train_inputs
    eval_gold = [s.relation_id for s in eval_sentences]

    history: List[EpochRecord] = []
    best_metric, best_epoch, best_state = -1.0, 0, None
    for epoch in range(hyper.epochs):
        classifier.train()
        order = derive_rng(seed, "finetune", epoch).permutation(len(train_inputs))
        total = 0.0
        for start in range(0, len(order), hyper.batch_size):
            idx = [int(i) for i in order[start:start + hyper.batch_size]]
            logits = classifier(to_tensors([train_inputs[i] for i in idx]))
            loss = F.cross_entropy(logits, targets[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)

        metric = task_metric(eval_gold, _predict_inputs(classifier, eval_inputs, hyper.batch_size), na_label)
        history.append(EpochRecord(epoch=epoch, train_loss=total / len(train_inputs), dev_metric=metric))
        log.info("Fine-tune epoch", epoch=epoch, train_loss=history[-1].train_loss, dev_metric=metric, seed=seed)
        if metric > best_metric:
            best_metric, best_epoch = metric, epoch
            best_state = copy.deepcopy(classifier.state_dict())

    classifier.load_state_dict(best_state)
    classifier.eval()
    return FinetuneOutcome(classifier, history, best_epoch)


class SeedOutcome:
    def __init__(self, seed: int, metric: float, predictions: List[Dict[str, str]], outcome: FinetuneOutcome):
        self.seed = seed
        self.metric = metric
        self.predictions = predictions
        self.outcome = outcome


def evaluate_supervised(
    encoder_for_seed: Callable[[int], nn.Module],
    train: Sequence[LinkedSentence],
    dev: Sequence[LinkedSentence],
    test: Sequence[LinkedSentence],
    setting: InputSetting,
    hyper: FinetuneHyper,
    vocab: Vocab,
    seeds: Sequence[int],
    fraction: float = 1.0,
    na_label: Optional[str] = None,
) -> Tuple[EvalReport, List[SeedOutcome]]:
    """Subsample, fine-tune and score the test split once per seed; report every value and the median."""
    if not seeds:
        raise ConfigError("at least one seed is required")
    if not test:
        raise SamplingError("the test split is empty")
    labels = sorted({s.relation_id for s in train})
    outcomes: List[SeedOutcome] = []
    for seed in seeds:
        subset = subsample_per_relation(train, fraction, seed) if fraction < 1.0 else list(train)
        outcome = finetune(encoder_for_seed(seed), subset, dev, setting, hyper, vocab, seed, na_label, labels)
        preds = predict(outcome.classifier, test, setting, vocab, hyper.max_len, hyper.batch_size)
        metric = task_metric([s.relation_id for s in test], preds, na_label)
        outcomes.append(SeedOutcome(seed, metric, prediction_records(test, preds), outcome))
        log.info("Seed evaluated", seed=seed, metric=metric, best_epoch=outcome.best_epoch)

    values = [o.metric for o in outcomes]
    report = EvalReport(
        metric="micro-F1" if na_label is not None else "accuracy",
        per_seed=values,
        median=median(values),
        seeds=list(seeds),
    )
    return report, outcomes


def save_classifier(path: str | Path, classifier: RelationClassifier, vocab: Vocab, meta: Optional[Dict] = None) -> Path:
    info = {"encoder_prefix": ENCODER_PREFIX, "labels": classifier.labels, **(meta or {})}
    return ModelLoader().save(path, classifier, classifier.encoder.cfg, vocab.fingerprint(), info)


def load_classifier(path: str | Path, vocab: Optional[Vocab] = None) -> RelationClassifier:
    loader = ModelLoader()
    encoder, meta = loader.load_encoder(path, vocab.fingerprint() if vocab is not None else None)
    _, tensors = loader.read(path)
    classifier = RelationClassifier(encoder, meta["labels"])
    dtype = next(encoder.parameters()).dtype
    classifier.load_state_dict({name: t.to(dtype) for name, t in tensors.items()})
    return classifier.eval()
