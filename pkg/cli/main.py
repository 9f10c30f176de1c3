"""
``relcp`` command line.

Every subcommand reads a YAML config (``--config``, else ``RELCP_CONFIG``, else
``config/config.yaml``) plus ``--set dotted.key=value`` overrides, writes the
resolved config into the output directory, then computes. Exit codes: 0 on
success, 2 on configuration errors, 3 on any other failure.
"""
from __future__ import annotations

from pathlib import Path
from typing import Callable, List, Optional, Tuple

import typer

from logger import GLOBAL_LOGGER as log, LOGGER_FACTORY
from exception.custom_exception import ConfigError, RelationCPException
from model.models import EncoderKind, Initialization, LinkedSentence, Objective
from model.run_config import RunConfig
from cli.reporting import EVAL_REPORT_FILE, build_report, write_ablation, write_report
from src.corpus.data_ingestion import load_corpus
from src.corpus.dataset_builder import DatasetBuilder
from src.corpus.labeling import build_bags, build_pair_index, split_by_relation, split_corpus
from src.objectives.trainer import pretrain
from src.sampler.sampling import iterate_batches
from src.tasks.fewshot import evaluate_fewshot, train_fewshot
from src.tasks.finetune import evaluate_supervised, save_classifier
from src.textproc.encoding import decode
from src.textproc.vocab import Vocab
from utils.config_loader import load_config
from utils.file_io import ensure_dir, require_file, snapshot_config, write_json, write_jsonl
from utils.model_loader import ModelLoader

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
CLASSIFIER_FILE = "classifier.ckpt"
BATCHES_FILE = "batches.jsonl"

app = typer.Typer(name="relcp", help="Entity-masked contrastive pre-training for relation extraction.")

ConfigOption = typer.Option(None, "--config", "-c", help="YAML run config")
SetOption = typer.Option(None, "--set", "-s", help="Override a config key, e.g. --set encoder.layers=1")


def _guarded(action: Callable[[], None]) -> None:
    try:
        action()
    except ConfigError as e:
        log.error("Configuration error", error=str(e))
        typer.echo(f"config error: {e}", err=True)
        raise typer.Exit(EXIT_CONFIG)
    except RelationCPException as e:
        log.error("Run failed", error=str(e), detail=e.describe())
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(EXIT_RUNTIME)
    except Exception as e:
        log.error("Unexpected failure", error=str(e))
        typer.echo(f"unexpected error: {e}", err=True)
        raise typer.Exit(EXIT_RUNTIME)


def _prepare(config: Optional[str], sets: Optional[List[str]]) -> Tuple[RunConfig, Path]:
    cfg = load_config(config, sets or ())
    LOGGER_FACTORY.set_level(cfg.log_level)
    out = ensure_dir(cfg.output_dir)
    snapshot_config(cfg, out)
    return cfg, out


def _vocab(cfg: RunConfig) -> Vocab:
    return Vocab.load(require_file(cfg.data.vocab, "vocabulary"))


def _dataset(cfg: RunConfig) -> List[LinkedSentence]:
    return load_corpus(require_file(cfg.data.dataset, "dataset"))


def _task_splits(cfg: RunConfig) -> Tuple[List[LinkedSentence], List[LinkedSentence], List[LinkedSentence]]:
    data = cfg.data
    if data.train:
        train = load_corpus(require_file(data.train, "train split"))
        dev = load_corpus(require_file(data.dev, "dev split")) if data.dev else []
        test = load_corpus(require_file(data.test, "test split"))
        return train, dev, test
    return split_corpus(_dataset(cfg), data.split, cfg.seed)


def _encoder_factory(cfg: RunConfig, vocab: Vocab, init: Initialization, checkpoint: Optional[str]):
    loader = ModelLoader()
    encoder_cfg = cfg.encoder.model_copy(update={"vocab_size": len(vocab)})
    if init == Initialization.RANDOM:
        return lambda seed: loader.build_encoder(encoder_cfg, seed)
    if init == Initialization.CNN:
        cnn_cfg = encoder_cfg.model_copy(update={"kind": EncoderKind.CNN})
        return lambda seed: loader.build_encoder(cnn_cfg, seed)
    if not checkpoint:
        raise ConfigError(f"initialization {init.value!r} needs a checkpoint path")
    encoder, _ = loader.load_encoder(require_file(checkpoint, "checkpoint"), vocab.fingerprint())
    return lambda seed: encoder


@app.command("build-dataset")
def build_dataset(config: Optional[str] = ConfigOption, sets: Optional[List[str]] = SetOption):
    """Label a linked corpus (or the synthetic world) with KG relations and write dataset, bags, stats and vocab."""
    def action():
        cfg, out = _prepare(config, sets)
        summary = DatasetBuilder(cfg, out).build()
        typer.echo(f"Dataset: {summary.stats.num_sentences} sentences, {summary.stats.num_relations} relations -> {out}")
    _guarded(action)


@app.command("pretrain")
def pretrain_cmd(config: Optional[str] = ConfigOption, sets: Optional[List[str]] = SetOption):
    """CP (or MTB) pre-training; writes encoder.ckpt and loss.csv."""
    def action():
        cfg, out = _prepare(config, sets)
        result = pretrain(_dataset(cfg), _vocab(cfg), cfg, out)
        typer.echo(f"Pre-trained {result.steps} steps ({result.objective.value}) -> {result.checkpoint}")
    _guarded(action)


@app.command("finetune")
def finetune_cmd(config: Optional[str] = ConfigOption, sets: Optional[List[str]] = SetOption):
    """Fine-tune per seed, score the test split and write eval_report.json, predictions and the classifier."""
    def action():
        cfg, out = _prepare(config, sets)
        vocab = _vocab(cfg)
        train, dev, test = _task_splits(cfg)
        ft = cfg.finetune
        factory = _encoder_factory(cfg, vocab, ft.init, ft.checkpoint)
        report, outcomes = evaluate_supervised(
            factory, train, dev, test, ft.setting, ft.hyper, vocab, ft.seeds, ft.fraction, ft.na_label
        )
        write_json(out / EVAL_REPORT_FILE, report)
        for o in outcomes:
            write_jsonl(out / f"predictions_seed{o.seed}.jsonl", o.predictions)
        # keep the classifier whose score sits at the median
        chosen = min(outcomes, key=lambda o: abs(o.metric - report.median))
        save_classifier(out / CLASSIFIER_FILE, chosen.outcome.classifier, vocab,
                        {"seed": chosen.seed, "setting": ft.setting.value, "best_epoch": chosen.outcome.best_epoch})
        typer.echo(f"{report.metric} median {report.median:.4f} over seeds {report.seeds} -> {out}")
    _guarded(action)


@app.command("fewshot")
def fewshot_cmd(config: Optional[str] = ConfigOption, sets: Optional[List[str]] = SetOption):
    """N-way K-shot prototype evaluation; optional episodic training on the remaining relations first."""
    def action():
        cfg, out = _prepare(config, sets)
        vocab = _vocab(cfg)
        fs = cfg.fewshot
        sentences = load_corpus(require_file(cfg.data.test, "test split")) if cfg.data.test else _dataset(cfg)
        init = Initialization.CP if fs.checkpoint else Initialization.RANDOM
        model = _encoder_factory(cfg, vocab, init, fs.checkpoint)(cfg.seed)
        if fs.relations:
            sentences, rest = split_by_relation(sentences, fs.relations)
        else:
            rest = []
        if fs.hyper.steps > 0:
            if not rest:
                raise ConfigError("episodic training needs fewshot.relations so training relations stay disjoint")
            train_fewshot(model, rest, fs.n_way, fs.k_shot, fs.q_queries, fs.hyper, vocab, cfg.seed, fs.setting)
        report = evaluate_fewshot(model, sentences, fs.n_way, fs.k_shot, fs.episodes, cfg.seed, vocab,
                                  fs.setting, fs.q_queries, fs.hyper.max_len)
        write_json(out / EVAL_REPORT_FILE, report)
        typer.echo(f"{fs.n_way}-way {fs.k_shot}-shot accuracy {report.median:.4f} over {fs.episodes} episodes")
    _guarded(action)


@app.command("ablate")
def ablate_cmd(config: Optional[str] = ConfigOption, sets: Optional[List[str]] = SetOption):
    """Fine-tune every input setting x encoder initialization and write the ablation table."""
    def action():
        cfg, out = _prepare(config, sets)
        vocab = _vocab(cfg)
        train, dev, test = _task_splits(cfg)
        ft, ab = cfg.finetune, cfg.ablate
        settings = [s.value for s in ab.settings]
        cells = {}
        metric = "micro-F1" if ft.na_label is not None else "accuracy"
        for init in ab.inits:
            checkpoint = ab.checkpoints.get(init) or (ft.checkpoint if init == ft.init else None)
            factory = _encoder_factory(cfg, vocab, init, checkpoint)
            cells[init.value] = {}
            for setting in ab.settings:
                report, _ = evaluate_supervised(
                    factory, train, dev, test, setting, ft.hyper, vocab, ft.seeds, ft.fraction, ft.na_label
                )
                cells[init.value][setting.value] = report.median
                log.info("Ablation cell", init=init.value, setting=setting.value, median=report.median)
        js, txt = write_ablation(cells, settings, metric, out)
        typer.echo(txt.read_text(encoding="utf-8"))
    _guarded(action)


@app.command("report")
def report_cmd(
    run_dirs: List[Path] = typer.Argument(..., help="Run directories holding eval_report.json"),
    baseline: Optional[str] = typer.Option(None, "--baseline", "-b", help="Run name the deltas refer to"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Directory for report.md/report.json"),
    config: Optional[str] = ConfigOption,
    sets: Optional[List[str]] = SetOption,
):
    """Merge evaluation reports of several runs into one markdown/JSON comparison."""
    def action():
        base = baseline
        out_dir = output
        if config is not None or sets:
            cfg, cfg_out = _prepare(config, sets)
            base = base or cfg.report.baseline
            out_dir = out_dir or cfg_out
        rows = build_report(run_dirs, base)
        md, _ = write_report(rows, out_dir or Path("."), base)
        typer.echo(md.read_text(encoding="utf-8"))
    _guarded(action)


@app.command("dump-batches")
def dump_batches(
    start: int = typer.Option(0, "--start", help="First batch index"),
    count: int = typer.Option(1, "--count", help="Number of batches"),
    config: Optional[str] = ConfigOption,
    sets: Optional[List[str]] = SetOption,
):
    """Write pre-training batches as readable JSONL for inspection."""
    def action():
        cfg, out = _prepare(config, sets)
        vocab = _vocab(cfg)
        corpus = [s for s in _dataset(cfg) if s.relation_id not in set(cfg.pretrain.exclude_relations)]
        kind = cfg.pretrain.objective
        bags = build_bags(corpus) if kind == Objective.CP else None
        pairs = build_pair_index(corpus) if kind == Objective.MTB else None

        def records():
            for index, batch in iterate_batches(kind, corpus, cfg.sampler, vocab, start, count, bags, pairs):
                if kind == Objective.CP:
                    yield {
                        "batch_index": index,
                        "relation_ids": batch.relation_ids,
                        "sentence_indices": [list(p) for p in batch.sentence_indices],
                        "pairs": [[decode(a, vocab), decode(b, vocab)] for a, b in batch.pairs],
                    }
                else:
                    yield {
                        "batch_index": index,
                        "examples": [{"a": decode(a, vocab), "b": decode(b, vocab), "label": y} for a, b, y in batch],
                    }

        n = write_jsonl(out / BATCHES_FILE, records())
        typer.echo(f"{n} batches -> {out / BATCHES_FILE}")
    _guarded(action)


if __name__ == "__main__":
    app()
