from __future__ import annotations
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import RelationCPException
from model.models import CorpusStats, LabelingReport, LinkedSentence, RelationBag, TripleStore
from model.run_config import RunConfig
from src.corpus.data_ingestion import load_corpus, load_test_pairs, load_triples, save_corpus, save_triples
from src.corpus.labeling import assign_relations, build_bags, corpus_stats, filter_leakage
from src.corpus.synthetic import default_synthetic_spec, generate_synthetic, load_synthetic_spec
from src.textproc.vocab import Vocab
from utils.file_io import ensure_dir, write_json

DATASET_FILE = "dataset.jsonl"
BAGS_FILE = "bags.json"
STATS_FILE = "stats.json"
VOCAB_FILE = "vocab.txt"
TRIPLES_FILE = "triples.tsv"


class BuildSummary(BaseModel):
    stats: CorpusStats
    labeling: LabelingReport
    leaked_removed: int = 0


class DatasetBuilder:
    """
    load (or synthesize) -> assign_relations -> filter_leakage -> build_bags,
    then write dataset, bags, stats and vocabulary into ``output_dir``.
    """

    def __init__(self, config: RunConfig, output_dir: Optional[str | Path] = None):
        self.config = config
        self.output_dir = ensure_dir(output_dir or config.output_dir)
        log.info("DatasetBuilder initialized", output_dir=str(self.output_dir))

    def _source(self) -> tuple[List[LinkedSentence], TripleStore]:
        corpus_cfg = self.config.corpus
        if corpus_cfg.synthetic is not None:
            syn = corpus_cfg.synthetic
            spec = (
                load_synthetic_spec(syn.spec_path) if syn.spec_path
                else default_synthetic_spec(syn.num_relations, syn.templates_per_relation, syn.fillers_per_type, syn.count)
            )
            sentences, kg = generate_synthetic(spec, self.config.seed)
            save_triples(kg, self.output_dir / TRIPLES_FILE)
            return sentences, kg
        kg = load_triples(corpus_cfg.triples)
        return load_corpus(corpus_cfg.path), kg

    def build(self) -> BuildSummary:
        sentences, kg = self._source()
        try:
            labeled, labeling = assign_relations(sentences, kg)
            leaked = 0
            if self.config.corpus.test_pairs:
                test_pairs = load_test_pairs(self.config.corpus.test_pairs)
                kept = filter_leakage(labeled, test_pairs, symmetric=self.config.corpus.symmetric_leak_filter)
                leaked = len(labeled) - len(kept)
                labeled = kept
            bags: RelationBag = build_bags(labeled)
            stats = corpus_stats(labeled)
        except RelationCPException:
            raise
        except Exception as e:
            log.error("Dataset build failed", error=str(e))
            raise RelationCPException("Dataset build failed", e) from e

        if not labeled:
            log.warning("Dataset is empty after labelling and leak filtering",
                        dropped_unmatched=labeling.dropped_unmatched, leaked_removed=leaked)

        summary = BuildSummary(stats=stats, labeling=labeling, leaked_removed=leaked)
        save_corpus(labeled, self.output_dir / DATASET_FILE)
        write_json(self.output_dir / BAGS_FILE, bags)
        write_json(self.output_dir / STATS_FILE, summary)
        Vocab.build(labeled).save(self.output_dir / VOCAB_FILE)
        log.info("Dataset built", output_dir=str(self.output_dir), **stats.model_dump(exclude={"bag_size_histogram"}))
        return summary
