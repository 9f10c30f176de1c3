import json
from collections import Counter

import pytest

from exception.custom_exception import CorpusFormatError
from model.models import SyntheticRelation, TripleStore
from src.corpus.data_ingestion import load_corpus, load_test_pairs, load_triples, save_corpus
from src.corpus.labeling import (
    assign_relations,
    build_bags,
    corpus_stats,
    filter_leakage,
    split_corpus,
)
from src.corpus.synthetic import default_synthetic_spec, generate_synthetic

SPACEX_LINE = {
    "tokens": ["SpaceX", "was", "founded", "by", "Elon", "Musk", "."],
    "h": {"start": 0, "end": 1, "id": "Q193701"},
    "t": {"start": 4, "end": 6, "id": "Q317521"},
    "relation": "P112",
}


def _write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


class TestLoadCorpus:
    def test_spacex_record(self, tmp_path):
        sentences = load_corpus(_write_lines(tmp_path / "c.jsonl", [SPACEX_LINE]))
        assert len(sentences) == 1
        s = sentences[0]
        assert s.head.surface == "SpaceX"
        assert s.tail.surface == "Elon Musk"
        assert s.relation_id == "P112"
        assert s.entity_pair == ("Q193701", "Q317521")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        assert load_corpus(path) == []

    def test_empty_span_is_rejected(self, tmp_path):
        bad = dict(SPACEX_LINE, h={"start": 0, "end": 0, "id": "Q193701"})
        with pytest.raises(CorpusFormatError, match="empty span"):
            load_corpus(_write_lines(tmp_path / "c.jsonl", [bad]))

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(SPACEX_LINE) + "\n{not json\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError) as info:
            load_corpus(path)
        assert info.value.record_line == 2
        assert "line 2" in str(info.value)

    def test_out_of_bounds_span_names_record(self, tmp_path):
        bad = dict(SPACEX_LINE, id="rec-17", t={"start": 4, "end": 9, "id": "Q317521"})
        with pytest.raises(CorpusFormatError, match="rec-17"):
            load_corpus(_write_lines(tmp_path / "c.jsonl", [bad]))

    def test_overlapping_spans(self, tmp_path):
        bad = dict(SPACEX_LINE, t={"start": 0, "end": 2, "id": "Q317521"})
        with pytest.raises(CorpusFormatError, match="overlapping"):
            load_corpus(_write_lines(tmp_path / "c.jsonl", [bad]))

    def test_save_and_reload_gives_equal_corpus(self, tmp_path, corpus):
        path = tmp_path / "corpus.jsonl"
        save_corpus(corpus[:50], path)
        assert load_corpus(path) == corpus[:50]

    def test_triples_and_pairs_tsv(self, tmp_path):
        triples = tmp_path / "kg.tsv"
        triples.write_text("Q1\tP112\tQ2\nQ1\tP112\tQ2\nQ3\tP169\tQ2\n", encoding="utf-8")
        kg = load_triples(triples)
        assert len(kg) == 2
        assert kg.relation_counts == {"P112": 1, "P169": 1}

        pairs = tmp_path / "pairs.tsv"
        pairs.write_text("Q1\tQ2\n", encoding="utf-8")
        assert load_test_pairs(pairs) == {("Q1", "Q2")}

        bad = tmp_path / "bad.tsv"
        bad.write_text("Q1\tQ2\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError, match="line 1"):
            load_triples(bad)


class TestAssignRelations:
    def test_single_match(self, spacex):
        kg = TripleStore.from_triples([("Q193701", "P112", "Q317521")])
        labeled, report = assign_relations([spacex.with_relation(None)], kg)
        assert [s.relation_id for s in labeled] == ["P112"]
        assert report.labeled == 1 and report.duplicated == 0

    def test_multi_relation_pair_is_duplicated(self, spacex):
        kg = TripleStore.from_triples([("Q193701", "P112", "Q317521"), ("Q193701", "P169", "Q317521")])
        labeled, report = assign_relations([spacex], kg)
        assert [s.relation_id for s in labeled] == ["P112", "P169"]
        assert report.duplicated == 1

    def test_unmatched_dropped_and_missing_id_skipped(self, make_sentence):
        kg = TripleStore.from_triples([("a", "r", "b")])
        no_match = make_sentence("x y z", (0, 1), (2, 3), head_id="b", tail_id="a")
        no_id = make_sentence("x y z", (0, 1), (2, 3), head_id=None, tail_id="b")
        labeled, report = assign_relations([no_match, no_id], kg)
        assert labeled == []
        assert report.dropped_unmatched == 1
        assert report.skipped_missing_id == 1

    def test_labels_match_brute_force_scan(self, synthetic_world, corpus):
        _, kg = synthetic_world
        labeled, _ = assign_relations(corpus, kg)
        expected = []
        for s in corpus:
            h, t = s.entity_pair
            expected.extend((h, r, t) for r in sorted(r for (hh, r, tt) in kg.triples if (hh, tt) == (h, t)))
        assert [(s.head.kg_id, s.relation_id, s.tail.kg_id) for s in labeled] == expected


class TestBags:
    def test_direct_grouping(self, make_sentence):
        sentences = [make_sentence("a b", (0, 1), (1, 2), relation=r) for r in ("P112", "P112", "P169")]
        assert build_bags(sentences).bags == {"P112": [0, 1], "P169": [2]}

    def test_empty(self):
        assert build_bags([]).bags == {}

    def test_unlabelled_sentence(self, make_sentence):
        with pytest.raises(CorpusFormatError):
            build_bags([make_sentence("a b", (0, 1), (1, 2))])

    def test_sizes_sum_to_corpus(self):
        sentences, _ = generate_synthetic(default_synthetic_spec(4, 2, 10, 1000), seed=1)
        bags = build_bags(sentences)
        assert bags.total() == 1000
        for relation, indices in bags.bags.items():
            assert all(sentences[i].relation_id == relation for i in indices)


class TestFilterLeakage:
    def _corpus(self, make_sentence):
        pairs = [("A", "B")] * 3 + [("B", "A")] + [(f"X{i}", "Y") for i in range(6)]
        return [make_sentence("a b", (0, 1), (1, 2), head_id=h, tail_id=t) for h, t in pairs]

    def test_empty_exclusion_is_identity(self, make_sentence):
        sentences = self._corpus(make_sentence)
        assert filter_leakage(sentences, set()) == sentences

    def test_ordered_pairs_removed(self, make_sentence):
        sentences = self._corpus(make_sentence)
        kept = filter_leakage(sentences, {("A", "B")})
        assert len(kept) == 7
        assert all(s.entity_pair != ("A", "B") for s in kept)
        # reversed pair survives
        assert any(s.entity_pair == ("B", "A") for s in kept)
        assert kept == [s for s in sentences if s in kept]

    def test_symmetric_option(self, make_sentence):
        kept = filter_leakage(self._corpus(make_sentence), {("A", "B")}, symmetric=True)
        assert len(kept) == 6


class TestSynthetic:
    def test_deterministic(self):
        spec = default_synthetic_spec(num_relations=4, templates_per_relation=2, count=400)
        first, kg1 = generate_synthetic(spec, seed=7)
        second, kg2 = generate_synthetic(spec, seed=7)
        assert len(first) == 400
        assert first == second
        assert kg1.triples == kg2.triples

    def test_single_sentence(self):
        sentences, kg = generate_synthetic(default_synthetic_spec(num_relations=1, count=1), seed=0)
        assert len(sentences) == 1
        s = sentences[0]
        assert (s.head.kg_id, s.relation_id, s.tail.kg_id) in kg.triples

    def test_every_triple_recorded(self, synthetic_world):
        sentences, kg = synthetic_world
        assert all((s.head.kg_id, s.relation_id, s.tail.kg_id) in kg.triples for s in sentences)
        assert {s.relation_id for s in sentences} == set(kg.relation_counts)

    def test_relation_frequencies_are_uniform(self):
        sentences, _ = generate_synthetic(default_synthetic_spec(count=4000), seed=11)
        counts = Counter(s.relation_id for s in sentences)
        expected = 4000 / 8
        assert len(counts) == 8
        assert all(0.8 * expected <= c <= 1.2 * expected for c in counts.values())

    def test_type_signatures_come_in_pairs(self):
        spec = default_synthetic_spec()
        signatures = Counter((r.head_type, r.tail_type) for r in spec.relations)
        assert sorted(signatures.values()) == [2, 2, 2, 2]
        first_four = {(r.head_type, r.tail_type) for r in spec.relations[:4]}
        assert len(first_four) == 4

    def test_template_without_placeholder(self):
        with pytest.raises(ValueError, match="placeholder"):
            SyntheticRelation(relation_id="r", head_type="person", tail_type="city", templates=["HEAD lives ."])


class TestStats:
    def test_empty(self):
        stats = corpus_stats([])
        assert (stats.num_sentences, stats.num_relations, stats.distinct_entity_pairs) == (0, 0, 0)
        assert stats.bag_size_histogram == {}

    def test_counts(self, corpus):
        stats = corpus_stats(corpus)
        assert stats.num_sentences == 400
        assert stats.num_relations == 4
        assert sum(stats.bag_size_histogram.values()) == stats.num_relations
        assert stats.distinct_entity_pairs == len({s.entity_pair for s in corpus})


def test_split_keeps_every_relation_in_train(corpus):
    train, dev, test = split_corpus(corpus, (0.6, 0.2, 0.2), seed=5)
    assert len(train) + len(dev) + len(test) == len(corpus)
    assert {s.relation_id for s in train} == {s.relation_id for s in corpus}
    assert split_corpus(corpus, (0.6, 0.2, 0.2), seed=5) == (train, dev, test)
