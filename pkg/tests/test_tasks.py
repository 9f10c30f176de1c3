import statistics
from itertools import product

import pytest
import torch
from torch import nn

from exception.custom_exception import ConfigError, EncodingError, RelationCPException, SamplingError
from model.models import EncoderConfig, FewShotHyper, FinetuneHyper, InputSetting, SyntheticRelation, SyntheticSpec
from src.corpus.labeling import group_by_relation, split_corpus
from src.corpus.synthetic import generate_synthetic
from src.encoder.transformer import init_params
from src.tasks.fewshot import (
    evaluate_fewshot,
    proto_classify,
    prototype_predict,
    represent_all,
    sample_episode,
    train_fewshot,
)
from src.tasks.finetune import (
    check_setting,
    encode_inputs,
    evaluate_supervised,
    finetune,
    load_classifier,
    predict,
    save_classifier,
    subsample_per_relation,
)
from src.tasks.metrics import accuracy, median, micro_f1, precision_recall_f1
from src.textproc.vocab import Vocab
from utils.seeding import derive_rng

NA = "NA"


class ConstantEncoder(nn.Module):
    """Gives every sentence the same representation."""

    def represent(self, batch):
        return torch.ones(len(batch), 3, dtype=torch.float64)


def _oracle_f1(gold, pred):
    tp = sum(g == p != NA for g, p in zip(gold, pred))
    denominator = sum(p != NA for p in pred) + sum(g != NA for g in gold)
    return 2 * tp / denominator if tp else 0.0


class TestMetrics:
    def test_four_of_seven(self):
        gold = ["a", "b", "c", "a", "b", "c", "a", NA]
        pred = ["a", "b", "c", "a", "c", "a", "b", NA]
        p, r, f1 = precision_recall_f1(gold, pred, NA)
        assert p == pytest.approx(4 / 7) and r == pytest.approx(4 / 7) and f1 == pytest.approx(4 / 7)

    def test_all_na(self):
        assert micro_f1([NA, NA], [NA, NA], NA) == 0.0

    def test_perfect(self):
        assert micro_f1(["a", NA, "b"], ["a", NA, "b"], NA) == 1.0

    def test_without_na_equals_accuracy(self):
        gold, pred = ["a", "b", "b", "c"], ["a", "b", "c", "c"]
        assert micro_f1(gold, pred) == pytest.approx(accuracy(gold, pred)) == pytest.approx(0.75)

    def test_length_mismatch(self):
        with pytest.raises(RelationCPException, match="length"):
            micro_f1(["a"], ["a", "b"], NA)

    def test_exhaustive_small_vectors(self):
        labels = [NA, "a", "b", "c"]
        for n in range(1, 5):
            for gold in product(labels, repeat=n):
                for pred in product(labels, repeat=n):
                    assert micro_f1(gold, pred, NA) == pytest.approx(_oracle_f1(gold, pred), abs=1e-12)

    def test_median(self):
        assert median([0.9, 0.3, 0.5]) == 0.5
        assert median([0.1, 0.9, 0.5, 0.2, 0.8]) == 0.5
        with pytest.raises(RelationCPException):
            median([])


class TestSubsample:
    def test_counts_per_relation(self, make_sentence):
        train = [make_sentence("a b", (0, 1), (1, 2), relation="r1") for _ in range(10)]
        train += [make_sentence("a b", (0, 1), (1, 2), relation="r2")]
        assert len(subsample_per_relation(train, 0.5, seed=0)) == 5 + 1
        # 2.5 rounds up to 3; the singleton relation keeps its one sentence
        kept = subsample_per_relation(train, 0.25, seed=0)
        assert sum(s.relation_id == "r1" for s in kept) == 3
        assert sum(s.relation_id == "r2" for s in kept) == 1

    def test_one_percent_keeps_one_per_relation(self, make_sentence):
        train = [make_sentence("a b", (0, 1), (1, 2), relation=f"r{i % 4}") for i in range(400)]
        kept = subsample_per_relation(train, 0.01, seed=0)
        assert sorted(s.relation_id for s in kept) == ["r0", "r1", "r2", "r3"]

    def test_full_fraction_is_identity(self, corpus):
        assert subsample_per_relation(corpus, 1.0, seed=0) == list(corpus)

    def test_seeded(self, corpus):
        first = subsample_per_relation(corpus, 0.1, seed=3)
        assert first == subsample_per_relation(corpus, 0.1, seed=3)
        assert first != subsample_per_relation(corpus, 0.1, seed=4)

    @pytest.mark.parametrize("fraction", [0.0, -0.1, 1.5])
    def test_fraction_out_of_range(self, corpus, fraction):
        with pytest.raises(ConfigError):
            subsample_per_relation(corpus, fraction, seed=0)


class TestEpisodes:
    def test_supports_and_queries_are_disjoint(self, corpus):
        by_relation = group_by_relation(corpus)
        for i in range(200):
            episode = sample_episode(corpus, by_relation, 3, 2, 4, derive_rng(0, "episode", i))
            supports = [j for row in episode.support_indices for j in row]
            assert len(set(supports)) == 6
            assert not set(supports) & set(episode.query_indices)
            for c, row in enumerate(episode.support_indices):
                assert all(corpus[j].relation_id == episode.relation_ids[c] for j in row)
            for j, (_, c) in zip(episode.query_indices, episode.queries):
                assert corpus[j].relation_id == episode.relation_ids[c]

    def test_all_relations_used_when_n_equals_count(self, corpus):
        by_relation = group_by_relation(corpus)
        episode = sample_episode(corpus, by_relation, 4, 1, 1, derive_rng(1, "episode", 0))
        assert sorted(episode.relation_ids) == sorted(by_relation)

    def test_too_few_relations(self, corpus):
        with pytest.raises(SamplingError, match="needs 5 relations"):
            sample_episode(corpus, group_by_relation(corpus), 5, 1, 1, derive_rng(0, "episode", 0))

    def test_short_relation_is_named(self, make_sentence):
        sentences = [make_sentence("a b", (0, 1), (1, 2), relation="tiny") for _ in range(2)]
        with pytest.raises(SamplingError, match="'tiny'"):
            sample_episode(sentences, {"tiny": [0, 1]}, 1, 1, 3, derive_rng(0, "episode", 0))

    def test_same_stream_same_episode(self, corpus):
        by_relation = group_by_relation(corpus)
        a = sample_episode(corpus, by_relation, 4, 2, 2, derive_rng(9, "episode", 5))
        b = sample_episode(corpus, by_relation, 4, 2, 2, derive_rng(9, "episode", 5))
        assert a == b


class TestPrototypes:
    def test_hand_set_table(self):
        support = torch.tensor([[[1.0, 0.0], [1.0, 0.0]], [[0.0, 1.0], [0.0, 1.0]]], dtype=torch.float64)
        queries = torch.tensor([[2.0, 1.0], [0.5, 3.0], [1.0, 1.0]], dtype=torch.float64)
        # the tie in the last query goes to the lower class
        assert prototype_predict(support, queries) == [0, 1, 0]

    def test_support_order_within_class_is_irrelevant(self):
        gen = torch.Generator().manual_seed(2)
        support = torch.randn(3, 4, 5, dtype=torch.float64, generator=gen)
        queries = torch.randn(10, 5, dtype=torch.float64, generator=gen)
        shuffled = support[:, torch.tensor([2, 0, 3, 1])]
        assert prototype_predict(shuffled, queries) == prototype_predict(support, queries)

    def test_one_way_is_always_right(self, corpus, vocab, tiny_encoder_cfg):
        report = evaluate_fewshot(init_params(tiny_encoder_cfg, 0), corpus, 1, 1, 20, 0, vocab, max_len=32)
        assert report.median == 1.0 and report.episodes == 20

    def test_constant_representation_scores_chance(self, corpus, vocab):
        report = evaluate_fewshot(ConstantEncoder(), corpus, 4, 1, 2000, 0, vocab, max_len=32)
        assert 0.21 <= report.median <= 0.29

    def test_random_encoder_scores_chance_when_text_ignores_labels(self):
        # every relation draws from the same templates and fillers
        templates = ["HEAD met TAIL .", "TAIL and HEAD talked at length ."]
        spec = SyntheticSpec(
            relations=[SyntheticRelation(relation_id=f"r{i}", head_type="person", tail_type="city", templates=templates)
                       for i in range(6)],
            entities={"person": [f"p{i}" for i in range(30)], "city": [f"c{i}" for i in range(30)]},
            count=600,
        )
        sentences, _ = generate_synthetic(spec, seed=5)
        vocab = Vocab.build(sentences)
        cfg = EncoderConfig(vocab_size=len(vocab), hidden_dim=16, layers=1, heads=2, ffn_dim=32, max_len=32)
        report = evaluate_fewshot(init_params(cfg, 0), sentences, 5, 1, 10_000, 0, vocab, max_len=32)
        # 0.2 +- 5 binomial standard deviations at 10,000 episodes
        assert 0.18 <= report.median <= 0.22

    def test_deterministic(self, corpus, vocab, tiny_encoder_cfg):
        model = init_params(tiny_encoder_cfg, 0)
        first = evaluate_fewshot(model, corpus, 4, 1, 50, 11, vocab, max_len=32)
        second = evaluate_fewshot(model, corpus, 4, 1, 50, 11, vocab, max_len=32)
        assert first == second

    def test_proto_classify_matches_precomputed_path(self, corpus, vocab, tiny_encoder_cfg):
        model = init_params(tiny_encoder_cfg, 0)
        by_relation = group_by_relation(corpus)
        episode = sample_episode(corpus, by_relation, 4, 2, 3, derive_rng(0, "episode", 0))
        inputs = encode_inputs(corpus, InputSetting.CM, vocab, 32)
        reps = represent_all(model, inputs)
        expected = prototype_predict(reps[torch.tensor(episode.support_indices)], reps[torch.tensor(episode.query_indices)])
        assert proto_classify(episode, model, InputSetting.CM, vocab, 32) == expected

    def test_episodic_training_updates_the_encoder(self, corpus, vocab, tiny_encoder_cfg):
        model = init_params(tiny_encoder_cfg, 0)
        before = model.token_embedding.weight.detach().clone()
        losses = train_fewshot(model, corpus, 3, 1, 2, FewShotHyper(steps=3, episodes_per_step=2, max_len=32), vocab, seed=0)
        assert len(losses) == 3 and all(l > 0 for l in losses)
        assert not torch.equal(before, model.token_embedding.weight)


@pytest.fixture
def hyper():
    return FinetuneHyper(epochs=1, batch_size=16, max_len=32)


class TestFinetune:
    def test_single_class(self, corpus, vocab, tiny_encoder_cfg, hyper):
        train = [s for s in corpus if s.relation_id == "born_in"][:20]
        outcome = finetune(init_params(tiny_encoder_cfg, 0), train, [], InputSetting.CM, hyper, vocab, seed=0)
        assert outcome.classifier.labels == ["born_in"]
        assert outcome.history[0].dev_metric == 1.0
        assert predict(outcome.classifier, train, InputSetting.CM, vocab, 32) == ["born_in"] * 20

    def test_input_encoder_is_untouched(self, corpus, vocab, tiny_encoder_cfg, hyper):
        encoder = init_params(tiny_encoder_cfg, 0)
        before = {k: v.clone() for k, v in encoder.state_dict().items()}
        outcome = finetune(encoder, corpus[:64], [], InputSetting.CM, hyper, vocab, seed=0)
        assert all(torch.equal(before[k], v) for k, v in encoder.state_dict().items())
        tuned = outcome.classifier.encoder.state_dict()
        assert any(not torch.equal(before[k], tuned[k]) for k in before)

    def test_max_len_beyond_encoder(self, corpus, vocab, tiny_encoder_cfg):
        with pytest.raises(ConfigError, match="max_len"):
            finetune(init_params(tiny_encoder_cfg, 0), corpus[:8], [], InputSetting.CM,
                     FinetuneHyper(max_len=48), vocab, seed=0)

    def test_type_settings_need_types(self, make_sentence):
        untyped = [make_sentence("a b c", (0, 1), (2, 3))]
        check_setting(untyped, InputSetting.ONLYM)
        with pytest.raises(EncodingError, match="entity types"):
            check_setting(untyped, InputSetting.ONLYT)

    def test_classifier_survives_save_and_load(self, tmp_path, corpus, vocab, tiny_encoder_cfg, hyper):
        outcome = finetune(init_params(tiny_encoder_cfg, 0), corpus[:64], [], InputSetting.CM, hyper, vocab, seed=1)
        path = save_classifier(tmp_path / "clf.ckpt", outcome.classifier, vocab)
        loaded = load_classifier(path, vocab)
        assert loaded.labels == outcome.classifier.labels
        sample = corpus[100:140]
        assert predict(loaded, sample, InputSetting.CM, vocab, 32) == predict(
            outcome.classifier, sample, InputSetting.CM, vocab, 32
        )

    def test_evaluate_over_seeds(self, corpus, vocab, tiny_encoder_cfg, hyper):
        train, dev, test = split_corpus(corpus, (0.6, 0.2, 0.2), seed=0)
        report, outcomes = evaluate_supervised(
            lambda seed: init_params(tiny_encoder_cfg, seed), train, dev, test, InputSetting.CM, hyper, vocab,
            seeds=[1, 2, 3, 4, 5], fraction=0.25,
        )
        assert report.metric == "accuracy"
        assert report.seeds == [1, 2, 3, 4, 5] and len(report.per_seed) == 5
        assert report.median == statistics.median(report.per_seed)
        assert all(0.0 <= v <= 1.0 for v in report.per_seed)
        assert [len(o.predictions) for o in outcomes] == [len(test)] * 5

    def test_na_label_switches_to_micro_f1(self, corpus, vocab, tiny_encoder_cfg, hyper):
        train, dev, test = split_corpus(corpus, (0.6, 0.2, 0.2), seed=0)
        report, _ = evaluate_supervised(
            lambda seed: init_params(tiny_encoder_cfg, seed), train, dev, test, InputSetting.CM, hyper, vocab,
            seeds=[1], fraction=0.25, na_label="employer",
        )
        assert report.metric == "micro-F1"
