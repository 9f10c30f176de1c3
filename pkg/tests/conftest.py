"""Shared fixtures: a small synthetic world, its vocabulary and a tiny 64-bit encoder config."""
import os

# keep test runs from writing log files; must happen before the logger is imported
os.environ["RELCP_LOG_DIR"] = ""
os.environ.setdefault("RELCP_LOG_LEVEL", "WARNING")

import pytest

from model.models import EncoderConfig, EntitySpan, LinkedSentence, SamplerConfig
from src.corpus.labeling import build_bags, build_pair_index
from src.corpus.synthetic import default_synthetic_spec, generate_synthetic
from src.textproc.vocab import Vocab


@pytest.fixture
def make_sentence():
    """Factory for LinkedSentence from whitespace text and (start, end) spans."""

    def _make(text, head, tail, relation=None, head_id="h", tail_id="t",
              head_type=None, tail_type=None, sentence_id=None):
        return LinkedSentence(
            tokens=text.split(),
            head=EntitySpan(start=head[0], end=head[1], kg_id=head_id, entity_type=head_type),
            tail=EntitySpan(start=tail[0], end=tail[1], kg_id=tail_id, entity_type=tail_type),
            relation_id=relation,
            sentence_id=sentence_id,
        )

    return _make


@pytest.fixture
def spacex(make_sentence):
    return make_sentence(
        "SpaceX was founded by Elon Musk .", (0, 1), (4, 6),
        relation="P112", head_id="Q193701", tail_id="Q317521",
        head_type="organization", tail_type="person",
    )


@pytest.fixture(scope="session")
def synthetic_world():
    spec = default_synthetic_spec(num_relations=4, templates_per_relation=2, fillers_per_type=10, count=400)
    return generate_synthetic(spec, seed=7)


@pytest.fixture(scope="session")
def corpus(synthetic_world):
    return synthetic_world[0]


@pytest.fixture(scope="session")
def bags(corpus):
    return build_bags(corpus)


@pytest.fixture(scope="session")
def pair_index(corpus):
    return build_pair_index(corpus)


@pytest.fixture(scope="session")
def vocab(corpus):
    return Vocab.build(corpus)


@pytest.fixture
def sampler_cfg():
    return SamplerConfig(batch_pairs=4, p_blank=0.7, max_len=32, seed=3, mlm_rate=0.15)


@pytest.fixture
def tiny_encoder_cfg(vocab):
    return EncoderConfig(
        vocab_size=len(vocab), hidden_dim=16, layers=1, heads=2, ffn_dim=32, max_len=32,
        filters=12, pos_dim=3, clip=10,
    )
