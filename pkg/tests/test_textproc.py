import numpy as np
import pytest

from exception.custom_exception import EncodingError
from model.models import (
    BLANK, E1, E1_END, E2, E2_END, IGNORE_INDEX, MARKER_TOKENS, MASK_ID, RESERVED_TOKENS, UNK_ID,
    BlankPolicy, InputSetting,
)
from src.textproc.encoding import decode, encode, mlm_mask, position_features, prepare_input
from src.textproc.formats import (
    apply_blank_mask,
    context_tokens,
    format_cm,
    format_ct,
    format_onlyc,
    format_onlym,
    format_onlyt,
    format_sentence,
)
from src.textproc.vocab import Vocab

SPACEX_CM = "[CLS] [E1] SpaceX [/E1] was founded by [E2] Elon Musk [/E2] . [SEP]"


def _long_sentence(make_sentence, n_words=50):
    words = [f"w{i}" for i in range(n_words)]
    return make_sentence(" ".join(words), (3, 5), (20, 21))


class TestFormats:
    def test_spacex_golden(self, spacex):
        assert " ".join(format_cm(spacex)) == SPACEX_CM

    def test_tail_before_head(self, make_sentence):
        s = make_sentence("Elon Musk founded SpaceX .", (3, 4), (0, 2))
        assert " ".join(format_cm(s)) == "[CLS] [E2] Elon Musk [/E2] founded [E1] SpaceX [/E1] . [SEP]"

    def test_adjacent_spans(self, make_sentence):
        tokens = format_cm(make_sentence("a b c", (0, 1), (1, 2)))
        i = tokens.index(E1_END)
        assert tokens[i + 1] == E2

    def test_ct_golden(self, make_sentence):
        s = make_sentence("she was born in Washington", (0, 1), (4, 5), head_type="person", tail_type="state")
        assert " ".join(format_ct(s)) == "[CLS] [E1] [person] [/E1] was born in [E2] [state] [/E2] [SEP]"

    def test_ct_length(self, spacex):
        out = format_ct(spacex)
        # each mention collapses to one token; [CLS], [SEP] and four markers are added
        expected = len(spacex.tokens) - (spacex.head.length - 1) - (spacex.tail.length - 1) + 6
        assert len(out) == expected

    def test_onlyc_golden(self, spacex):
        assert " ".join(format_onlyc(spacex)) == "[CLS] [E1] [SUBJ] [/E1] was founded by [E2] [OBJ] [/E2] . [SEP]"

    def test_onlym_drops_context(self, spacex):
        out = format_onlym(spacex)
        assert " ".join(out) == "[CLS] [E1] SpaceX [/E1] [E2] Elon Musk [/E2] [SEP]"
        assert not set(context_tokens(spacex)) & set(out)

    def test_onlyt_shape(self, spacex):
        assert format_onlyt(spacex) == ["[CLS]", E1, "[organization]", E1_END, E2, "[person]", E2_END, "[SEP]"]

    def test_missing_type(self, make_sentence):
        s = make_sentence("a b c", (0, 1), (2, 3), head_type="person")
        for setting in (InputSetting.CT, InputSetting.ONLYT):
            with pytest.raises(EncodingError, match="type"):
                format_sentence(s, setting)

    @pytest.mark.parametrize("setting", list(InputSetting))
    def test_structure_of_every_setting(self, spacex, setting):
        out = format_sentence(spacex, setting)
        assert out[0] == "[CLS]" and out[-1] == "[SEP]"
        assert all(out.count(m) == 1 for m in MARKER_TOKENS)


class TestBlankMask:
    def test_zero_probability_is_identity(self, spacex):
        tokens = format_cm(spacex)
        assert apply_blank_mask(tokens, BlankPolicy(p_blank=0.0)) == tokens

    def test_full_probability_blanks_both(self, spacex):
        out = apply_blank_mask(format_cm(spacex), BlankPolicy(p_blank=1.0))
        assert " ".join(out) == "[CLS] [E1] [BLANK] [/E1] was founded by [E2] [BLANK] [/E2] . [SEP]"

    def test_rate(self, spacex):
        tokens = format_cm(spacex)
        rng = np.random.default_rng(2024)
        policy = BlankPolicy(p_blank=0.7)
        masked = 0
        for _ in range(5000):
            out = apply_blank_mask(tokens, policy, rng)
            masked += (out[out.index(E1) + 1] == BLANK) + (out[out.index(E2) + 1] == BLANK)
        assert 0.68 <= masked / 10000 <= 0.72

    def test_context_untouched(self, spacex):
        tokens = format_cm(spacex)
        out = apply_blank_mask(tokens, BlankPolicy(p_blank=1.0))
        assert [t for t in out if t != BLANK] == [t for t in tokens if t not in ("SpaceX", "Elon", "Musk")]

    def test_malformed_nesting(self):
        with pytest.raises(EncodingError, match="malformed"):
            apply_blank_mask(["[CLS]", E1, "a", E2, "b", E2_END, "[SEP]"], BlankPolicy(p_blank=1.0))

    def test_same_seed_same_draws(self, spacex):
        tokens = format_cm(spacex)
        policy = BlankPolicy(p_blank=0.5, seed=9)
        assert apply_blank_mask(tokens, policy) == apply_blank_mask(tokens, policy)


class TestEncode:
    def test_short_sentence(self, spacex):
        vocab = Vocab.build([spacex])
        enc = encode(format_cm(spacex), vocab, 64)
        assert len(enc.ids) == 64
        assert sum(enc.attention_mask) == len(format_cm(spacex))
        assert enc.ids[enc.e1_pos] == vocab.lookup(E1)
        assert enc.ids[enc.e2_pos] == vocab.lookup(E2)

    def test_long_sentence_keeps_markers(self, make_sentence):
        words = " ".join(f"w{i}" for i in range(200))
        s = make_sentence(words, (185, 187), (195, 196))
        vocab = Vocab.build([s])
        enc = encode(format_cm(s), vocab, 64)
        tokens = decode(enc, vocab)
        assert len(tokens) == 64
        assert all(tokens.count(m) == 1 for m in (*MARKER_TOKENS, "[CLS]", "[SEP]"))
        assert tokens[tokens.index(E1) + 1] == "w185"
        assert tokens[tokens.index(E2) + 1] == "w195"

    def test_unknown_word(self, spacex, make_sentence):
        vocab = Vocab.build([spacex])
        enc = encode(format_cm(make_sentence("Tesla was founded by Elon Musk .", (0, 1), (4, 6))), vocab, 16)
        assert enc.ids[2] == UNK_ID

    def test_max_len_too_small(self, spacex):
        with pytest.raises(EncodingError):
            encode(format_cm(spacex), Vocab.build([spacex]), 6)

    def test_decode_then_encode_is_stable(self, spacex):
        vocab = Vocab.build([spacex])
        enc = encode(format_cm(spacex), vocab, 20)
        assert encode(decode(enc, vocab), vocab, 20).ids == enc.ids

    def test_vocab_file(self, tmp_path, corpus):
        vocab = Vocab.build(corpus)
        path = vocab.save(tmp_path / "vocab.txt")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert tuple(lines[:12]) == RESERVED_TOKENS
        assert Vocab.load(path).fingerprint() == vocab.fingerprint()


class TestMLMMask:
    def test_zero_rate(self, spacex):
        vocab = Vocab.build([spacex])
        enc = mlm_mask(encode(format_cm(spacex), vocab, 16), rate=0.0, rng=0)
        assert set(enc.mlm_labels) == {IGNORE_INDEX}

    def test_structural_tokens_never_selected(self, spacex):
        vocab = Vocab.build([spacex])
        enc = encode(apply_blank_mask(format_cm(spacex), BlankPolicy(p_blank=1.0)), vocab, 16)
        rng = np.random.default_rng(1)
        for _ in range(10000 // 16):
            masked = mlm_mask(enc, rate=1.0, rng=rng, vocab_size=len(vocab))
            for i, label in enumerate(masked.mlm_labels):
                if label != IGNORE_INDEX:
                    assert enc.ids[i] >= len(RESERVED_TOKENS)

    def test_selection_and_replacement_rates(self, make_sentence):
        s = _long_sentence(make_sentence)
        vocab = Vocab.build([s])
        enc = encode(format_cm(s), vocab, 64)
        rng = np.random.default_rng(7)
        candidates = selected = as_mask = 0
        for _ in range(400):
            out = mlm_mask(enc, rate=0.15, rng=rng, vocab_size=len(vocab))
            candidates += 50
            for label, new_id in zip(out.mlm_labels, out.ids):
                if label != IGNORE_INDEX:
                    selected += 1
                    as_mask += new_id == MASK_ID
        assert 0.13 <= selected / candidates <= 0.17
        assert 0.77 <= as_mask / selected <= 0.83

    def test_prepare_input_is_reproducible(self, spacex):
        vocab = Vocab.build([spacex])
        policy = BlankPolicy(p_blank=0.5)
        a = prepare_input(spacex, InputSetting.CM, vocab, 16, policy, 0.5, np.random.default_rng(3))
        b = prepare_input(spacex, InputSetting.CM, vocab, 16, policy, 0.5, np.random.default_rng(3))
        assert a == b


class TestPositionFeatures:
    def test_seven_token_sentence(self, make_sentence):
        s = make_sentence("a b c d e f g", (0, 1), (4, 5))
        assert position_features(s, 40) == [(40 + i, 40 + i - 4) for i in range(7)]

    def test_zero_offset_and_clipping(self, make_sentence):
        s = make_sentence(" ".join(["x"] * 110), (2, 3), (5, 6))
        features = position_features(s, 40)
        assert features[2][0] == 40
        assert features[105][1] == 80
        assert features[0][1] == 40 - 5
