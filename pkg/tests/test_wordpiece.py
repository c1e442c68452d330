import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biaslattice.errors import InputFormatError
from biaslattice.wordpiece import (
    SegmentationError,
    detokenize,
    is_delimiter,
    make_vocab,
    read_vocab,
    segment,
    segment_text,
)


class TestSegment:
    def test_longest_match(self, toy_vocab):
        assert segment(toy_vocab, "play") == ("pl", "ay", "_")

    def test_single_char_word(self):
        vocab = make_vocab({"a"})
        assert segment(vocab, "a") == ("a", "_")

    def test_fused_form(self, toy_vocab):
        assert segment(toy_vocab, "player", fused=True) == ("pl", "ay", "er_")

    def test_unsegmentable_character(self, toy_vocab):
        with pytest.raises(SegmentationError, match="position"):
            segment(toy_vocab, "play9")

    def test_empty_word(self, toy_vocab):
        with pytest.raises(SegmentationError):
            segment(toy_vocab, "")

    def test_word_with_delimiter(self, toy_vocab):
        with pytest.raises(SegmentationError):
            segment(toy_vocab, "pl_ay")

    @given(st.text(alphabet="abcd", min_size=1, max_size=12),
           st.sets(st.text(alphabet="abcd", min_size=2, max_size=3), max_size=10))
    @settings(max_examples=120, deadline=None)
    def test_concatenation_identity(self, word, extra):
        vocab = make_vocab(set("abcd") | extra)
        for fused in (False, True):
            pieces = segment(vocab, word, fused=fused)
            joined = "".join(p.rstrip(vocab.delimiter) for p in pieces)
            assert joined == word
            assert is_delimiter(vocab, pieces[-1])

    def test_deterministic(self, toy_vocab):
        assert segment(toy_vocab, "playground") == segment(toy_vocab, "playground")


class TestDelimiter:
    def test_standalone(self, toy_vocab):
        assert is_delimiter(toy_vocab, "_")

    def test_content_piece(self, toy_vocab):
        assert not is_delimiter(toy_vocab, "pl")

    def test_fused(self, toy_vocab):
        assert is_delimiter(toy_vocab, "er_")

    def test_empty(self, toy_vocab):
        assert not is_delimiter(toy_vocab, "")


class TestDetokenize:
    def test_round_trip_text(self, toy_vocab):
        text = "play call player"
        assert detokenize(toy_vocab, segment_text(toy_vocab, text)) == text

    def test_fused_tokens(self, toy_vocab):
        assert detokenize(toy_vocab, ["pl", "ay", "er_", "ca", "ll_"]) == "player call"

    def test_unterminated_tail_becomes_word(self, toy_vocab):
        assert detokenize(toy_vocab, ["pl", "ay"]) == "play"


class TestVocabValidation:
    def test_uncovered_character_rejected(self):
        with pytest.raises(ValueError, match="single-character"):
            make_vocab({"ab", "a"})

    def test_delimiter_inside_piece_rejected(self):
        with pytest.raises(ValueError, match="delimiter"):
            make_vocab({"a", "a_b"})

    def test_empty_piece_rejected(self):
        with pytest.raises(ValueError):
            make_vocab({"a", ""})

    def test_delimiter_as_piece_allowed(self):
        vocab = make_vocab({"a", "_"})
        assert segment(vocab, "a") == ("a", "_")


class TestVocabFiles:
    def test_basic_and_delimiter_directive(self):
        vocab = read_vocab(["#delimiter |", "# comment", "a", "b", "ab"])
        assert vocab.delimiter == "|"
        assert segment(vocab, "ab") == ("ab", "|")

    def test_empty_file(self):
        with pytest.raises(InputFormatError):
            read_vocab(["# nothing"])

    def test_bad_directive(self):
        with pytest.raises(InputFormatError):
            read_vocab(["#delimiter", "a"])
